use std::path::PathBuf;

use vecstab_core::certify::CertifyError;
use vecstab_core::lyap::LyapError;
use vecstab_core::model::ModelError;
use vecstab_core::poly::{ParseError, PolyError};
use vecstab_core::sim::SimError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("polynomial `{text}`: {source}")]
    Parse { text: String, source: ParseError },
    #[error("{0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lyap(#[from] LyapError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
