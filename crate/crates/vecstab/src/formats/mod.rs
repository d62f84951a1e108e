//! On-disk formats. JSON files are pretty-printed with a trailing newline so
//! identical inputs give byte-identical files.

pub mod certificate;
pub mod lfs;
pub mod network;
pub mod report;
pub mod sdpa;
pub mod tables;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;
use vecstab_core::poly::{Polynomial, Universe, VarId};

use crate::{Error, Result};

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, to_json_string(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn parse_poly(u: &Arc<Universe>, text: &str) -> Result<Polynomial> {
    Polynomial::parse(u, text).map_err(|source| Error::Parse { text: text.to_string(), source })
}

pub(crate) fn lookup_vars(u: &Universe, names: &[String]) -> Result<Vec<VarId>> {
    names
        .iter()
        .map(|n| u.lookup(n).ok_or_else(|| Error::Format(format!("unknown variable `{n}`"))))
        .collect()
}

pub(crate) fn var_names(u: &Universe, vars: &[VarId]) -> Vec<String> {
    vars.iter().map(|&v| u.name(v).to_string()).collect()
}
