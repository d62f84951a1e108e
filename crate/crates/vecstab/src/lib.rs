//! File formats, run configuration, a rayon-backed executor and the batch
//! pipeline behind the `vecstab` binary. All numerics live in `vecstab_core`.

pub mod config;
pub mod exec;
pub mod formats;
pub mod pipeline;

mod error;

pub use error::Error;
pub use vecstab_core as core;

pub type Result<T> = std::result::Result<T, Error>;
