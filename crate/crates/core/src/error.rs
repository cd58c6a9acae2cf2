use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the allocation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular instance: device {device} has zero direct gain")]
    SingularInstance { device: usize },

    #[error("log-approximation stalled at iteration {iteration}: objective fell from {previous} to {current}")]
    IterationStall {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("power allocation diverged after {sweeps} sweeps ({reason}); most expensive pinned device: {costliest:?}")]
    Divergence {
        sweeps: usize,
        reason: String,
        costliest: Option<usize>,
    },

    #[error("brute force refused: {tuples} association tuples exceed the cap of {cap}")]
    SearchTooLarge { tuples: u128, cap: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
