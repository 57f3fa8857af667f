use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// The discretization does not resolve the pulses or the medium.
    #[error("unresolved grid: {0}")]
    Grid(String),

    /// The integrator produced a NaN or infinity.
    #[error("non-finite value in {stage} stage at z index {z_index}, tau index {t_index} (nz={nz}, nt={nt})")]
    NonFinite {
        stage: &'static str,
        z_index: usize,
        t_index: usize,
        nz: usize,
        nt: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Grid(_) => "grid",
            Error::NonFinite { .. } => "non_finite",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
