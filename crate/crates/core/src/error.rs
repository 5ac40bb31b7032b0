use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("self-loop at node {node}")]
    SelfLoop { node: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spectral bounds: {0}")]
    Spectrum(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("graph is not connected")]
    Disconnected,

    #[error("eta = {eta} lies outside the admissible range ({lo}, {hi})")]
    EtaOutOfRange { eta: f64, lo: f64, hi: f64 },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("refinement matrix has no unique normalized fixed point: {0}")]
    Cascade(String),

    #[error("{0}")]
    Expression(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable label for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::SelfLoop { .. } => "self_loop",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Spectrum(_) => "spectrum",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Disconnected => "disconnected",
            Error::EtaOutOfRange { .. } => "eta_out_of_range",
            Error::Singular(_) => "singular",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Cascade(_) => "cascade",
            Error::Expression(_) => "expression",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
