use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("not a valid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("Kraus operators violate completeness (max deviation {0:.3e})")]
    KrausCompleteness(f64),

    #[error("noise rates give a growing coherence: {0}")]
    NonPhysicalRates(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("tomography design matrix is rank deficient (rank {rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("invalid decay curve: {0}")]
    InvalidCurve(String),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("fit did not converge after {iterations} iterations (max |gradient| {gradient:.3e})")]
    NotConverged { iterations: usize, gradient: f64 },

    #[error("missing decay curves for {0}")]
    MissingCurves(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
