use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid under-resolves the profile: spacing {spacing:.4e} exceeds {limit:.4e} (need at least {required_points} points)")]
    Resolution {
        spacing: f64,
        limit: f64,
        required_points: usize,
    },

    #[error("numerical blowup at t = {time}")]
    Blowup { time: f64 },

    #[error("state outside the modulation basin: distance {distance:.3e} >= radius {radius:.3e}")]
    OutOfBasin { distance: f64, radius: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("checkpoint format error: file version {found}, supported version {expected}")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint corrupted: {0}")]
    Corruption(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
