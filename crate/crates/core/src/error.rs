use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported cell layout: B = {0} (supported: 1, 7)")]
    UnsupportedLayout(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("degenerate model covariance: {0}")]
    Degenerate(String),

    #[error("coordinate subproblem: {0}")]
    Subproblem(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("value {value} outside quantizer range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("malformed payload: {0}")]
    Payload(String),

    #[error("simplex iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("invalid LP: {0}")]
    InvalidLp(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
