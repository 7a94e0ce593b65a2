use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid constellation order {0}: must be a perfect square >= 4")]
    InvalidConstellation(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("frame shape mismatch: expected {expected} samples, got {actual}")]
    FrameShape { expected: usize, actual: usize },

    #[error("invalid power profile: {0}")]
    InvalidProfile(String),

    #[error("CFO {0} is outside the fractional range [-0.5, 0.5)")]
    CfoOutOfRange(f64),

    #[error("lag subset is empty")]
    EmptySubset,

    #[error("lag {lag} outside [0, {max})")]
    LagOutOfRange { lag: usize, max: usize },

    #[error("subset size {lambda} outside [1, {max}]")]
    LambdaOutOfRange { lambda: usize, max: usize },

    #[error("lag correlation sum is exactly zero; angle undefined")]
    DegenerateCorrelation,

    #[error("tap vector has length {actual}, expected {expected}")]
    Shape { expected: usize, actual: usize },

    #[error("Fisher information is singular: lag {lag} has a non-positive denominator")]
    SingularFisher { lag: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Variant name, for reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConstellation(_) => "InvalidConstellation",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::FrameShape { .. } => "FrameShape",
            Error::InvalidProfile(_) => "InvalidProfile",
            Error::CfoOutOfRange(_) => "CfoOutOfRange",
            Error::EmptySubset => "EmptySubset",
            Error::LagOutOfRange { .. } => "LagOutOfRange",
            Error::LambdaOutOfRange { .. } => "LambdaOutOfRange",
            Error::DegenerateCorrelation => "DegenerateCorrelation",
            Error::Shape { .. } => "Shape",
            Error::SingularFisher { .. } => "SingularFisher",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
