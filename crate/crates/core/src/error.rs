use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("scale {k} is above the feasibility cap {cap}")]
    UnsupportedScale { k: u32, cap: u32 },
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("parity violation at ({x},{y})")]
    Parity { x: i64, y: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Numeric code shared with the C ABI.
    pub fn code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Consistency(_) => 2,
            Error::Domain(_) => 3,
            Error::Precondition(_) => 4,
            Error::UnsupportedScale { .. } => 5,
            Error::OutOfRange(_) => 6,
            Error::Parity { .. } => 7,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 8,
        }
    }
}
