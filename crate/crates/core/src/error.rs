use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty series: {0}")]
    EmptySeries(String),
    #[error("numeric error in {location}: non-finite value")]
    Numeric { location: String },
    #[error("training error at step {step}: {detail}")]
    Training { step: usize, detail: String },
    #[error("horizon error: {0}")]
    Horizon(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(format!($($arg)*)))
    };
}
pub(crate) use bail;
