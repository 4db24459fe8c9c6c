use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("accuracy error: {what} (estimate {estimate:.3e} above tolerance {tolerance:.3e})")]
    Accuracy {
        what: String,
        estimate: f64,
        tolerance: f64,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("blow-up at t = {t}: {detail}")]
    BlowUp { t: f64, detail: String },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("configuration error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
