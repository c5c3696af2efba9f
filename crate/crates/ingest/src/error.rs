use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("HTTP {status} for {url}")]
    Http { status: u16, url: String },

    #[error("rate limited at {url} after {attempts} attempts")]
    RateLimited { url: String, attempts: usize },

    #[error("{url} is not in the cache; rerun with live fetching enabled (--live)")]
    ColdCache { url: String },

    #[error("pagination for {url} stopped at page {got} of {expected}")]
    TruncatedPagination { url: String, got: usize, expected: usize },

    #[error("transport failure for {url}: {message}")]
    Transport { url: String, message: String },

    #[error("unexpected response from {url}: {message}")]
    Payload { url: String, message: String },

    #[error("invalid fetch spec at {field}: {message}")]
    InvalidSpec { field: String, message: String },

    #[error(transparent)]
    Core(#[from] relqual_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn spec(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            message: message.into(),
        }
    }
}
