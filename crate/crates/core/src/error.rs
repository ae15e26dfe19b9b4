use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure stopped before reaching its tolerance.
    /// `best` is the last estimate and `error` its estimated error.
    #[error("accuracy error: {what} (best estimate {best:e}, error estimate {error:e})")]
    Accuracy { what: String, best: f64, error: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iterate {iterate} diverged (non-finite values)")]
    Divergence { iterate: usize },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
