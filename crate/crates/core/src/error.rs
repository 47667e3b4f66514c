use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong length or dimensions.
    #[error("input shape error: {0}")]
    Shape(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// Parameters or configuration violate an invariant.
    #[error("configuration error: {0}")]
    Config(String),
    /// The equalizer system could not be factorized.
    #[error("numerical rank error: {0}")]
    NumericalRank(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
