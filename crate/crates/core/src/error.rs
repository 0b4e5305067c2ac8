use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A computation left the representable range of `f64`.
    #[error("numeric range: {0}")]
    NumericRange(String),

    /// The oracle grid cannot represent the requested state faithfully.
    #[error("grid: {0}")]
    Grid(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by the numbers themselves rather than by the caller's setup.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericRange(_) | Error::Grid(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericRange(format!(
            "{what} produced a non-finite value: {values:?}"
        )))
    }
}
