use alloc::string::String;

/// Failure modes shared by every stage of the toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or layouts disagree.
    #[error("structural error: {0}")]
    Structural(String),
    /// A numeric argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration or specification.
    #[error("configuration error: {0}")]
    Config(String),
    /// Too few samples for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// The training loss became non-finite.
    #[error("training diverged at epoch {epoch}: last finite loss {last_finite_loss}")]
    Diverged { epoch: usize, last_finite_loss: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
