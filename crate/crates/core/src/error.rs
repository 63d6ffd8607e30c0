use thiserror::Error;

/// Failures raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Degenerate geometry, e.g. a receiver coincident with a transmitter.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A numerical routine lost positive-definiteness or produced non-finite values.
    #[error("numerical failure at epoch {epoch}: {reason}")]
    Numerical { epoch: usize, reason: String },

    /// An iterative estimator failed to converge.
    #[error("estimation failure: {0}")]
    Estimation(String),

    /// Not enough samples or history for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Geometry(_) | Error::InsufficientData(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
