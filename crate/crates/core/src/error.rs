use thiserror::Error;

/// Crate-wide error type.
///
/// Fitting failures (separation, singular systems) are *not* errors: they are
/// reported through [`crate::fp::FPModel::converged`] so that a simulation run
/// never aborts on a hard replicate. Errors here are contract violations.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented invariant (bad probability, unsorted
    /// grid, missing field, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// A dataset file or dataset contents could not be used.
    #[error("data: {0}")]
    Data(String),

    /// Risk-ratio inference broke down for a specific arm.
    #[error("inference failed for arm {arm}: {why}")]
    Inference { arm: usize, why: String },

    /// The requested target cannot be reached on the supplied grid.
    #[error("insufficient range: target {target} unreachable, max smoothed power {max_power}")]
    InsufficientRange { target: f64, max_power: f64 },

    /// An internal numerical step failed in a way that cannot be attributed
    /// to a single replicate.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
