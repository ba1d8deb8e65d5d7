use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Shapes or dimensions that do not line up.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Inputs outside the domain of the operation (non-finite values, empty data, ...).
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// The sampler could not start from the requested point.
    #[error("sampler initialization failed: {0}")]
    Initialization(String),
    /// Posterior draws without spread in some direction.
    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),
    #[error("singular Hessian: {0}")]
    SingularHessian(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A flat prior combined with a risk that stays bounded along some ray.
    #[error("improper posterior: {0}")]
    ImproperPosterior(String),
}

impl Error {
    /// `true` for failures that come from the numerics rather than from the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Initialization(_)
                | Error::DegeneratePosterior(_)
                | Error::SingularHessian(_)
                | Error::ImproperPosterior(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
