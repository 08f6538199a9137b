use thiserror::Error;

#[derive(Debug, Error)]
pub enum KacanovError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (curvature {curvature:e})")]
    Indefinite { curvature: f64 },

    #[error("{what} exceeded the cap of {cap} retries")]
    RetryCap { what: &'static str, cap: usize },

    #[error("model `{model}` does not provide {what}")]
    Capability { model: String, what: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl KacanovError {
    /// Process exit code used by the command line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            KacanovError::Config(_) | KacanovError::Argument(_) => 2,
            KacanovError::NotConverged { .. }
            | KacanovError::Indefinite { .. }
            | KacanovError::RetryCap { .. }
            | KacanovError::Capability { .. } => 3,
            KacanovError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, KacanovError>;
