use thiserror::Error;

/// Errors raised by model construction, simulation and the runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("expression error at {pos}: {msg}")]
    Expr { pos: usize, msg: String },

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("rate must be strictly positive (got {value} at x = {x})")]
    NonPositiveRate { x: f64, value: f64 },

    #[error("rate bound violated at step {step}: f = {value} > f_max = {bound}")]
    RateBoundViolated { step: usize, value: f64, bound: f64 },

    #[error("Cauchy-Schwarz violation: kappa^2 = {value} at (x = {x}, y = {y})")]
    CauchySchwarz { x: f64, y: f64, value: f64 },

    #[error("non-finite state at step {step} (particle {particle})")]
    NonFinite { step: usize, particle: usize },

    #[error("divergence: check Lipschitz scale (gap {prev} -> {next} at iterate {iterate})")]
    Divergence { iterate: usize, prev: f64, next: f64 },

    #[error("not a constant-kernel model: psi depends on {0}")]
    NotConstantKernel(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that come from the dynamics themselves rather than from the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RateBoundViolated { .. }
                | Error::NonFinite { .. }
                | Error::CauchySchwarz { .. }
                | Error::Divergence { .. }
                | Error::NonPositiveRate { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
