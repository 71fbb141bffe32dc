//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spike unresolvable on grid: width {width} is below the smallest step {min_step}")]
    SpikeUnresolvable { width: f64, min_step: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("control value at interval {interval} is not a member of the control set")]
    ControlNotInSet { interval: usize },

    #[error("singular control increment {component} at interval {interval} is negative ({value})")]
    NegativeIncrement {
        interval: usize,
        component: usize,
        value: f64,
    },

    #[error("non-finite value in {context} (particle {particle}, step {step})")]
    NonFinite {
        context: String,
        particle: usize,
        step: usize,
    },

    #[error("coefficient `{coefficient}` returned a non-finite value at a probe point")]
    IllPosed { coefficient: String },

    #[error(
        "regression underdetermined: {particles} particles for a basis of size {basis}; \
         lower the degree or use more particles"
    )]
    RegressionUnderdetermined { particles: usize, basis: usize },

    #[error("seed mismatch: {0}")]
    SeedMismatch(String),

    #[error("problem is not scalar linear-quadratic: {0}")]
    NotLq(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
