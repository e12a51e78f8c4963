use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid dataset parameters: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("replacement index (agent {agent}, sample {sample}) out of range for {agents} agents x {samples} samples")]
    IndexOutOfRange {
        agent: usize,
        sample: usize,
        agents: usize,
        samples: usize,
    },

    #[error("non-finite value produced by adaptation step")]
    NonFiniteUpdate,

    #[error("diffusion diverged at iteration {iteration} (agent {agent}): non-finite iterate")]
    Divergence { iteration: usize, agent: usize },

    #[error("step size {step} at iteration {iteration} violates mu < 1/L_ww = {limit}")]
    StepSizeViolation {
        iteration: usize,
        step: f64,
        limit: f64,
    },

    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),

    #[error("degenerate smoothness constants: {0}")]
    DegenerateConstants(String),

    #[error("config error for `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
