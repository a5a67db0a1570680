use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("resolution error: grid has {nodes} nodes, need at least {required}")]
    Resolution { nodes: usize, required: usize },
    #[error("model error: {0}")]
    Model(String),
    #[error("interconnection error: plant has {plant} ports, controller has {controller}")]
    Interconnection { plant: usize, controller: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("signal spec error: {0}")]
    Spec(String),
    #[error("step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("condition setup error: {0}")]
    ConditionSetup(String),
}

pub type Result<T> = std::result::Result<T, Error>;
