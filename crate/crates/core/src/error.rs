use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GridError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("field has {found} values, grid expects {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite value at index {index} in {what}")]
    NonFinite { what: &'static str, index: usize },
    #[error("invalid norm parameters: {0}")]
    InvalidNorm(String),
}

/// Where a run stopped when a monitored quantity left the admissible range.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUpInfo {
    /// Index of the last step whose state was finite and below threshold.
    pub last_finite_step: usize,
    pub time: f64,
    /// Name of the diagnostic that crossed the threshold first.
    pub diagnostic: String,
    pub value: f64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoreError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("blow-up after step {} (t = {}): {} = {:e}", .0.last_finite_step, .0.time, .0.diagnostic, .0.value)]
    BlowUp(BlowUpInfo),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("coupled runs use different Wiener streams ({0} vs {1})")]
    MismatchedStreams(String, String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CoreError {
    fn from(e: std::io::Error) -> Self {
        CoreError::Io(e.to_string())
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
