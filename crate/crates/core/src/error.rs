use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("stage {stage} exceeds budget {budget}")]
    BudgetExceeded { stage: u64, budget: u64 },

    /// A stage search ran out of budget; the payload is the partial result as JSON.
    #[error("{what}: search exhausted budget {budget} at step {step}")]
    Exhausted { what: &'static str, budget: u64, step: u64, partial: serde_json::Value },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("element {element} of C is not in A")]
    Containment { element: u64 },

    #[error("invalid s1 table: {0}")]
    InvalidS1(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("scenario failed validation:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    /// A runtime failure, tagged with the pipeline stage that raised it.
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage: stage.to_string(), source: Box::new(e) })
    }
}
