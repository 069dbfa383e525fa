use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid context space: {0}")]
    InvalidSpace(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{task}` expects {expected} context values, got {got}")]
    ArityMismatch { task: String, expected: usize, got: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("step called on a finished episode (step {step_count})")]
    EpisodeFinished { step_count: usize },
    #[error("simulation produced a non-finite state at step {0}")]
    Diverged(usize),
    #[error("invalid trainer settings: {0}")]
    InvalidTrainer(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("incomplete scores for method `{method}`: missing points {missing:?}")]
    IncompleteScores { method: String, missing: Vec<usize> },
    #[error("zero or invalid normalization anchor at point {0}")]
    ZeroBaseline(usize),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid budget plan: {0}")]
    InvalidPlan(String),
    #[error("mismatched profiles: {0}")]
    MismatchedProfiles(String),
    #[error("invalid config:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),
    #[error("malformed table: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
