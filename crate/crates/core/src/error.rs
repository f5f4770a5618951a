use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("all ensemble weights are zero")]
    DegenerateEnsemble,

    #[error("{}", match line { Some(l) => format!("line {l}: {message}"), None => message.clone() })]
    Config { line: Option<usize>, message: String },

    #[error("evaluator setup failed: {0}")]
    EvaluatorSetup(String),

    #[error("history line {line}: {reason}")]
    CorruptHistory { line: usize, reason: String },

    #[error("history has no run_meta record")]
    MissingRunMeta,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
