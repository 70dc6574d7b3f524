use thiserror::Error;

/// Errors raised anywhere in the training and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index error: {0}")]
    Index(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("calibration error: target epsilon {target} unreachable for sigma in [{lo}, {hi}]")]
    Calibration { target: f64, lo: f64, hi: f64 },

    #[error("parse error at line {line}: {path}: {msg}")]
    Parse {
        line: usize,
        path: String,
        msg: String,
    },

    #[error("no records: {0}")]
    NoRecords(String),

    #[error("context overflow: prefix of {len} tokens does not fit context {context}")]
    ContextOverflow { len: usize, context: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: non-finite loss at step {step}")]
    Diverged { step: usize },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("output directory locked: {0}")]
    Locked(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether this error stems from user configuration (as opposed to a
    /// runtime failure). The CLI maps the two classes to different exit codes.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Usage(_) | Error::Calibration { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
