use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Unparseable numeric table; carries the 1-based (row, column) of the
    /// offending cell when known.
    #[error("malformed table at row {row} col {col}: {detail}")]
    MalformedTable { row: usize, col: usize, detail: String },

    #[error("insufficient rows: need at least {need}, have {have}")]
    InsufficientRows { need: usize, have: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("scaler mismatch: scaler covers {scaler} features, data has {data}")]
    ScalerMismatch { scaler: usize, data: usize },

    #[error("undefined correlation: zero variance on one side")]
    UndefinedCorrelation,

    #[error("no pairs: need at least 2 features, have {0}")]
    NoPairs(usize),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("insufficient batch for distribution comparison: {0} samples")]
    InsufficientBatch(usize),

    #[error("posterior undefined at step zero")]
    PosteriorAtStepZero,

    #[error("invalid diffusion step: {step} not in 0..{total}")]
    InvalidStep { step: usize, total: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    /// The call site supplies "for <metric>: <detail>" so the message
    /// reads "insufficient data for DA: ...".
    #[error("insufficient data {0}")]
    InsufficientData(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("malformed config: {0}")]
    MalformedConfig(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: String, detail: String },
}
