use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no region of the decomposition accepts x = {0:?}")]
    NoRegion(Vec<f64>),

    #[error("invalid config: {key}: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("split `{0}` received no rows")]
    EmptySplit(&'static str),

    #[error("log_mean_exp of an empty list")]
    EmptyList,

    #[error("non-finite loss ({context})")]
    NonFinite { context: String },

    #[error("empty region")]
    EmptyRegion,

    #[error("too many parents for subset enumeration: d = {0} (max 12)")]
    TooManyParents(usize),

    #[error("region has {0} cells; exhaustive canonicality search is limited to 20")]
    RegionTooLarge(usize),

    #[error("regions do not partition the grid: {0}")]
    NotAPartition(String),

    #[error("slice of the region at the fixed coordinates is empty")]
    EmptySlice,

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("the CSI statement does not hold in the table")]
    CsiDoesNotHold,

    #[error("empty input")]
    EmptyInput,

    #[error("ROC needs both positive and negative labels (positives = {positives}, negatives = {negatives})")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("unknown campaign `{0}`")]
    UnknownCampaign(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl Error {
    pub fn invalid_config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { key: key.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Parse { path: path.into(), reason: reason.to_string() }
    }
}
