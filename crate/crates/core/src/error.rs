use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid step signal: {0}")]
    InvalidSignal(String),

    #[error("invalid source set: {0}")]
    InvalidSources(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{k}^{m} tuples exceed the enumeration limit of 2^24")]
    CombinatorialLimit { k: usize, m: usize },

    #[error("no tuple within tolerance of level {level}")]
    NoMatch { level: f64 },

    #[error("level {level} is matched by {first:?} and {second:?}")]
    Ambiguous {
        level: f64,
        first: Vec<f64>,
        second: Vec<f64>,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no N up to 2^62 satisfies the sample size conditions")]
    Unsatisfiable,

    #[error("no system interval lies inside a segment of the candidate")]
    NoEligibleInterval,

    #[error("no candidate m-box survives the reduction rules")]
    EmptyCandidates,

    #[error("confidence region is empty")]
    EmptyRegion,

    #[error("no step signal with levels in the level set satisfies the multiscale constraint")]
    Infeasible,

    #[error("level {0} is not in the level set")]
    UnknownLevel(f64),

    #[error("every threshold on the grid yields an empty region")]
    AllEmpty,

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
