use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid interval: lower bound exceeds upper bound at coordinate {0}")]
    InvalidInterval(usize),

    #[error("empty polytope")]
    EmptyPolytope,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("environment step {step} failed: {reason}")]
    EnvStep { step: usize, reason: String },

    #[error("reachability failed at step {step}: {source}")]
    Reach {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("gradient chain has zero length (colliding set {0} is not influenced by any action)")]
    ZeroLengthChain(usize),

    #[error("scenario generation gave up after {0} rejected samples")]
    ScenarioGeneration(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }
}
