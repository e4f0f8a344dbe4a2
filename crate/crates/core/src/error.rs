use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("row (s={state},a={action}) sums to {sum}")]
    TransitionRow { state: usize, action: usize, sum: f64 },

    #[error("negative transition probability P[{state}][{action}][{next}] = {value}")]
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("gamma out of (0,1): {0}")]
    Gamma(f64),

    #[error("initial distribution invalid: {0}")]
    InitialDistribution(String),

    #[error("cost g[{state}][{action}] = {cost} exceeds g_max = {g_max}")]
    CostBound {
        state: usize,
        action: usize,
        cost: f64,
        g_max: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("k must be at least 1")]
    ZeroHorizon,

    #[error("policy class would contain {size} policies, cap is {cap}")]
    ClassTooLarge { size: u128, cap: usize },

    #[error("policy class is empty")]
    EmptyClass,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid observation map: {0}")]
    InvalidObservationMap(String),

    #[error("invalid factorization: {0}")]
    InvalidFactorization(String),

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),

    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),

    #[error("unknown policy label '{0}'")]
    UnknownPolicy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
