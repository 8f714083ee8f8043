use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point {0} has a non-finite coordinate")]
    NonFiniteCoordinate(usize),

    #[error("invalid weight {value} at index {index}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("weights sum to zero")]
    ZeroTotalWeight,

    #[error("type label {label} at index {index} is out of range for {num_types} types")]
    TypeOutOfRange {
        index: usize,
        label: usize,
        num_types: usize,
    },

    #[error("type {0} has no demand points")]
    EmptyType(usize),

    #[error("invalid capacity: {0}")]
    InvalidCapacity(String),

    #[error("association matrix row {row} is not a probability distribution (sum {sum})")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("annealing parameter must be nonnegative, got {0}")]
    NegativeBeta(f64),

    #[error("free energy requires a positive annealing parameter, got {0}")]
    NonPositiveBeta(f64),

    #[error("typed associations require a dataset with type labels")]
    MissingTypes,

    #[error("cluster {0} has zero mass")]
    StarvedCluster(usize),

    #[error("cluster {cluster} cannot reach its capacity at beta = {beta}")]
    Infeasible { cluster: usize, beta: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {k} clusters for {n} demand points")]
    TooManyClusters { k: usize, n: usize },

    #[error("enumeration of {0} assignments exceeds the oracle limit")]
    InstanceTooLarge(f64),
}
