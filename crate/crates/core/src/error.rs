use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("item {item}, field `{field}`: {reason}")]
    Attribute {
        item: usize,
        field: String,
        reason: String,
    },
    #[error("item {0} has no attribute record")]
    MissingAttributes(usize),
    #[error("split: {0}")]
    Split(String),
    #[error("{primitive}: shape mismatch ({detail})")]
    Shape {
        primitive: &'static str,
        detail: String,
    },
    #[error("backward requires a scalar root, got length {0}")]
    NonScalarRoot(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("item {0} is not a training item; its co-occurrence embedding is undefined")]
    ColdItem(usize),
    #[error("user {0} is not a training user")]
    ColdUser(usize),
    #[error("no negative available: {0}")]
    NoNegative(String),
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("synthetic config: {0}")]
    Synthetic(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
}
