use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("layer `{layer}`: unknown layer kind `{kind}`")]
    UnknownLayerKind { layer: String, kind: String },
    #[error("layer `{layer}` references undeclared layer `{missing}`")]
    DanglingReference { layer: String, missing: String },
    #[error("duplicate layer id `{0}`")]
    DuplicateLayer(String),
    #[error("computation graph has a cycle through layer `{0}`")]
    Cycle(String),
    #[error("layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("layer `{layer}`: shape error: {reason}")]
    Shape { layer: String, reason: String },
    #[error("duplicate device id {0}")]
    DuplicateDevice(u32),
    #[error("device graph: {0}")]
    InvalidDevice(String),
    #[error("configuration needs {needed} devices but only {available} are available")]
    TooFewDevices { needed: usize, available: usize },
    #[error("partition index {index} out of range for total degree {total}")]
    PartitionOutOfRange { index: usize, total: usize },
    #[error("strategy has no configuration for layer `{0}`")]
    MissingLayer(String),
    #[error("strategy names unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("layer `{layer}`: configuration {config} is not valid for this layer")]
    ConfigNotInCatalog { layer: String, config: String },
    #[error("cost table shape mismatch: {0}")]
    TableShape(String),
    #[error("unknown model `{0}` (expected lenet5, alexnet, vgg16, inception_chain[:K])")]
    UnknownModel(String),
    #[error(
        "final graph has {k} nodes after eliminations, exceeding the bound of {bound}; graph is not reducible enough"
    )]
    KBoundExceeded { k: usize, bound: usize },
    #[error("strategy space has {size} candidates, exceeding the brute-force budget of {budget}")]
    BudgetExceeded { size: String, budget: u64 },
}

impl Error {
    /// Search-limit failures, as opposed to bad input.
    pub fn is_limit(&self) -> bool {
        matches!(self, Error::KBoundExceeded { .. } | Error::BudgetExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
