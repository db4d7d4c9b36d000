//! Graph convolutional network for whole-graph classification.
//!
//! Architecture: GCN layers `H' = ReLU(Â H W)` over one-hot entity-type
//! features, a graph readout (attention by default), then two fully
//! connected layers and softmax. Gradients are derived by hand; see the
//! finite-difference tests under `tests/`.

mod adjacency;
mod checkpoint;
mod matrix;
mod model;
mod train;

use thiserror::Error;

pub use adjacency::NormalizedAdjacency;
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use matrix::{dot, outer, DenseMatrix};
pub use model::{
    argmax, attention_pool, degree_pool, gcn_forward, init_params, mean_pool, sigmoid, softmax,
    AttentionOutput, ForwardPass, GcnModel, GcnParams, ModelConfig, Pooling,
};
pub use train::{
    evaluate, metrics_csv, train, Adam, EpochMetrics, Evaluation, GraphSample, PlateauScheduler,
    TrainConfig,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("loss or parameters became non-finite")]
    NonFiniteLoss,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported checkpoint format '{0}'")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
