//! Dataset manifests, stratified splits, the synthetic corpus and
//! end-to-end experiments.

mod experiment;
mod manifest;
mod split;
mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

use crate::gnn::GnnError;
use crate::graph::GraphError;
use crate::retrieval::RetrievalError;
use crate::step::StepError;

pub use experiment::{
    load_corpus, run_bottleneck_ablation, run_classification, run_classification_experiment,
    run_pooling_ablation, run_retrieval_experiment, samples_for, Corpus, DatasetSummary,
    ExperimentConfig, ExperimentReport, RetrievalCell, RetrievalReport, TestSummary,
    TrainedExperiment,
};
pub use manifest::{resolve_workspace, DatasetManifest, ManifestEntry, WORKSPACE_ENV};
pub use split::{split_dataset, Split, SplitAssignment};
pub use synthetic::{generate_synthetic_corpus, ClassSpec, Template};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Step {
        path: PathBuf,
        #[source]
        source: StepError,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("class {class_id} has {count} model(s); at least 3 are needed to split")]
    ClassTooSmall { class_id: usize, count: usize },
    #[error("invalid corpus specification: {0}")]
    CorpusSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] GnnError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
