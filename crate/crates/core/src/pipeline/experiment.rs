use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{split_dataset, DatasetManifest, PipelineError, Split, SplitAssignment};
use crate::gnn::{
    evaluate, init_params, metrics_csv, train, EpochMetrics, GcnModel, GraphSample, ModelConfig,
    NormalizedAdjacency, Pooling, TrainConfig,
};
use crate::graph::{build_graph, encode_features, CadGraph, EntityVocabulary};
use crate::retrieval::{
    mean_average_precision, pr_curve_csv, precision_recall_curve, rank_query, FeatureVector,
    LayerTag, Metric, RetrievalError,
};
use crate::step::StepFile;
use crate::table::to_csv;

/// A manifest with every entry parsed into a labelled graph.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
    /// One graph per manifest entry, in manifest order.
    pub graphs: Vec<CadGraph>,
    pub dropped_references: usize,
}

/// Parse every manifest entry in parallel; output order follows the
/// manifest.
pub fn load_corpus(manifest: &DatasetManifest, root: &Path) -> Result<Corpus, PipelineError> {
    manifest.validate()?;
    let built = manifest
        .entries
        .par_iter()
        .map(|e| {
            let path = manifest.resolve(root, e);
            let bytes = std::fs::read(&path).map_err(|err| PipelineError::io(&path, err))?;
            let file = StepFile::parse(&bytes).map_err(|source| PipelineError::Step {
                path: path.clone(),
                source,
            })?;
            let mut built = build_graph(&file, e.path.clone());
            built.graph.label = Some(e.class_id);
            Ok(built)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let dropped_references = built.iter().map(|b| b.dropped_references).sum();
    Ok(Corpus {
        manifest: manifest.clone(),
        root: root.to_path_buf(),
        graphs: built.into_iter().map(|b| b.graph).collect(),
        dropped_references,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gcn_dims: Vec<usize>,
    pub bottleneck: usize,
    pub pooling: Pooling,
    pub train: TrainConfig,
    /// Seed of the stratified split; model initialization and batch order
    /// use `train.seed`.
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gcn_dims: vec![64, 32, 32],
            bottleneck: 32,
            pooling: Pooling::Attention,
            train: TrainConfig::default(),
            split_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Use one seed for the split, the initialization and batch order.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self.train.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub models: usize,
    pub classes: Vec<String>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub vocabulary_size: usize,
    /// Test-set nodes whose entity type is missing from the vocabulary.
    pub test_oov_hits: usize,
    pub dropped_references: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub loss: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCell {
    pub metric: Metric,
    pub layer: LayerTag,
    pub map: Option<f64>,
    /// Why `map` is absent, e.g. histogram intersection on a layer with
    /// negative activations.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: usize,
    pub corpus: usize,
    /// Metric-major order over `Metric::ALL` × `LayerTag::ALL`.
    pub cells: Vec<RetrievalCell>,
    pub best_metric: Metric,
    pub best_layer: LayerTag,
    pub best_map: f64,
    pub softmax_cosine_is_best: bool,
    /// Set when another cell beats softmax + cosine.
    pub deviation: Option<String>,
    /// Precision-recall points per class for the best cell.
    pub pr_curve: BTreeMap<usize, Vec<(f64, f64)>>,
}

impl RetrievalReport {
    pub fn cell(&self, metric: Metric, layer: LayerTag) -> &RetrievalCell {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.layer == layer)
            .expect("grid holds every metric and layer")
    }

    pub fn grid_csv(&self) -> String {
        let rows = self.cells.iter().map(|c| {
            vec![
                c.metric.to_string(),
                c.layer.to_string(),
                c.map.map(|m| m.to_string()).unwrap_or_default(),
                c.skipped.clone().unwrap_or_default(),
            ]
        });
        to_csv(&["metric", "layer", "map", "skipped"], rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub history: Vec<EpochMetrics>,
    pub test: TestSummary,
    pub retrieval: Option<RetrievalReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Write `report.json`, `metrics.csv` and, when retrieval ran,
    /// `retrieval_grid.csv` and `pr_curve.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut files = vec![
            ("report.json", self.to_json()),
            ("metrics.csv", metrics_csv(&self.history)),
        ];
        if let Some(r) = &self.retrieval {
            files.push(("retrieval_grid.csv", r.grid_csv()));
            files.push(("pr_curve.csv", pr_curve_csv(&r.pr_curve)));
        }
        files
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(|e| PipelineError::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// Report plus the artefacts needed to reuse the trained model.
#[derive(Debug, Clone)]
pub struct TrainedExperiment {
    pub report: ExperimentReport,
    pub model: GcnModel,
    pub vocabulary: EntityVocabulary,
    pub split: SplitAssignment,
}

pub fn samples_for(
    graphs: &[CadGraph],
    indices: &[usize],
    vocab: &EntityVocabulary,
) -> Result<Vec<GraphSample>, PipelineError> {
    indices
        .iter()
        .map(|&i| {
            let g = &graphs[i];
            Ok(GraphSample {
                adjacency: NormalizedAdjacency::from_graph(g)?,
                features: encode_features(g, vocab),
                label: g.label.ok_or_else(|| {
                    PipelineError::Manifest(format!("{} has no class label", g.source_path))
                })?,
            })
        })
        .collect()
}

/// Split, build the vocabulary from the train split, train, test and run
/// the retrieval grid (test queries against the train corpus).
pub fn run_classification(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<TrainedExperiment, PipelineError> {
    let split = match SplitAssignment::from_manifest(&corpus.manifest) {
        Some(s) => s,
        None => split_dataset(&corpus.manifest, cfg.split_seed)?,
    };
    let train_idx = split.indices(Split::Train);
    let val_idx = split.indices(Split::Val);
    let test_idx = split.indices(Split::Test);
    let vocabulary = EntityVocabulary::build(train_idx.iter().map(|&i| &corpus.graphs[i]))?;

    let model_cfg = ModelConfig {
        input_dim: vocabulary.len(),
        gcn_dims: cfg.gcn_dims.clone(),
        bottleneck: cfg.bottleneck,
        num_classes: corpus.manifest.num_classes(),
        pooling: cfg.pooling,
    };
    let mut model = init_params(&model_cfg, cfg.train.seed)?;
    let train_set = samples_for(&corpus.graphs, &train_idx, &vocabulary)?;
    let val_set = samples_for(&corpus.graphs, &val_idx, &vocabulary)?;
    let test_set = samples_for(&corpus.graphs, &test_idx, &vocabulary)?;

    let history = if cfg.train.epochs == 0 {
        Vec::new()
    } else {
        train(&mut model, &train_set, &val_set, &cfg.train)?
    };
    let eval = evaluate(&model, &test_set)?;
    let retrieval = if test_idx.is_empty() {
        None
    } else {
        Some(run_retrieval_experiment(&model, &vocabulary, corpus, &split)?)
    };
    let (train_n, val_n, test_n) = split.counts();
    let report = ExperimentReport {
        config: cfg.clone(),
        dataset: DatasetSummary {
            models: corpus.graphs.len(),
            classes: corpus.manifest.classes.clone(),
            train: train_n,
            val: val_n,
            test: test_n,
            vocabulary_size: vocabulary.len(),
            test_oov_hits: test_set.iter().map(|s| s.features.oov_hits).sum(),
            dropped_references: corpus.dropped_references,
        },
        history,
        test: TestSummary {
            loss: eval.loss,
            accuracy: eval.accuracy,
            macro_precision: eval.macro_precision,
            macro_recall: eval.macro_recall,
            confusion: eval.confusion,
        },
        retrieval,
    };
    Ok(TrainedExperiment {
        report,
        model,
        vocabulary,
        split,
    })
}

/// Load the manifest's files and run one classification experiment.
pub fn run_classification_experiment(
    manifest: &DatasetManifest,
    root: &Path,
    cfg: &ExperimentConfig,
) -> Result<TrainedExperiment, PipelineError> {
    run_classification(&load_corpus(manifest, root)?, cfg)
}

/// One report per bottleneck width, other settings as in `base`.
pub fn run_bottleneck_ablation(
    corpus: &Corpus,
    base: &ExperimentConfig,
    widths: &[usize],
) -> Result<Vec<ExperimentReport>, PipelineError> {
    widths
        .iter()
        .map(|&w| {
            let cfg = ExperimentConfig {
                bottleneck: w,
                ..base.clone()
            };
            Ok(run_classification(corpus, &cfg)?.report)
        })
        .collect()
}

/// One report per pooling readout, other settings as in `base`.
pub fn run_pooling_ablation(
    corpus: &Corpus,
    base: &ExperimentConfig,
) -> Result<Vec<ExperimentReport>, PipelineError> {
    [Pooling::Attention, Pooling::Mean, Pooling::DegreeSum]
        .into_iter()
        .map(|pooling| {
            let cfg = ExperimentConfig {
                pooling,
                ..base.clone()
            };
            Ok(run_classification(corpus, &cfg)?.report)
        })
        .collect()
}

fn layer_vectors(
    model: &GcnModel,
    vocab: &EntityVocabulary,
    graphs: &[CadGraph],
    indices: &[usize],
) -> Result<Vec<BTreeMap<LayerTag, FeatureVector>>, PipelineError> {
    indices
        .par_iter()
        .map(|&i| {
            let g = &graphs[i];
            let adj = NormalizedAdjacency::from_graph(g)?;
            let pass = model.forward(&adj, &encode_features(g, vocab))?;
            Ok(LayerTag::ALL
                .into_iter()
                .map(|layer| {
                    let fv = FeatureVector {
                        layer,
                        values: layer.read(&pass).to_vec(),
                        id: g.source_path.clone(),
                        label: g.label,
                    };
                    (layer, fv)
                })
                .collect())
        })
        .collect()
}

/// mAP for every metric × layer, test models querying the train models.
pub fn run_retrieval_experiment(
    model: &GcnModel,
    vocab: &EntityVocabulary,
    corpus: &Corpus,
    split: &SplitAssignment,
) -> Result<RetrievalReport, PipelineError> {
    let query_idx = split.indices(Split::Test);
    let corpus_idx = split.indices(Split::Train);
    if query_idx.is_empty() {
        return Err(RetrievalError::NoQueries.into());
    }
    let queries = layer_vectors(model, vocab, &corpus.graphs, &query_idx)?;
    let items = layer_vectors(model, vocab, &corpus.graphs, &corpus_idx)?;

    let mut cells = Vec::with_capacity(15);
    let mut best: Option<(Metric, LayerTag, f64, Vec<_>)> = None;
    for metric in Metric::ALL {
        for layer in LayerTag::ALL {
            let corpus_vecs: Vec<FeatureVector> = items.iter().map(|m| m[&layer].clone()).collect();
            let ranked = queries
                .par_iter()
                .map(|q| rank_query(&q[&layer], &corpus_vecs, metric))
                .collect::<Result<Vec<_>, _>>();
            match ranked {
                Ok(results) => {
                    let map = mean_average_precision(&results)?;
                    if best.as_ref().is_none_or(|b| map > b.2) {
                        best = Some((metric, layer, map, results));
                    }
                    cells.push(RetrievalCell {
                        metric,
                        layer,
                        map: Some(map),
                        skipped: None,
                    });
                }
                Err(e @ (RetrievalError::NegativeEntries | RetrievalError::ZeroVector)) => {
                    log::info!("retrieval cell {metric}/{layer} skipped: {e}");
                    cells.push(RetrievalCell {
                        metric,
                        layer,
                        map: None,
                        skipped: Some(e.to_string()),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    let (best_metric, best_layer, best_map, best_results) =
        best.ok_or(RetrievalError::NoQueries)?;
    let reference = cells
        .iter()
        .find(|c| c.metric == Metric::Cosine && c.layer == LayerTag::Softmax)
        .and_then(|c| c.map);
    let softmax_cosine_is_best = reference.is_some_and(|r| r >= best_map);
    let deviation = (!softmax_cosine_is_best).then(|| {
        format!(
            "softmax/cosine mAP {} is below {best_metric}/{best_layer} mAP {best_map}",
            reference.map_or_else(|| "n/a".to_string(), |r| r.to_string())
        )
    });
    Ok(RetrievalReport {
        queries: query_idx.len(),
        corpus: corpus_idx.len(),
        cells,
        best_metric,
        best_layer,
        best_map,
        softmax_cosine_is_best,
        deviation,
        pr_curve: precision_recall_curve(&best_results),
    })
}
