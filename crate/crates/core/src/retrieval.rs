//! Feature extraction from a trained classifier and distance-based
//! retrieval with average-precision scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{dot, ForwardPass, GcnModel, GnnError, NormalizedAdjacency};
use crate::graph::{encode_features, CadGraph, EntityVocabulary};
use crate::table::to_csv;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unknown layer tag '{0}'")]
    UnknownLayerTag(String),
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("histogram intersection needs non-negative entries")]
    NegativeEntries,
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("query and corpus vectors come from different layers")]
    InconsistentLayerTags,
    #[error("retrieval corpus is empty")]
    EmptyCorpus,
    #[error("no queries to average")]
    NoQueries,
    #[error(transparent)]
    Model(#[from] GnnError),
}

/// Network layer a feature vector is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    /// Pooled graph embedding.
    Attention,
    Fc1PreRelu,
    Fc1PostRelu,
    /// Logits.
    Fc2,
    Softmax,
}

impl LayerTag {
    pub const ALL: [LayerTag; 5] = [
        LayerTag::Attention,
        LayerTag::Fc1PreRelu,
        LayerTag::Fc1PostRelu,
        LayerTag::Fc2,
        LayerTag::Softmax,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerTag::Attention => "attention",
            LayerTag::Fc1PreRelu => "fc1_pre_relu",
            LayerTag::Fc1PostRelu => "fc1_post_relu",
            LayerTag::Fc2 => "fc2",
            LayerTag::Softmax => "softmax",
        }
    }

    pub fn read(self, pass: &ForwardPass) -> &[f64] {
        match self {
            LayerTag::Attention => &pass.embedding,
            LayerTag::Fc1PreRelu => &pass.fc1_pre,
            LayerTag::Fc1PostRelu => &pass.fc1_post,
            LayerTag::Fc2 => &pass.logits,
            LayerTag::Softmax => &pass.probs,
        }
    }
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerTag {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerTag::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| RetrievalError::UnknownLayerTag(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Cosine,
    HistogramIntersection,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Euclidean, Metric::Cosine, Metric::HistogramIntersection];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::HistogramIntersection => "histogram_intersection",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| RetrievalError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub layer: LayerTag,
    pub values: Vec<f64>,
    /// Identifier of the source model, usually its path.
    pub id: String,
    pub label: Option<usize>,
}

/// Run the model on `graph` and read the `layer` activations.
pub fn extract_features(
    model: &GcnModel,
    vocab: &EntityVocabulary,
    graph: &CadGraph,
    layer: LayerTag,
) -> Result<FeatureVector, RetrievalError> {
    let adj = NormalizedAdjacency::from_graph(graph)?;
    let x = encode_features(graph, vocab);
    let pass = model.forward(&adj, &x)?;
    Ok(FeatureVector {
        layer,
        values: layer.read(&pass).to_vec(),
        id: graph.source_path.clone(),
        label: graph.label,
    })
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::LengthMismatch(a.len(), b.len()));
    }
    match metric {
        Metric::Euclidean => Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()),
        Metric::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(RetrievalError::ZeroVector);
            }
            Ok(1.0 - dot(a, b) / (na * nb))
        }
        Metric::HistogramIntersection => {
            if a.iter().chain(b).any(|v| *v < 0.0) {
                return Err(RetrievalError::NegativeEntries);
            }
            let overlap: f64 = a.iter().zip(b).map(|(x, y)| x.min(*y)).sum();
            let mass = a.iter().sum::<f64>().min(b.iter().sum());
            if mass == 0.0 {
                // At least one empty histogram: identical only if both are.
                let both_empty = a.iter().chain(b).all(|v| *v == 0.0);
                return Ok(if both_empty { 0.0 } else { 1.0 });
            }
            Ok(1.0 - overlap / mass)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub distance: f64,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRetrievalResult {
    pub query_id: String,
    pub query_label: Option<usize>,
    /// Ascending distance, ties broken by id.
    pub entries: Vec<RankedEntry>,
    pub average_precision: f64,
    /// Set when no corpus item shares the query's label (AP is then 0).
    pub no_relevant_items: bool,
}

/// Mean of precision@k over the ranks of relevant items; 0 when there are
/// none.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let total = relevance.iter().filter(|r| **r).count();
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

pub fn rank_query(
    query: &FeatureVector,
    corpus: &[FeatureVector],
    metric: Metric,
) -> Result<RankedRetrievalResult, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    if corpus.iter().any(|c| c.layer != query.layer) {
        return Err(RetrievalError::InconsistentLayerTags);
    }
    let mut entries = corpus
        .iter()
        .map(|c| {
            Ok(RankedEntry {
                id: c.id.clone(),
                distance: distance(&query.values, &c.values, metric)?,
                relevant: query.label.is_some() && c.label == query.label,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    entries.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    let relevance: Vec<bool> = entries.iter().map(|e| e.relevant).collect();
    let no_relevant_items = !relevance.contains(&true);
    if no_relevant_items {
        log::warn!("query {} has no relevant corpus items", query.id);
    }
    Ok(RankedRetrievalResult {
        query_id: query.id.clone(),
        query_label: query.label,
        average_precision: average_precision(&relevance),
        entries,
        no_relevant_items,
    })
}

pub fn mean_average_precision(results: &[RankedRetrievalResult]) -> Result<f64, RetrievalError> {
    if results.is_empty() {
        return Err(RetrievalError::NoQueries);
    }
    Ok(results.iter().map(|r| r.average_precision).sum::<f64>() / results.len() as f64)
}

/// Uninterpolated precision-recall points for each query class.
///
/// Queries of the same class are pooled rank by rank: at rank `k` the
/// point is (relevant retrieved / relevant total, relevant retrieved /
/// items retrieved), summed over the class's queries. Each curve stops at
/// the first rank reaching full recall. Queries without a label or without
/// relevant items are skipped.
pub fn precision_recall_curve(results: &[RankedRetrievalResult]) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut by_class: BTreeMap<usize, Vec<&RankedRetrievalResult>> = BTreeMap::new();
    for r in results {
        if let (Some(label), false) = (r.query_label, r.no_relevant_items) {
            by_class.entry(label).or_default().push(r);
        }
    }
    by_class
        .into_iter()
        .map(|(label, queries)| {
            let total: usize = queries
                .iter()
                .map(|q| q.entries.iter().filter(|e| e.relevant).count())
                .sum();
            let depth = queries.iter().map(|q| q.entries.len()).max().unwrap_or(0);
            let mut points = Vec::new();
            let mut hits = 0usize;
            let mut retrieved = 0usize;
            for k in 0..depth {
                for q in &queries {
                    if let Some(e) = q.entries.get(k) {
                        retrieved += 1;
                        hits += usize::from(e.relevant);
                    }
                }
                points.push((hits as f64 / total as f64, hits as f64 / retrieved as f64));
                if hits == total {
                    break;
                }
            }
            (label, points)
        })
        .collect()
}

pub fn pr_curve_csv(curves: &BTreeMap<usize, Vec<(f64, f64)>>) -> String {
    let rows = curves.iter().flat_map(|(class, points)| {
        points.iter().enumerate().map(move |(k, (r, p))| {
            vec![class.to_string(), (k + 1).to_string(), r.to_string(), p.to_string()]
        })
    });
    to_csv(&["class", "rank", "recall", "precision"], rows)
}

pub fn ranking_csv(result: &RankedRetrievalResult) -> String {
    let rows = result.entries.iter().enumerate().map(|(k, e)| {
        vec![
            result.query_id.clone(),
            (k + 1).to_string(),
            e.id.clone(),
            e.distance.to_string(),
            u8::from(e.relevant).to_string(),
        ]
    });
    to_csv(&["query", "rank", "id", "distance", "relevant"], rows)
}

/// One row per vector: id, label, then the values.
pub fn features_csv(vectors: &[FeatureVector]) -> String {
    let width = vectors.first().map_or(0, |v| v.values.len());
    let names: Vec<String> = (0..width).map(|i| format!("f{i}")).collect();
    let mut header = vec!["id", "label"];
    header.extend(names.iter().map(String::as_str));
    let rows = vectors.iter().map(|v| {
        let mut row = vec![v.id.clone(), v.label.map(|l| l.to_string()).unwrap_or_default()];
        row.extend(v.values.iter().map(|x| x.to_string()));
        row
    });
    to_csv(&header, rows)
}
