//! Entity-instance graphs built from STEP files.
//!
//! Every DATA-section instance becomes a node labelled with its entity type;
//! every reference argument becomes a directed edge from the referencing
//! instance to the referenced one. Non-reference arguments are kept on the
//! node as raw Part 21 literals.

mod decompose;
mod graphml;
mod stats;
mod vocab;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::step::{Argument, EntityInstance, StepFile};

pub use decompose::{decompose_assembly, Decomposition, DEFAULT_ROOT_TYPES};
pub use graphml::{export_graphml, import_graphml, read_graphml, write_graphml};
pub use stats::{graph_stats, ClassStats, CorpusStats};
pub use vocab::{encode_features, EntityVocabulary, FeatureMatrix, OOV_TOKEN};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("malformed graphml: {0}")]
    MalformedGraphml(String),
    #[error("class {0} has no graphs")]
    EmptyClass(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub instance_id: u64,
    /// Entity type, or `+`-joined sorted types for complex instances.
    pub type_token: String,
    /// Non-reference argument leaves as Part 21 literals (`'text'`, `2.5`, `.T.`).
    pub attrs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CadGraph {
    pub nodes: Vec<GraphNode>,
    /// Directed (source, target) node indices; parallel edges are kept.
    pub edges: Vec<(usize, usize)>,
    pub source_path: String,
    pub label: Option<usize>,
}

impl CadGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|(s, _)| *s == node).count()
    }

    /// Node index by STEP instance id.
    pub fn index_of(&self, instance_id: u64) -> Option<usize> {
        self.nodes.iter().position(|n| n.instance_id == instance_id)
    }
}

/// Result of [`build_graph`].
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub graph: CadGraph,
    /// References whose target instance is missing; these produce no edge.
    pub dropped_references: usize,
}

pub fn type_token(inst: &EntityInstance) -> String {
    if inst.is_complex() {
        let mut names: Vec<&str> = inst.types().collect();
        names.sort_unstable();
        names.join("+")
    } else {
        inst.records[0].name.clone()
    }
}

fn collect_attrs(arg: &Argument, out: &mut Vec<String>) {
    match arg {
        Argument::Number { .. } | Argument::Text(_) | Argument::Enum(_) | Argument::Binary(_) => {
            let mut buf = Vec::new();
            crate::step::write_argument(&mut buf, arg);
            // Latin-1 decode keeps the literal byte-exact.
            out.push(buf.iter().map(|&b| b as char).collect());
        }
        Argument::List(items) => items.iter().for_each(|a| collect_attrs(a, out)),
        Argument::Typed(_, inner) => collect_attrs(inner, out),
        Argument::Reference(_) | Argument::Unset | Argument::Inherited => {}
    }
}

/// Convert a parsed file into a graph. Nodes are ordered by ascending
/// instance id; header records never become nodes.
pub fn build_graph(file: &StepFile, source_path: impl Into<String>) -> BuiltGraph {
    let mut ids: Vec<u64> = file.instances.keys().copied().collect();
    ids.sort_unstable();
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut nodes = Vec::with_capacity(ids.len());
    let mut edges = Vec::new();
    let mut dropped = 0;
    for (src, id) in ids.iter().enumerate() {
        let inst = &file.instances[id];
        let mut attrs = Vec::new();
        for record in &inst.records {
            for arg in &record.args {
                collect_attrs(arg, &mut attrs);
            }
        }
        nodes.push(GraphNode {
            instance_id: *id,
            type_token: type_token(inst),
            attrs,
        });
        for target in inst.references() {
            match index.get(&target) {
                Some(&dst) => edges.push((src, dst)),
                None => dropped += 1,
            }
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} dangling reference(s) while building graph");
    }
    BuiltGraph {
        graph: CadGraph {
            nodes,
            edges,
            source_path: source_path.into(),
            label: None,
        },
        dropped_references: dropped,
    }
}
