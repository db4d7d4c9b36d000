use std::collections::VecDeque;

use super::CadGraph;

pub const DEFAULT_ROOT_TYPES: &[&str] = &["PRODUCT_DEFINITION"];

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: Vec<CadGraph>,
    /// Instance id of each component's root; empty when no root was found.
    pub roots: Vec<u64>,
    /// Set when no root type matched and the whole graph was returned.
    pub no_roots_found: bool,
}

/// Split a graph into one sub-graph per component root: each sub-graph
/// holds the nodes reachable from its root along directed edges. Sub-graphs
/// may overlap. Without any root the whole graph is returned as a single
/// component.
pub fn decompose_assembly(graph: &CadGraph, root_types: &[&str]) -> Decomposition {
    let mut adjacency = vec![Vec::new(); graph.node_count()];
    for &(s, t) in &graph.edges {
        adjacency[s].push(t);
    }
    let roots: Vec<usize> = graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| root_types.contains(&n.type_token.as_str()))
        .map(|(i, _)| i)
        .collect();
    if roots.is_empty() {
        log::warn!(
            "no component roots ({}) in {}; keeping whole graph",
            root_types.join(","),
            graph.source_path
        );
        return Decomposition {
            components: vec![graph.clone()],
            roots: vec![],
            no_roots_found: true,
        };
    }

    let components = roots
        .iter()
        .map(|&root| {
            let mut seen = vec![false; graph.node_count()];
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            while let Some(n) = queue.pop_front() {
                for &m in &adjacency[n] {
                    if !seen[m] {
                        seen[m] = true;
                        queue.push_back(m);
                    }
                }
            }
            induced(graph, &seen)
        })
        .collect();
    Decomposition {
        components,
        roots: roots.iter().map(|&r| graph.nodes[r].instance_id).collect(),
        no_roots_found: false,
    }
}

/// Sub-graph on the marked nodes, keeping parent node order.
fn induced(graph: &CadGraph, keep: &[bool]) -> CadGraph {
    let mut remap = vec![usize::MAX; graph.node_count()];
    let mut nodes = Vec::new();
    for (i, n) in graph.nodes.iter().enumerate() {
        if keep[i] {
            remap[i] = nodes.len();
            nodes.push(n.clone());
        }
    }
    let edges = graph
        .edges
        .iter()
        .filter(|(s, t)| keep[*s] && keep[*t])
        .map(|&(s, t)| (remap[s], remap[t]))
        .collect();
    CadGraph {
        nodes,
        edges,
        source_path: graph.source_path.clone(),
        label: graph.label,
    }
}
