#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stepgraph::gnn::{init_params, GcnModel, ModelConfig, NormalizedAdjacency, Pooling};
use stepgraph::graph::{CadGraph, FeatureMatrix, GraphNode};

pub const DEMO_STP: &[u8] = include_bytes!("../fixtures/demo.stp");

/// Random directed multigraph with `n` nodes and one-hot features over
/// `vocab` columns.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> (Vec<(usize, usize)>, FeatureMatrix) {
    let edge_count = rng.gen_range(0..=2 * n);
    let edges = (0..edge_count)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
        .collect();
    let hot = (0..n).map(|_| rng.gen_range(0..vocab)).collect();
    (edges, FeatureMatrix { hot, cols: vocab, oov_hits: 0 })
}

/// Replace every bias with small random values so their gradients are
/// exercised away from the all-zero initialization.
pub fn jitter_biases(model: &mut GcnModel, rng: &mut ChaCha8Rng) {
    for b in [&mut model.params.fc1_bias, &mut model.params.fc2_bias] {
        for v in b.as_mut_slice() {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
}

/// Relabel nodes: new node `i` is old node `perm[i]`.
pub fn permute(
    edges: &[(usize, usize)],
    x: &FeatureMatrix,
    perm: &[usize],
) -> (Vec<(usize, usize)>, FeatureMatrix) {
    let mut inverse = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let edges = edges.iter().map(|&(s, t)| (inverse[s], inverse[t])).collect();
    let hot = perm.iter().map(|&old| x.hot[old]).collect();
    (edges, FeatureMatrix { hot, cols: x.cols, oov_hits: x.oov_hits })
}

/// Entrywise `D̃^{-1/2}(A+I)D̃^{-1/2}` over dense matrices, written
/// independently of the sparse implementation.
pub fn brute_force_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0f64; n]; n];
    for &(s, t) in edges {
        if s != t {
            a[s][t] = 1.0;
            a[t][s] = 1.0;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let inv_sqrt: Vec<f64> = a
        .iter()
        .map(|row| 1.0 / row.iter().sum::<f64>().sqrt())
        .collect();
    (0..n)
        .map(|i| (0..n).map(|j| inv_sqrt[i] * a[i][j] * inv_sqrt[j]).collect())
        .collect()
}

/// Central finite-difference gradient of the loss for every parameter.
pub fn numeric_gradients(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    label: usize,
    eps: f64,
) -> Vec<Vec<f64>> {
    let mut probe = model.clone();
    let sizes: Vec<usize> = model.params.tensors().iter().map(|t| t.as_slice().len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (t, &len) in sizes.iter().enumerate() {
        let mut grads = Vec::with_capacity(len);
        for k in 0..len {
            let orig = probe.params.tensors()[t].as_slice()[k];
            probe.params.tensors_mut()[t].as_mut_slice()[k] = orig + eps;
            let plus = probe.loss(adj, x, label).unwrap();
            probe.params.tensors_mut()[t].as_mut_slice()[k] = orig - eps;
            let minus = probe.loss(adj, x, label).unwrap();
            probe.params.tensors_mut()[t].as_mut_slice()[k] = orig;
            grads.push((plus - minus) / (2.0 * eps));
        }
        out.push(grads);
    }
    out
}

/// Mean of precision@k over the ranks holding relevant items, by direct
/// summation; zero when nothing is relevant.
pub fn brute_force_ap(relevance: &[bool]) -> f64 {
    let total = relevance.iter().filter(|r| **r).count();
    if total == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 1..=relevance.len() {
        if relevance[k - 1] {
            let hits = relevance[..k].iter().filter(|r| **r).count();
            sum += hits as f64 / k as f64;
        }
    }
    sum / total as f64
}

/// Random labelled graph with awkward attribute text, for storage tests.
pub fn random_cad_graph(rng: &mut ChaCha8Rng, nodes: usize, edges: usize) -> CadGraph {
    const TYPES: &[&str] = &["CARTESIAN_POINT", "EDGE_CURVE", "A+B", "!USER", "PLANE"];
    const ATTRS: &[&str] = &["'x'", "1.5E-07", ".T.", "'a<b & \"c\"'", "'  spaced  '", "'\u{e9}'", "''"];
    let mut id = 0u64;
    let nodes = (0..nodes)
        .map(|_| GraphNode {
            instance_id: {
                id += rng.gen_range(1..4);
                id
            },
            type_token: TYPES[rng.gen_range(0..TYPES.len())].to_string(),
            attrs: (0..rng.gen_range(0..4))
                .map(|_| ATTRS[rng.gen_range(0..ATTRS.len())].to_string())
                .collect(),
        })
        .collect::<Vec<_>>();
    let n = nodes.len();
    let edges = if n == 0 {
        Vec::new()
    } else {
        (0..edges).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
    };
    CadGraph {
        nodes,
        edges,
        source_path: format!("models/{}.stp", rng.gen_range(0..1000)),
        label: if rng.gen_bool(0.5) { Some(rng.gen_range(0..6)) } else { None },
    }
}

/// Elementwise relative error with an absolute floor on the denominator,
/// so gradients that are zero in both routes do not divide by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Distance from the nearest ReLU kink a sample must keep: a central
/// difference with step 1e-5 moves pre-activations by far less, so it
/// never straddles the point where ReLU has no derivative.
pub const KINK_MARGIN: f64 = 1e-3;

/// Smallest |pre-activation| over every ReLU input of one forward pass.
pub fn kink_distance(model: &GcnModel, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> f64 {
    let pass = model.forward(adj, x).unwrap();
    pass.gcn_pre
        .iter()
        .flat_map(|z| z.as_slice().iter())
        .chain(&pass.fc1_pre)
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Largest analytic-vs-central-difference error over every parameter of a
/// randomly initialized model on a random 3-8 node graph, with the
/// offending tensor entry. Draws that land within `KINK_MARGIN` of a ReLU
/// kink are redrawn from the same stream.
pub fn worst_gradient_error(
    seed: u64,
    pooling: Pooling,
    gcn_dims: &[usize],
    bottleneck: usize,
) -> (f64, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ModelConfig::new(6, 4);
    cfg.gcn_dims = gcn_dims.to_vec();
    cfg.bottleneck = bottleneck;
    cfg.pooling = pooling;
    let (adj, x, model, label) = loop {
        let n = rng.gen_range(3..=8);
        let (edges, x) = random_graph(&mut rng, n, cfg.input_dim);
        let adj = NormalizedAdjacency::from_edges(n, &edges).unwrap();
        let mut model = init_params(&cfg, rng.gen()).unwrap();
        jitter_biases(&mut model, &mut rng);
        let label = rng.gen_range(0..cfg.num_classes);
        if kink_distance(&model, &adj, &x) >= KINK_MARGIN {
            break (adj, x, model, label);
        }
    };

    let (_, grads, _) = model.loss_and_grads(&adj, &x, label).unwrap();
    let numeric = numeric_gradients(&model, &adj, &x, label, 1e-5);
    let mut worst = (0.0, String::new());
    for ((name, g), fd) in grads.tensor_names().iter().zip(grads.tensors()).zip(&numeric) {
        for (k, (&a, &b)) in g.as_slice().iter().zip(fd).enumerate() {
            let err = relative_error(a, b);
            if err > worst.0 {
                worst = (err, format!("{name}[{k}] analytic {a} numeric {b}"));
            }
        }
    }
    worst
}
