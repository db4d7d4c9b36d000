//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion over all of them. Tolerances are pinned below.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stepgraph::gnn::{init_params, ModelConfig, NormalizedAdjacency, Pooling};
use stepgraph::graph::{build_graph, read_graphml, write_graphml};
use stepgraph::pipeline::{
    generate_synthetic_corpus, load_corpus, run_classification, ClassSpec, Corpus,
    ExperimentConfig, ExperimentReport,
};
use stepgraph::retrieval::{average_precision, LayerTag, Metric};
use stepgraph::step::{write_step, StepFile};

const PARSE_BUDGET: Duration = Duration::from_millis(10);
const GRAD_SEEDS: u64 = 24;
const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(30);
const PERMUTATION_PAIRS: u64 = 100;
const PERMUTATION_TOLERANCE: f64 = 1e-9;
const ADJACENCY_SEEDS: u64 = 50;
const ADJACENCY_MAX_NODES: usize = 12;
const AP_LISTS: usize = 200;
const AP_MAX_LEN: usize = 50;
const AP_HAND_TOLERANCE: f64 = 1e-9;
const CORPUS_SEED: u64 = 1;
const MODELS_PER_CLASS: usize = 30;
const MIN_TEST_ACCURACY: f64 = 0.95;
const EPOCHS: usize = 50;
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
const ABLATION_SEEDS: u64 = 5;
const MIN_SOFTMAX_COSINE_MAP: f64 = 0.95;
const GRAPHML_ROUND_TRIPS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn parser_conformance() -> Outcome {
    let start = Instant::now();
    let file = StepFile::parse(common::DEMO_STP).unwrap();
    let graph = build_graph(&file, "demo.stp").graph;
    let elapsed = start.elapsed();
    let mut edges: Vec<(u64, u64)> = graph
        .edges
        .iter()
        .map(|&(s, t)| (graph.nodes[s].instance_id, graph.nodes[t].instance_id))
        .collect();
    edges.sort_unstable();
    // The listing's ten enumerated edges plus #18 PRODUCT_CONTEXT -> #12.
    let expected = vec![
        (11, 12),
        (13, 12),
        (14, 11),
        (14, 15),
        (15, 16),
        (16, 18),
        (17, 16),
        (18, 12),
        (19, 10),
        (19, 16),
        (19, 20),
    ];
    let pass = file.instances.len() == 11
        && graph.node_count() == 11
        && edges == expected
        && elapsed < PARSE_BUDGET;
    outcome(
        pass,
        format!(
            "{} instances, {} nodes, {} edges, {:?}",
            file.instances.len(),
            graph.node_count(),
            graph.edge_count(),
            elapsed
        ),
    )
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0, String::new());
    for seed in 0..GRAD_SEEDS {
        let e = common::worst_gradient_error(seed, Pooling::Attention, &[64, 32, 32], 32);
        if e.0 > worst.0 {
            worst = e;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 < GRAD_TOLERANCE && elapsed < GRAD_BUDGET,
        format!("{GRAD_SEEDS} seeds, worst rel error {:.2e} ({}), {elapsed:?}", worst.0, worst.1),
    )
}

fn permutation_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..PERMUTATION_PAIRS {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let n = rng.gen_range(1..=40);
        let (edges, x) = common::random_graph(&mut rng, n, 9);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (pe, px) = common::permute(&edges, &x, &perm);
        let mut model = init_params(&ModelConfig::new(9, 6), seed).unwrap();
        common::jitter_biases(&mut model, &mut rng);
        let a = model.forward(&NormalizedAdjacency::from_edges(n, &edges).unwrap(), &x).unwrap();
        let b = model.forward(&NormalizedAdjacency::from_edges(n, &pe).unwrap(), &px).unwrap();
        for (u, v) in a.logits.iter().zip(&b.logits) {
            worst = worst.max((u - v).abs());
        }
    }
    outcome(
        worst <= PERMUTATION_TOLERANCE,
        format!("{PERMUTATION_PAIRS} pairs, max logit difference {worst:.2e}"),
    )
}

fn adjacency_oracle() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    for seed in 0..ADJACENCY_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in 1..=ADJACENCY_MAX_NODES {
            let (edges, _) = common::random_graph(&mut rng, n, 2);
            let dense = NormalizedAdjacency::from_edges(n, &edges).unwrap().to_dense();
            let oracle = common::brute_force_adjacency(n, &edges);
            checked += 1;
            if (0..n).any(|i| (0..n).any(|j| dense.get(i, j) != oracle[i][j])) {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{checked} graphs, {mismatches} mismatches"))
}

fn ap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for _ in 0..AP_LISTS {
        let len = rng.gen_range(1..=AP_MAX_LEN);
        let p = rng.gen_range(0.0..1.0);
        let rel: Vec<bool> = (0..len).map(|_| rng.gen_bool(p)).collect();
        if average_precision(&rel) != common::brute_force_ap(&rel) {
            mismatches += 1;
        }
    }
    let hand = average_precision(&[true, false, true]);
    outcome(
        mismatches == 0 && (hand - 0.83333).abs() <= 1e-5 && (hand - 5.0 / 6.0).abs() <= AP_HAND_TOLERANCE,
        format!("{AP_LISTS} lists, {mismatches} mismatches, [1,0,1] -> {hand:.6}"),
    )
}

fn paper_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default().seeded(seed);
    cfg.train.epochs = EPOCHS;
    cfg
}

fn run(corpus: &Corpus, cfg: &ExperimentConfig) -> ExperimentReport {
    run_classification(corpus, cfg).unwrap().report
}

fn classification(corpus_dir: &Path) -> (Outcome, Option<(Corpus, ExperimentReport)>) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let result = single.install(|| {
        let manifest =
            generate_synthetic_corpus(&ClassSpec::defaults(), MODELS_PER_CLASS, CORPUS_SEED, corpus_dir)
                .unwrap();
        let corpus = load_corpus(&manifest, corpus_dir).unwrap();
        let report = run(&corpus, &paper_config(0));
        (corpus, report)
    });
    let elapsed = start.elapsed();
    let (corpus, report) = result;
    let acc = report.test.accuracy;
    let o = outcome(
        acc >= MIN_TEST_ACCURACY && report.history.len() == EPOCHS && elapsed < TRAIN_BUDGET,
        format!(
            "{} models, test accuracy {acc:.4} ({} test), {EPOCHS} epochs, {elapsed:.1?} on one thread",
            corpus.graphs.len(),
            report.dataset.test
        ),
    );
    (o, Some((corpus, report)))
}

fn ablation(corpus: &Corpus, seed0: &ExperimentReport) -> Outcome {
    let runs: Vec<(f64, f64, f64)> = (0..ABLATION_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let attention = if seed == 0 {
                seed0.test.accuracy
            } else {
                run(corpus, &paper_config(seed)).test.accuracy
            };
            let mean = run(
                corpus,
                &ExperimentConfig {
                    pooling: Pooling::Mean,
                    ..paper_config(seed)
                },
            )
            .test
            .accuracy;
            let narrow = run(
                corpus,
                &ExperimentConfig {
                    bottleneck: 8,
                    ..paper_config(seed)
                },
            )
            .test
            .accuracy;
            (attention, mean, narrow)
        })
        .collect();
    let k = runs.len() as f64;
    let attention = runs.iter().map(|r| r.0).sum::<f64>() / k;
    let mean = runs.iter().map(|r| r.1).sum::<f64>() / k;
    let narrow = runs.iter().map(|r| r.2).sum::<f64>() / k;
    outcome(
        attention >= mean && attention >= narrow,
        format!(
            "mean test accuracy over {ABLATION_SEEDS} seeds: attention/32 {attention:.4}, mean-pool/32 {mean:.4}, attention/8 {narrow:.4}"
        ),
    )
}

fn retrieval(report: &ExperimentReport) -> Outcome {
    let r = report.retrieval.as_ref().expect("retrieval ran");
    let reference = r.cell(Metric::Cosine, LayerTag::Softmax).map.unwrap_or(f64::NAN);
    let mut bad = Vec::new();
    for c in &r.cells {
        match c.map {
            Some(m) if (0.0..=1.0).contains(&m) => {}
            // Histogram intersection is undefined on layers with negative
            // activations; these two cells are reported as not applicable.
            None if c.metric == Metric::HistogramIntersection
                && matches!(c.layer, LayerTag::Fc1PreRelu | LayerTag::Fc2) => {}
            _ => bad.push(format!("{}/{}", c.metric, c.layer)),
        }
    }
    let computed = r.cells.iter().filter(|c| c.map.is_some()).count();
    outcome(
        reference >= MIN_SOFTMAX_COSINE_MAP && bad.is_empty() && r.cells.len() == 15,
        format!(
            "softmax/cosine mAP {reference:.4}; {computed}/15 cells computed, 2 not applicable; best {}/{} {:.4}{}{}",
            r.best_metric,
            r.best_layer,
            r.best_map,
            r.deviation.as_deref().map(|d| format!(" (deviation: {d})")).unwrap_or_default(),
            if bad.is_empty() { String::new() } else { format!("; invalid cells {bad:?}") }
        ),
    )
}

fn round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut graph_failures = 0;
    for _ in 0..GRAPHML_ROUND_TRIPS {
        let n = rng.gen_range(0..60);
        let e = rng.gen_range(0..120);
        let g = common::random_cad_graph(&mut rng, n, e);
        let mut buf = Vec::new();
        write_graphml(&g, &mut buf).unwrap();
        if read_graphml(std::str::from_utf8(&buf).unwrap()).ok().as_ref() != Some(&g) {
            graph_failures += 1;
        }
    }
    let mut fixtures: Vec<Vec<u8>> = vec![
        common::DEMO_STP.to_vec(),
        include_bytes!("fixtures/edge_cases.stp").to_vec(),
        include_bytes!("fixtures/dangling.stp").to_vec(),
    ];
    for spec in ClassSpec::defaults() {
        fixtures.push(spec.template.render("p", spec.max_repeat, &mut rng).into_bytes());
    }
    let step_failures = fixtures
        .iter()
        .filter(|bytes| {
            let a = StepFile::parse(bytes).unwrap();
            let b = StepFile::parse(&write_step(&a)).unwrap();
            a.instances != b.instances
        })
        .count();
    outcome(
        graph_failures == 0 && step_failures == 0,
        format!(
            "graphml {}/{GRAPHML_ROUND_TRIPS} identical, STEP {}/{} fixtures identical",
            GRAPHML_ROUND_TRIPS - graph_failures,
            fixtures.len() - step_failures,
            fixtures.len()
        ),
    )
}

fn determinism(corpus: &Corpus, first: &ExperimentReport, out: &Path) -> Outcome {
    let second = run(corpus, &paper_config(0));
    let a = first.write_outputs(&out.join("a")).unwrap();
    second.write_outputs(&out.join("b")).unwrap();
    let differing: Vec<String> = a
        .iter()
        .filter(|p| {
            let name = p.file_name().unwrap();
            std::fs::read(p).unwrap() != std::fs::read(out.join("b").join(name)).unwrap()
        })
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} output files compared, differing: {differing:?}", a.len()),
    )
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "parser conformance", guarded(parser_conformance)),
        (2, "gradient oracle", guarded(gradient_oracle)),
        (3, "permutation invariance", guarded(permutation_invariance)),
        (4, "adjacency oracle", guarded(adjacency_oracle)),
        (5, "AP/mAP oracle", guarded(ap_oracle)),
    ];
    let mut trained = None;
    let six = guarded(|| {
        let (o, t) = classification(&work.path().join("corpus"));
        trained = t;
        o
    });
    results.push((6, "desk-scale classification", six));
    let missing = || outcome(false, "skipped: classification run unavailable");
    match &trained {
        Some((corpus, report)) => {
            results.push((7, "ablation direction", guarded(|| ablation(corpus, report))));
            results.push((8, "desk-scale retrieval", guarded(|| retrieval(report))));
            results.push((9, "round-trips", guarded(round_trips)));
            results.push((
                10,
                "determinism",
                guarded(|| determinism(corpus, report, &work.path().join("out"))),
            ));
        }
        None => {
            results.push((7, "ablation direction", missing()));
            results.push((8, "desk-scale retrieval", missing()));
            results.push((9, "round-trips", guarded(round_trips)));
            results.push((10, "determinism", missing()));
        }
    }
    results.sort_by_key(|r| r.0);
    for (id, name, o) in &results {
        println!(
            "{} criterion {id:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
