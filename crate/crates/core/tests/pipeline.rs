use std::collections::BTreeMap;
use std::path::Path;

use stepgraph::gnn::{Checkpoint, Pooling, TrainConfig};
use stepgraph::graph::build_graph;
use stepgraph::pipeline::{
    generate_synthetic_corpus, load_corpus, run_bottleneck_ablation, run_classification,
    run_pooling_ablation, split_dataset, ClassSpec, Corpus, DatasetManifest, ExperimentConfig,
    Split, Template,
};
use stepgraph::retrieval::{LayerTag, Metric};
use stepgraph::step::StepFile;

fn small_corpus(dir: &Path, per_class: usize) -> Corpus {
    let specs = vec![
        ClassSpec::new("block_chain", Template::BlockChain, 1, 2),
        ClassSpec::new("wheel", Template::Wheel, 2, 3),
        ClassSpec::new("pipe", Template::Pipe, 1, 2),
    ];
    let m = generate_synthetic_corpus(&specs, per_class, 4, dir).unwrap();
    load_corpus(&m, dir).unwrap()
}

fn quick_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        gcn_dims: vec![16, 8, 8],
        bottleneck: 8,
        train: TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
    .seeded(seed)
}

#[test]
fn generated_files_parse() {
    let dir = tempfile::tempdir().unwrap();
    let specs = &ClassSpec::defaults()[..2];
    let m = generate_synthetic_corpus(specs, 10, 1, dir.path()).unwrap();
    assert_eq!(m.entries.len(), 20);
    assert_eq!(DatasetManifest::load(dir.path().join("manifest.json")).unwrap(), m);
    for e in &m.entries {
        let bytes = std::fs::read(dir.path().join(&e.path)).unwrap();
        let f = StepFile::parse(&bytes).unwrap();
        assert!(f.validate_references().is_empty(), "{}", e.path);
        assert!(build_graph(&f, e.path.clone()).graph.node_count() > 0);
    }
}

#[test]
fn generator_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let specs = ClassSpec::defaults();
    let ma = generate_synthetic_corpus(&specs, 3, 9, a.path()).unwrap();
    let mb = generate_synthetic_corpus(&specs, 3, 9, b.path()).unwrap();
    assert_eq!(ma, mb);
    for e in &ma.entries {
        assert_eq!(
            std::fs::read(a.path().join(&e.path)).unwrap(),
            std::fs::read(b.path().join(&e.path)).unwrap()
        );
    }
}

#[test]
fn generator_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    let one = vec![ClassSpec::new("a", Template::Nut, 1, 2)];
    assert!(generate_synthetic_corpus(&one, 3, 0, dir.path()).is_err());
    let inverted = vec![
        ClassSpec::new("a", Template::Nut, 3, 2),
        ClassSpec::new("b", Template::Fan, 1, 2),
    ];
    assert!(generate_synthetic_corpus(&inverted, 3, 0, dir.path()).is_err());
}

// Node counts by template piece, counted from the entity list each piece
// writes:
//   product/context scaffolding 14, origin placement 4, shape
//   representation + definition link 2                         -> 20
//   colour styling: 7 shared + 1 presentation + 1 per solid     -> 8 + solids
//   block: 8 points, 8 vertices, 3 directions, 12 x (vector, line, edge),
//          6 x (4 oriented edges, loop, 5 for plane, bound, face),
//          shell + solid                                         -> 129
//   cylinder solid: side face 33, two caps 9 each, shell + solid -> 53
//   elliptic rod: two rims 8 each, seam 5, loop 5, sweep 3,
//          side bound + face 2, two caps 9 each, shell + solid   -> 51
fn expected_nodes(template: Template, solids: usize, styled: bool) -> usize {
    let styling = if styled { 8 + solids } else { 0 };
    match template {
        Template::BlockChain => 20 + 129 * solids + styling,
        Template::Wheel => 20 + 53 + 51 * (solids - 1) + styling,
        _ => unreachable!(),
    }
}

#[test]
fn chain_and_wheel_sizes_follow_template_counts() {
    let dir = tempfile::tempdir().unwrap();
    let specs = &ClassSpec::defaults()[..2];
    let m = generate_synthetic_corpus(specs, 20, 2, dir.path()).unwrap();
    let corpus = load_corpus(&m, dir.path()).unwrap();
    let mut sums: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (g, e) in corpus.graphs.iter().zip(&m.entries) {
        let count = |t: &str| g.nodes.iter().filter(|n| n.type_token == t).count();
        let solids = count("MANIFOLD_SOLID_BREP");
        let styled = count("STYLED_ITEM") > 0;
        let template = specs[e.class_id].template;
        assert_eq!(g.node_count(), expected_nodes(template, solids, styled), "{}", e.path);
        sums.entry(e.class_id).or_default().push(g.node_count());
    }
    let mean = |v: &Vec<usize>| v.iter().sum::<usize>() as f64 / v.len() as f64;
    assert!((mean(&sums[&0]) - mean(&sums[&1])).abs() > 50.0);
}

#[test]
fn split_is_disjoint_and_stratified_on_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 10);
    let s = split_dataset(&corpus.manifest, 3).unwrap();
    assert_eq!(s.tags.len(), 30);
    assert_eq!(s.counts(), (24, 3, 3));
    for class in 0..3 {
        let test = s
            .indices(Split::Test)
            .into_iter()
            .filter(|&i| corpus.manifest.entries[i].class_id == class)
            .count();
        assert_eq!(test, 1);
    }
}

#[test]
fn experiment_report_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 10);
    let run = run_classification(&corpus, &quick_config(1)).unwrap();
    let r = &run.report;
    assert_eq!(r.history.len(), 3);
    let total: usize = r.test.confusion.iter().flatten().sum();
    let trace: usize = (0..3).map(|k| r.test.confusion[k][k]).sum();
    assert_eq!(total, r.dataset.test);
    assert_eq!(r.test.accuracy, trace as f64 / total as f64);
    for (class, row) in r.test.confusion.iter().enumerate() {
        let expected = run
            .split
            .indices(Split::Test)
            .into_iter()
            .filter(|&i| corpus.manifest.entries[i].class_id == class)
            .count();
        assert_eq!(row.iter().sum::<usize>(), expected);
    }
    let retrieval = r.retrieval.as_ref().unwrap();
    assert_eq!(retrieval.cells.len(), 15);
    for c in &retrieval.cells {
        match c.map {
            Some(m) => assert!((0.0..=1.0).contains(&m)),
            None => assert!(matches!(c.layer, LayerTag::Fc1PreRelu | LayerTag::Fc2)),
        }
    }
    assert!(retrieval.cell(Metric::Cosine, LayerTag::Softmax).map.is_some());
    assert_eq!(r.dataset.vocabulary_size, run.vocabulary.len());
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(&dir.path().join("data"), 8);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = run_classification(&corpus, &quick_config(5)).unwrap().report;
    let b = run_classification(&corpus, &quick_config(5)).unwrap().report;
    let files_a = a.write_outputs(&out_a).unwrap();
    b.write_outputs(&out_b).unwrap();
    assert_eq!(files_a.len(), 4);
    for f in files_a {
        let name = f.file_name().unwrap();
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(out_b.join(name)).unwrap());
    }
    let c = run_classification(&corpus, &quick_config(6)).unwrap().report;
    assert_ne!(a.history, c.history);
}

#[test]
fn ablations_produce_one_report_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 6);
    let mut base = quick_config(2);
    base.train.epochs = 1;
    let widths = run_bottleneck_ablation(&corpus, &base, &[8, 16, 32]).unwrap();
    assert_eq!(
        widths.iter().map(|r| r.config.bottleneck).collect::<Vec<_>>(),
        vec![8, 16, 32]
    );
    let pools = run_pooling_ablation(&corpus, &base).unwrap();
    assert_eq!(
        pools.iter().map(|r| r.config.pooling).collect::<Vec<_>>(),
        vec![Pooling::Attention, Pooling::Mean, Pooling::DegreeSum]
    );
}

#[test]
fn manifest_split_tags_are_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = small_corpus(dir.path(), 5);
    let tags: Vec<Split> = (0..15)
        .map(|i| if i % 5 == 0 { Split::Test } else { Split::Train })
        .collect();
    for (e, t) in corpus.manifest.entries.iter_mut().zip(&tags) {
        e.split = Some(*t);
    }
    let run = run_classification(&corpus, &quick_config(0)).unwrap();
    assert_eq!(run.split.tags, tags);
    assert_eq!(run.report.dataset.test, 3);
}

#[test]
fn checkpoint_from_experiment_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 5);
    let cfg = quick_config(0);
    let run = run_classification(&corpus, &cfg).unwrap();
    let ckpt = Checkpoint::new(
        run.vocabulary.clone(),
        run.model.clone(),
        cfg.train.clone(),
        cfg.split_seed,
        corpus.manifest.classes.clone(),
    );
    let path = dir.path().join("model.json");
    ckpt.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
}

#[test]
fn missing_file_is_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path(), 3);
    std::fs::remove_file(dir.path().join(&corpus.manifest.entries[4].path)).unwrap();
    let err = load_corpus(&corpus.manifest, dir.path()).unwrap_err().to_string();
    assert!(err.contains(&corpus.manifest.entries[4].path), "{err}");
}
