use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use stepgraph::gnn::{evaluate, Checkpoint, Pooling, TrainConfig};
use stepgraph::graph::{build_graph, decompose_assembly, export_graphml, graph_stats, CadGraph, DEFAULT_ROOT_TYPES};
use stepgraph::pipeline::{
    generate_synthetic_corpus, load_corpus, resolve_workspace, run_classification,
    run_retrieval_experiment, samples_for, split_dataset, ClassSpec, Corpus, DatasetManifest,
    ExperimentConfig, Split, SplitAssignment, TestSummary, WORKSPACE_ENV,
};
use stepgraph::retrieval::{extract_features, features_csv, rank_query, ranking_csv, LayerTag, Metric};
use stepgraph::step::StepFile;
use stepgraph::table::to_csv;

#[derive(Debug, Parser)]
#[command(name = "stepgraph", version, about = "STEP files to graphs, GCN classification and retrieval")]
struct Cli {
    /// Seed for splits, initialization, batch order and generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Root that manifest paths are relative to (default: the manifest's directory).
    #[arg(long, global = true, env = WORKSPACE_ENV)]
    workspace: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert STEP files to GraphML.
    Convert(ConvertArgs),
    /// Per-class node-count statistics of a dataset.
    Stats(StatsArgs),
    /// Train a classifier and write a checkpoint and report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Retrieval grid, a single cell, or a ranked list for one query file.
    Retrieve(RetrieveArgs),
    /// Write one layer's activations for every model as CSV.
    ExportFeatures(ExportArgs),
    /// Write a synthetic labelled corpus with its manifest.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// A STEP file or a directory of them.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One GraphML per product definition instead of one per file.
    #[arg(long)]
    decompose: bool,
    /// Fail if any file fails to convert.
    #[arg(long)]
    strict: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    bottleneck: usize,
    #[arg(long, default_value = "attention", value_parser = parse_pooling)]
    pooling: Pooling,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Directory for report.json and CSVs (default: next to the checkpoint).
    #[arg(long)]
    report_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Write the JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
    #[arg(long, value_parser = parse_layer)]
    layer: Option<LayerTag>,
    /// Rank the train split against this STEP file.
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_layer)]
    layer: LayerTag,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    per_class: usize,
}

fn parse_pooling(s: &str) -> Result<Pooling, String> {
    s.parse()
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e| format!("{e}; expected one of {}", names(Metric::ALL)))
}

fn parse_layer(s: &str) -> Result<LayerTag, String> {
    s.parse().map_err(|e| format!("{e}; expected one of {}", names(LayerTag::ALL)))
}

fn names<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let summary = serde_json::json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{summary}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Stats(a) => stats(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Retrieve(a) => retrieve(cli, a),
        Command::ExportFeatures(a) => export_features(cli, a),
        Command::GenSynthetic(a) => {
            let m = generate_synthetic_corpus(&ClassSpec::defaults(), a.per_class, cli.seed, &a.out)?;
            println!("wrote {} models in {} classes to {}", m.entries.len(), m.classes.len(), a.out.display());
            Ok(())
        }
    }
}

fn is_step(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "stp" | "step" | "p21"))
}

fn step_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let dir = std::fs::read_dir(input).with_context(|| format!("cannot read {}", input.display()))?;
    let mut files = Vec::new();
    for entry in dir {
        let path = entry?.path();
        if path.is_file() && is_step(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug)]
struct Converted {
    input: PathBuf,
    nodes: usize,
    edges: usize,
    outputs: Vec<PathBuf>,
    error: Option<String>,
}

fn convert_one(path: &Path, out: &Path, decompose: bool) -> Result<(CadGraph, Vec<PathBuf>)> {
    let bytes = std::fs::read(path)?;
    let file = StepFile::parse(&bytes)?;
    let built = build_graph(&file, path.to_string_lossy());
    if built.dropped_references > 0 {
        log::warn!("{}: {} dangling references dropped", path.display(), built.dropped_references);
    }
    let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let parts = if decompose {
        let d = decompose_assembly(&built.graph, DEFAULT_ROOT_TYPES);
        if d.no_roots_found {
            log::info!("{}: no product definition, kept whole", path.display());
        }
        d.components
    } else {
        vec![built.graph.clone()]
    };
    let mut outputs = Vec::with_capacity(parts.len());
    for (k, part) in parts.iter().enumerate() {
        let name = if decompose { format!("{stem}_{k}.graphml") } else { format!("{stem}.graphml") };
        let target = out.join(name);
        export_graphml(part, &target)?;
        outputs.push(target);
    }
    Ok((built.graph, outputs))
}

fn convert(a: &ConvertArgs) -> Result<()> {
    let inputs = step_inputs(&a.input)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
    let results: Vec<Converted> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| match convert_one(path, &a.out, a.decompose) {
                Ok((g, outputs)) => Converted {
                    input: path.clone(),
                    nodes: g.node_count(),
                    edges: g.edge_count(),
                    outputs,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{}: {e:#}", path.display());
                    Converted {
                        input: path.clone(),
                        nodes: 0,
                        edges: 0,
                        outputs: Vec::new(),
                        error: Some(format!("{e:#}")),
                    }
                }
            })
            .collect()
    });

    let rows = results.iter().map(|r| {
        vec![
            r.input.display().to_string(),
            if r.error.is_some() { "failed" } else { "ok" }.to_string(),
            r.nodes.to_string(),
            r.edges.to_string(),
            r.outputs.len().to_string(),
            r.error.clone().unwrap_or_default(),
        ]
    });
    let log_path = a.out.join("conversion_log.csv");
    std::fs::write(&log_path, to_csv(&["input", "status", "nodes", "edges", "outputs", "error"], rows))
        .with_context(|| format!("cannot write {}", log_path.display()))?;

    let failed: Vec<&Converted> = results.iter().filter(|r| r.error.is_some()).collect();
    let written: usize = results.iter().map(|r| r.outputs.len()).sum();
    println!("converted {} of {} files, {written} graphml written", results.len() - failed.len(), results.len());
    if a.strict && !failed.is_empty() {
        bail!(
            "{} of {} files failed to convert, first: {}: {}",
            failed.len(),
            results.len(),
            failed[0].input.display(),
            failed[0].error.as_deref().unwrap_or_default()
        );
    }
    Ok(())
}

fn open_corpus(cli: &Cli, manifest_path: &Path) -> Result<Corpus> {
    let manifest = DatasetManifest::load(manifest_path)
        .with_context(|| format!("cannot load manifest {}", manifest_path.display()))?;
    let root = resolve_workspace(cli.workspace.as_deref(), manifest_path);
    Ok(load_corpus(&manifest, &root)?)
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn stats(cli: &Cli, a: &StatsArgs) -> Result<()> {
    let corpus = open_corpus(cli, &a.manifest)?;
    let samples: Vec<(usize, usize)> = corpus
        .graphs
        .iter()
        .zip(&corpus.manifest.entries)
        .map(|(g, e)| (e.class_id, g.node_count()))
        .collect();
    let s = graph_stats(&samples, corpus.manifest.num_classes())?;
    let name = |id: usize| corpus.manifest.classes.get(id).cloned().unwrap_or_default();
    println!("{:<5} {:<20} {:>7} {:>12} {:>14}", "class", "name", "models", "mean_nodes", "variance");
    for c in &s.classes {
        println!(
            "{:<5} {:<20} {:>7} {:>12.2} {:>14.2}",
            c.class_id,
            name(c.class_id),
            c.graphs,
            c.mean_nodes,
            c.variance_nodes
        );
    }
    println!("total {} models, {} nodes, mean {:.2}", s.total_graphs, s.total_nodes, s.mean_nodes);
    if let Some(out) = &a.out {
        let rows = s.classes.iter().map(|c| {
            vec![
                c.class_id.to_string(),
                name(c.class_id),
                c.graphs.to_string(),
                c.mean_nodes.to_string(),
                c.variance_nodes.to_string(),
            ]
        });
        let body = to_csv(&["class", "name", "models", "mean_nodes", "variance_nodes"], rows);
        std::fs::write(out, body).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(())
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let corpus = open_corpus(cli, &a.manifest)?;
    let cfg = ExperimentConfig {
        bottleneck: a.bottleneck,
        pooling: a.pooling,
        train: TrainConfig {
            epochs: a.epochs,
            learning_rate: a.lr,
            batch_size: a.batch_size,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
    .seeded(cli.seed);
    let run = run_classification(&corpus, &cfg)?;
    let ckpt = Checkpoint::new(
        run.vocabulary,
        run.model,
        cfg.train.clone(),
        cfg.split_seed,
        corpus.manifest.classes.clone(),
    );
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    ckpt.save(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let report_dir = match &a.report_dir {
        Some(d) => d.clone(),
        None => a.out.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    run.report.write_outputs(&report_dir)?;
    println!(
        "test accuracy {:.4} over {} models; checkpoint {}",
        run.report.test.accuracy,
        run.report.dataset.test,
        a.out.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path, corpus: &Corpus) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    let classes = corpus.manifest.num_classes();
    if ckpt.model.config.num_classes != classes {
        bail!(
            "checkpoint predicts {} classes but the manifest has {classes}",
            ckpt.model.config.num_classes
        );
    }
    Ok(ckpt)
}

fn split_for(corpus: &Corpus, ckpt: &Checkpoint) -> Result<SplitAssignment> {
    Ok(match SplitAssignment::from_manifest(&corpus.manifest) {
        Some(s) => s,
        None => split_dataset(&corpus.manifest, ckpt.split_seed)?,
    })
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    split: Split,
    models: usize,
    #[serde(flatten)]
    summary: TestSummary,
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let corpus = open_corpus(cli, &a.manifest)?;
    let ckpt = load_checkpoint(&a.ckpt, &corpus)?;
    let idx = split_for(&corpus, &ckpt)?.indices(a.split);
    if idx.is_empty() {
        bail!("the {:?} split is empty", a.split);
    }
    let samples = samples_for(&corpus.graphs, &idx, &ckpt.vocabulary)?;
    let e = evaluate(&ckpt.model, &samples)?;
    let out = EvalOutput {
        split: a.split,
        models: idx.len(),
        summary: TestSummary {
            loss: e.loss,
            accuracy: e.accuracy,
            macro_precision: e.macro_precision,
            macro_recall: e.macro_recall,
            confusion: e.confusion,
        },
    };
    let body = serde_json::to_string_pretty(&out)? + "\n";
    if let Some(p) = &a.out {
        std::fs::write(p, &body).with_context(|| format!("cannot write {}", p.display()))?;
    }
    print!("{body}");
    Ok(())
}

fn retrieve(cli: &Cli, a: &RetrieveArgs) -> Result<()> {
    let corpus = open_corpus(cli, &a.manifest)?;
    let ckpt = load_checkpoint(&a.ckpt, &corpus)?;
    let split = split_for(&corpus, &ckpt)?;

    if let Some(query_path) = &a.query {
        let metric = a.metric.unwrap_or(Metric::Cosine);
        let layer = a.layer.unwrap_or(LayerTag::Softmax);
        let bytes = std::fs::read(query_path).with_context(|| format!("cannot read {}", query_path.display()))?;
        let file = StepFile::parse(&bytes).with_context(|| format!("cannot parse {}", query_path.display()))?;
        let graph = build_graph(&file, query_path.to_string_lossy()).graph;
        let query = extract_features(&ckpt.model, &ckpt.vocabulary, &graph, layer)?;
        let items = split
            .indices(Split::Train)
            .into_iter()
            .map(|i| extract_features(&ckpt.model, &ckpt.vocabulary, &corpus.graphs[i], layer))
            .collect::<Result<Vec<_>, _>>()?;
        let ranked = rank_query(&query, &items, metric)?;
        return write_or_print(a.out.as_deref(), &ranking_csv(&ranked));
    }

    let report = run_retrieval_experiment(&ckpt.model, &ckpt.vocabulary, &corpus, &split)?;
    match (a.metric, a.layer) {
        (Some(metric), Some(layer)) => {
            let cell = report.cell(metric, layer);
            let body = serde_json::to_string_pretty(cell)? + "\n";
            write_or_print(a.out.as_deref(), &body)
        }
        (None, None) => write_or_print(a.out.as_deref(), &report.grid_csv()),
        _ => bail!("give both --metric and --layer for a single cell, or neither for the full grid"),
    }
}

fn export_features(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let corpus = open_corpus(cli, &a.manifest)?;
    let ckpt = load_checkpoint(&a.ckpt, &corpus)?;
    let vectors = corpus
        .graphs
        .iter()
        .map(|g| extract_features(&ckpt.model, &ckpt.vocabulary, g, a.layer))
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::write(&a.out, features_csv(&vectors)).with_context(|| format!("cannot write {}", a.out.display()))?;
    Ok(())
}
