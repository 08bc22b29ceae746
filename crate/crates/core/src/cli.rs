//! The `lcv` command line: one subcommand per pipeline stage.
//!
//! Every subcommand accepts `--config pipeline.json`. A flag given on the
//! command line wins over the config file, which wins over the built-in
//! default. Failures print one JSON object on stderr and exit with 2 (usage),
//! 3 (data) or 4 (provider or endpoint).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, synth_generate_with_truth, CorpusStore, Label, SentenceList, Split, SynthSpec};
use crate::eval::MetricReport;
use crate::graph::{load_bundle, save_bundle, HeteroGraph};
use crate::model::{load_checkpoint, Ablation, Model};
use crate::pipeline::{
    build_graphs, generate_relations, read_jsonl, retrieve_targets, run_experiment, segment_targets, split_graphs,
    write_json, write_jsonl, EncoderBackend, PipelineConfig, PipelineError, RelationBackend, RelationRecord,
};
use crate::retrieval::RetrievalResult;
use crate::trainer::evaluate;

#[derive(Debug, Parser)]
#[command(name = "lcv", version, about = "Omission-aware misinformation detection pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Pipeline config file (JSON); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic omission corpus.
    Synth(SynthArgs),
    /// Validate a corpus and optionally write its segmented targets.
    Ingest(IngestArgs),
    /// Retrieve top-K context articles for every target.
    Retrieve(RetrieveArgs),
    /// Generate one missing-context relation per (sentence, context) pair.
    Relations(RelationsArgs),
    /// Encode everything into a graph bundle.
    BuildGraphs(BuildGraphsArgs),
    /// Train one model per seed and keep the best checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on labelled graphs.
    Eval(EvalArgs),
    /// Emit class probabilities for every graph.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generator spec (JSON); missing fields take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub num_events: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the planted ground truth (JSONL, one event per line).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Only validate and print a summary.
    #[arg(long)]
    pub check: bool,
    /// Write segmented target sentences (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Maximum sentences kept per target.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Window length in days.
    #[arg(long)]
    pub delta: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RelationsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub retrievals: PathBuf,
    #[arg(long, value_parser = ["stub", "remote"])]
    pub provider: Option<String>,
    /// Relation cache (JSONL, append-only).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Maximum concurrent provider requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildGraphsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub retrievals: PathBuf,
    #[arg(long)]
    pub relations: PathBuf,
    #[arg(long, value_parser = ["hash", "remote"])]
    pub encoder: Option<String>,
    /// Embedding width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Coherence window.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Keep only targets of this split (train, val or test).
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub graphs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed; repeat for several runs.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// full, no_context, structural_edges or no_global_summary.
    #[arg(long)]
    pub ablation: Option<Ablation>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub graphs: PathBuf,
    /// Score only graphs of this split.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub graphs: PathBuf,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Stdout line that tolerates a closed pipe (`lcv predict | head`).
fn emit(line: impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    match &common.config {
        Some(path) => {
            let config = PipelineConfig::load(path)?;
            config.validate()?;
            Ok(config)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn corpus_path(flag: &Option<PathBuf>, config: &PipelineConfig) -> Result<PathBuf, PipelineError> {
    flag.clone()
        .or_else(|| config.corpus.clone())
        .ok_or_else(|| PipelineError::Config("no corpus given (--corpus or \"corpus\" in the config)".into()))
}

fn parse_split(s: &str) -> Result<Split, PipelineError> {
    serde_json::from_value(json!(s)).map_err(|_| PipelineError::Config(format!("unknown split {s:?}")))
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Io { path: path.into(), source })?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(path).map_err(|source| PipelineError::Io { path: path.into(), source })
}

fn load_store(path: &Path) -> Result<CorpusStore, PipelineError> {
    Ok(load_corpus(path)?)
}

fn segmented(store: &CorpusStore, budget: Option<usize>, config: &PipelineConfig) -> Result<Vec<SentenceList>, PipelineError> {
    segment_targets(store, budget.unwrap_or(config.sentence_budget))
}

#[derive(Serialize)]
struct SentenceRecord<'a> {
    id: &'a str,
    sentences: &'a [String],
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    p_real: f64,
    p_misinfo: f64,
    label: Label,
}

pub fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Relations(a) => relations(a),
        Command::BuildGraphs(a) => build(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Predict(a) => predict(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), PipelineError> {
    let mut spec: SynthSpec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.clone(), source })?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = a.num_events {
        spec.num_events = n;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (store, truth) = synth_generate_with_truth(&spec)?;
    store.save(&a.out)?;
    if let Some(path) = &a.truth {
        write_jsonl(path, &truth.events)?;
    }
    emit(json!({"articles": store.len(), "targets": store.targets().count(), "out": a.out}));
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<(), PipelineError> {
    let config = load_config(&a.common)?;
    let store = load_store(&corpus_path(&a.input, &config)?)?;
    let sentences = segmented(&store, a.budget, &config)?;
    let count = |s| store.in_split(s).count();
    emit(json!({
            "articles": store.len(),
            "train": count(Split::Train),
            "val": count(Split::Val),
            "test": count(Split::Test),
            "context_pool": count(Split::ContextPool),
            "sentences": sentences.iter().map(SentenceList::len).sum::<usize>(),
        })
    );
    if let (Some(out), false) = (&a.out, a.check) {
        let records: Vec<SentenceRecord> =
            sentences.iter().map(|s| SentenceRecord { id: &s.article_id, sentences: &s.sentences }).collect();
        write_jsonl(out, &records)?;
    }
    Ok(())
}

fn retrieve(a: RetrieveArgs) -> Result<(), PipelineError> {
    let mut config = load_config(&a.common)?;
    if let Some(k) = a.k {
        config.retrieval.top_k = k;
    }
    if let Some(d) = a.delta {
        config.retrieval.window_days = d;
    }
    if config.retrieval.top_k == 0 || config.retrieval.window_days < 1 {
        return Err(PipelineError::Config("--k and --delta must be at least 1".into()));
    }
    let store = load_store(&corpus_path(&a.corpus, &config)?)?;
    let results = retrieve_targets(&store, &config.retrieval)?;
    write_jsonl(&a.out, &results)?;
    emit(json!({"targets": results.len(), "out": a.out}));
    Ok(())
}

fn relations(a: RelationsArgs) -> Result<(), PipelineError> {
    let mut config = load_config(&a.common)?;
    if let Some(p) = &a.provider {
        config.providers.relation = if p == "remote" { RelationBackend::Remote } else { RelationBackend::Stub };
    }
    if a.cache.is_some() {
        config.cache = a.cache.clone();
    }
    if let Some(p) = a.parallelism {
        config.providers.parallelism = p.max(1);
    }
    let store = load_store(&corpus_path(&a.corpus, &config)?)?;
    let sentences = segmented(&store, a.budget, &config)?;
    let retrievals: Vec<RetrievalResult> = read_jsonl(&a.retrievals)?;
    let provider = config.relation_provider()?;
    let cached_before = provider.cache().len();
    let records = generate_relations(&store, &sentences, &retrievals, &provider, config.providers.parallelism)?;
    write_jsonl(&a.out, &records)?;
    let sentinels = records.iter().filter(|r| r.relation.is_sentinel()).count();
    emit(json!({
            "pairs": records.len(),
            "sentinels": sentinels,
            "new_cache_entries": provider.cache().len() - cached_before,
            "out": a.out,
        })
    );
    Ok(())
}

fn build(a: BuildGraphsArgs) -> Result<(), PipelineError> {
    let mut config = load_config(&a.common)?;
    if let Some(e) = &a.encoder {
        config.providers.encoder = if e == "remote" { EncoderBackend::Remote } else { EncoderBackend::Hash };
    }
    if let Some(dim) = a.dim {
        config.providers.embedding_dim = dim;
    }
    if let Some(w) = a.window {
        config.model.window = w;
    }
    let store = load_store(&corpus_path(&a.corpus, &config)?)?;
    let mut sentences = segmented(&store, a.budget, &config)?;
    if let Some(split) = &a.split {
        let split = parse_split(split)?;
        sentences.retain(|s| store.get(&s.article_id).is_some_and(|t| t.split == split));
    }
    let retrievals: Vec<RetrievalResult> = read_jsonl(&a.retrievals)?;
    let records: Vec<RelationRecord> = read_jsonl(&a.relations)?;
    let encoder = config.encoder()?;
    let graphs = build_graphs(&store, &sentences, &retrievals, &records, &encoder, config.model.window)?;
    save_bundle(&a.out, &graphs)?;
    emit(json!({"graphs": graphs.len(), "dim": config.providers.embedding_dim, "out": a.out}));
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), PipelineError> {
    let mut config = load_config(&a.common)?;
    let t = &mut config.train;
    if !a.seeds.is_empty() {
        t.seeds = a.seeds.clone();
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.max_epochs {
        t.max_epochs = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    } else if t.patience > t.max_epochs {
        log::info!("patience {} lowered to max_epochs {}", t.patience, t.max_epochs);
        t.patience = t.max_epochs;
    }
    let m = &mut config.model;
    if let Some(v) = a.hidden_dim {
        m.hidden_dim = v;
    }
    if let Some(v) = a.layers {
        m.layers = v;
    }
    if let Some(v) = a.dropout {
        m.dropout = v;
    }
    if let Some(v) = a.ablation {
        m.ablation = v;
    }
    let out = a
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| PipelineError::Config("no output directory (--out or \"out_dir\" in the config)".into()))?;

    let graphs = load_bundle(&a.graphs)?;
    let first: &HeteroGraph = graphs.first().ok_or_else(|| PipelineError::Inconsistent("graph bundle is empty".into()))?;
    config.model.input_dim = first.input_dim();
    config.providers.embedding_dim = first.input_dim();
    config.model.window = first.window;
    config.validate()?;
    if config.train.seeds.is_empty() {
        return Err(PipelineError::Config("at least one seed is required".into()));
    }

    let mut splits = split_graphs(graphs);
    let has_test = !splits.test.is_empty();
    if !has_test {
        // run_experiment scores a test split; fall back to validation when none was built.
        splits.test = splits.val.clone();
    }
    let experiment = run_experiment(&splits, &config.model, &config.train)?;

    create_dir(&out)?;
    write_json(out.join("config.json"), &config)?;
    let mut best_run = 0;
    for (idx, run) in experiment.runs.iter().enumerate() {
        let dir = out.join(format!("seed-{}", run.outcome.seed));
        create_dir(&dir)?;
        std::fs::write(dir.join("best.ckpt"), &run.outcome.best_checkpoint)
            .map_err(|source| PipelineError::Io { path: dir.join("best.ckpt"), source })?;
        write_jsonl(dir.join("history.jsonl"), &run.outcome.history)?;
        if run.outcome.best_val().macro_f1 > experiment.runs[best_run].outcome.best_val().macro_f1 {
            best_run = idx;
        }
    }
    let best = &experiment.runs[best_run];
    std::fs::write(out.join("best.ckpt"), &best.outcome.best_checkpoint)
        .map_err(|source| PipelineError::Io { path: out.join("best.ckpt"), source })?;
    write_jsonl(out.join("history.jsonl"), &best.outcome.history)?;

    let runs: Vec<_> = experiment
        .runs
        .iter()
        .map(|r| {
            json!({
                "seed": r.outcome.seed,
                "best_epoch": r.outcome.best_epoch,
                "epochs": r.outcome.history.len(),
                "val": r.outcome.best_val(),
                "test": if has_test { json!(r.test) } else { json!(null) },
            })
        })
        .collect();
    let summary = json!({
        "best_seed": best.outcome.seed,
        "runs": runs,
        "test_aggregate": if has_test { json!(experiment.aggregate) } else { json!(null) },
    });
    write_json(out.join("summary.json"), &summary)?;
    emit(&summary);
    Ok(())
}

fn select_split(graphs: Vec<HeteroGraph>, split: &Option<String>) -> Result<Vec<HeteroGraph>, PipelineError> {
    match split {
        Some(s) => {
            let split = parse_split(s)?;
            Ok(graphs.into_iter().filter(|g| g.split == Some(split)).collect())
        }
        None => Ok(graphs),
    }
}

fn eval_cmd(a: EvalArgs) -> Result<(), PipelineError> {
    let model = load_checkpoint(&a.ckpt, None)?;
    let graphs = select_split(load_bundle(&a.graphs)?, &a.split)?;
    if graphs.is_empty() {
        return Err(PipelineError::Inconsistent("no graphs to evaluate".into()));
    }
    let report: MetricReport = evaluate(&model, &graphs)?;
    let full = json!({
        "metrics": report,
        "model_config": model.config(),
        "checkpoint_sha256": file_digest(&a.ckpt)?,
        "graphs_sha256": file_digest(&a.graphs)?,
        "split": a.split,
    });
    write_json(&a.report, &full)?;
    emit(json!({"macro_f1": report.macro_f1, "accuracy": report.accuracy, "n": report.n_examples}));
    Ok(())
}

fn probabilities(model: &Model, graph: &HeteroGraph) -> Result<(f64, f64), PipelineError> {
    let [a, b] = model.logits(graph)?;
    let max = a.max(b);
    let (ea, eb) = ((a - max).exp(), (b - max).exp());
    Ok((ea / (ea + eb), eb / (ea + eb)))
}

fn predict(a: PredictArgs) -> Result<(), PipelineError> {
    let model = load_checkpoint(&a.ckpt, None)?;
    let graphs = load_bundle(&a.graphs)?;
    let mut rows = Vec::with_capacity(graphs.len());
    for g in &graphs {
        let (p_real, p_misinfo) = probabilities(&model, g)?;
        let label = if p_misinfo > p_real { Label::Misinfo } else { Label::Real };
        rows.push(Prediction { id: &g.target_id, p_real, p_misinfo, label });
    }
    match &a.out {
        Some(path) => write_jsonl(path, &rows)?,
        None => {
            for row in &rows {
                emit(serde_json::to_string(row).expect("serializable"));
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string(), "exit_code": code}));
            code
        }
    }
}
