//! Stage functions shared by the `lcv` binary, the examples and the tests.
//!
//! Every stage reads and writes plain files: corpus JSONL, sentence JSONL,
//! retrieval JSONL, relation JSONL, graph bundles, checkpoints and reports.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment, synth_generate, CorpusError, CorpusStore, SentenceList, Split, SynthSpec, DEFAULT_SENTENCE_BUDGET};
use crate::eval::{aggregate_runs, EvalError, MetricReport, RunAggregate};
use crate::graph::{build_graph, GraphError, HeteroGraph, RelationTable};
use crate::model::{ModelConfig, ModelError};
use crate::providers::{
    reconstruct_relation, CachedRelationProvider, EndpointConfig, HashEmbedder, ProviderError, RelationCache,
    RelationProvider, RelationText, RemoteEncoder, RemoteRelationProvider, StubRelationProvider, TextEncoder,
    DEFAULT_EMBEDDING_DIM,
};
use crate::retrieval::{build_pool_index, retrieve_all, RetrievalError, RetrievalResult, DEFAULT_TOP_K, DEFAULT_WINDOW_DAYS};
use crate::trainer::{evaluate, train, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

impl PipelineError {
    /// Process exit code: 2 usage, 3 data, 4 provider or endpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Provider(_) => 4,
            PipelineError::Graph(GraphError::Provider(_)) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Retrieval(_) => "retrieval",
            PipelineError::Provider(_) => "provider",
            PipelineError::Graph(_) => "graph",
            PipelineError::Model(_) => "model",
            PipelineError::Train(_) => "train",
            PipelineError::Eval(_) => "eval",
            PipelineError::Io { .. } => "io",
            PipelineError::Json { .. } => "json",
            PipelineError::Inconsistent(_) => "inconsistent",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationBackend {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderBackend {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub relation: RelationBackend,
    pub encoder: EncoderBackend,
    pub embedding_dim: usize,
    /// Upper bound on concurrent relation requests.
    pub parallelism: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            relation: RelationBackend::Stub,
            encoder: EncoderBackend::Hash,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub window_days: i64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K, window_days: DEFAULT_WINDOW_DAYS }
    }
}

/// One config surface for every stage. Fields missing from a config file
/// keep their defaults; command-line flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub providers: ProviderConfig,
    pub retrieval: RetrievalConfig,
    pub sentence_budget: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub out_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            cache: None,
            providers: ProviderConfig::default(),
            retrieval: RetrievalConfig::default(),
            sentence_budget: DEFAULT_SENTENCE_BUDGET,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            out_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.retrieval.top_k == 0 || self.retrieval.window_days < 1 {
            return Err(PipelineError::Config("retrieval needs top_k >= 1 and window_days >= 1".into()));
        }
        if self.sentence_budget == 0 || self.providers.parallelism == 0 || self.providers.embedding_dim == 0 {
            return Err(PipelineError::Config("sentence_budget, parallelism and embedding_dim must be positive".into()));
        }
        if self.model.input_dim != self.providers.embedding_dim {
            return Err(PipelineError::Config(format!(
                "model.input_dim {} differs from providers.embedding_dim {}",
                self.model.input_dim, self.providers.embedding_dim
            )));
        }
        self.model.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    /// Defaults scaled down for quick experiments on the synthetic corpus:
    /// 64-wide embeddings and hidden states, learning rate 3e-3.
    pub fn compact() -> Self {
        let mut config = Self::default();
        config.providers.embedding_dim = 64;
        config.model.input_dim = 64;
        config.model.hidden_dim = 64;
        config.train.lr = 3e-3;
        config
    }

    pub fn encoder(&self) -> Result<Box<dyn TextEncoder>, PipelineError> {
        Ok(match self.providers.encoder {
            EncoderBackend::Hash => Box::new(HashEmbedder::new(self.providers.embedding_dim)),
            EncoderBackend::Remote => {
                Box::new(RemoteEncoder::new(EndpointConfig::from_env()?, self.providers.embedding_dim))
            }
        })
    }

    /// The configured relation provider behind the configured cache (in-memory when no path is set).
    pub fn relation_provider(&self) -> Result<CachedRelationProvider<Box<dyn RelationProvider>>, PipelineError> {
        let inner: Box<dyn RelationProvider> = match self.providers.relation {
            RelationBackend::Stub => Box::new(StubRelationProvider::new()),
            RelationBackend::Remote => Box::new(RemoteRelationProvider::new(EndpointConfig::from_env()?)),
        };
        let cache = match &self.cache {
            Some(path) => RelationCache::open(path)?,
            None => RelationCache::in_memory(),
        };
        Ok(CachedRelationProvider::new(inner, std::sync::Arc::new(cache)))
    }
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| PipelineError::Io { path: path.into(), source: e.into() })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, PipelineError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| PipelineError::Json { path: path.into(), line: idx + 1, message: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Sentence lists for every target, in store order.
pub fn segment_targets(store: &CorpusStore, budget: usize) -> Result<Vec<SentenceList>, PipelineError> {
    Ok(store.targets().map(|t| segment(t, budget)).collect::<Result<_, _>>()?)
}

/// Top-K retrieval for every target, in store order.
pub fn retrieve_targets(store: &CorpusStore, config: &RetrievalConfig) -> Result<Vec<RetrievalResult>, PipelineError> {
    let index = build_pool_index(store)?;
    Ok(retrieve_all(store, &index, config.top_k, config.window_days))
}

/// One relation text per (target sentence, retrieved context) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub target_id: String,
    pub sentence: usize,
    pub context_id: String,
    pub relation: RelationText,
}

/// Generates relations for every cross-source pair with at most
/// `parallelism` requests in flight. Output order is target, sentence,
/// context rank.
pub fn generate_relations<P: RelationProvider + ?Sized>(
    store: &CorpusStore,
    sentences: &[SentenceList],
    retrievals: &[RetrievalResult],
    provider: &P,
    parallelism: usize,
) -> Result<Vec<RelationRecord>, PipelineError> {
    let by_target: HashMap<&str, &RetrievalResult> = retrievals.iter().map(|r| (r.target_id.as_str(), r)).collect();
    let mut jobs: Vec<(&str, usize, &str, &str, &str)> = Vec::new();
    for list in sentences {
        let retrieval = by_target
            .get(list.article_id.as_str())
            .ok_or_else(|| PipelineError::Inconsistent(format!("no retrieval for {}", list.article_id)))?;
        for (i, sentence) in list.sentences.iter().enumerate() {
            for context_id in &retrieval.context_ids {
                let context = store
                    .get(context_id)
                    .ok_or_else(|| PipelineError::Inconsistent(format!("unknown context {context_id}")))?;
                jobs.push((&list.article_id, i, context_id, sentence, &context.text));
            }
        }
    }
    let run = || {
        jobs.par_iter()
            .map(|&(target, i, context_id, sentence, text)| {
                Ok(RelationRecord {
                    target_id: target.to_string(),
                    sentence: i,
                    context_id: context_id.to_string(),
                    relation: reconstruct_relation(provider, sentence, text)?,
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(run)
}

/// Builds one graph per target from the stage outputs.
pub fn build_graphs<E: TextEncoder + ?Sized>(
    store: &CorpusStore,
    sentences: &[SentenceList],
    retrievals: &[RetrievalResult],
    relations: &[RelationRecord],
    encoder: &E,
    window: usize,
) -> Result<Vec<HeteroGraph>, PipelineError> {
    let by_target: HashMap<&str, &RetrievalResult> = retrievals.iter().map(|r| (r.target_id.as_str(), r)).collect();
    let mut tables: HashMap<&str, RelationTable> = HashMap::new();
    for rec in relations {
        let retrieval = by_target
            .get(rec.target_id.as_str())
            .ok_or_else(|| PipelineError::Inconsistent(format!("relation for unknown target {}", rec.target_id)))?;
        let j = retrieval.context_ids.iter().position(|c| *c == rec.context_id).ok_or_else(|| {
            PipelineError::Inconsistent(format!("{} was not retrieved for {}", rec.context_id, rec.target_id))
        })?;
        tables.entry(rec.target_id.as_str()).or_default().insert((rec.sentence, j), rec.relation.clone());
    }
    let empty = RelationTable::new();
    sentences
        .par_iter()
        .map(|list| {
            let target = store
                .get(&list.article_id)
                .ok_or_else(|| PipelineError::Inconsistent(format!("unknown target {}", list.article_id)))?;
            let retrieval = by_target
                .get(list.article_id.as_str())
                .ok_or_else(|| PipelineError::Inconsistent(format!("no retrieval for {}", list.article_id)))?;
            let table = tables.get(list.article_id.as_str()).unwrap_or(&empty);
            Ok(build_graph(target, list, retrieval, store, table, encoder, window)?)
        })
        .collect()
}

/// Runs segmentation, retrieval, relation generation and graph building
/// in memory.
pub fn prepare_graphs(store: &CorpusStore, config: &PipelineConfig) -> Result<Vec<HeteroGraph>, PipelineError> {
    config.validate()?;
    let sentences = segment_targets(store, config.sentence_budget)?;
    let retrievals = retrieve_targets(store, &config.retrieval)?;
    let provider = config.relation_provider()?;
    let relations = generate_relations(store, &sentences, &retrievals, &provider, config.providers.parallelism)?;
    let encoder = config.encoder()?;
    build_graphs(store, &sentences, &retrievals, &relations, &encoder, config.model.window)
}

/// Synthetic corpus plus its graphs.
pub fn prepare_synthetic(spec: &SynthSpec, config: &PipelineConfig) -> Result<(CorpusStore, Vec<HeteroGraph>), PipelineError> {
    let store = synth_generate(spec)?;
    let graphs = prepare_graphs(&store, config)?;
    Ok((store, graphs))
}

#[derive(Debug, Clone, Default)]
pub struct SplitGraphs {
    pub train: Vec<HeteroGraph>,
    pub val: Vec<HeteroGraph>,
    pub test: Vec<HeteroGraph>,
}

pub fn split_graphs(graphs: Vec<HeteroGraph>) -> SplitGraphs {
    let mut out = SplitGraphs::default();
    for g in graphs {
        match g.split {
            Some(Split::Train) => out.train.push(g),
            Some(Split::Val) => out.val.push(g),
            Some(Split::Test) => out.test.push(g),
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub outcome: TrainOutcome,
    pub test: MetricReport,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub runs: Vec<SeedRun>,
    /// `None` with fewer than two seeds.
    pub aggregate: Option<RunAggregate>,
}

impl Experiment {
    pub fn test_macro_f1(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test.macro_f1).collect()
    }
}

/// Trains once per seed and scores each best checkpoint on the test split.
pub fn run_experiment(splits: &SplitGraphs, model: &ModelConfig, train_config: &TrainConfig) -> Result<Experiment, PipelineError> {
    if splits.test.is_empty() {
        return Err(TrainError::EmptySplit("test").into());
    }
    let runs = train_config
        .seeds
        .iter()
        .map(|&seed| {
            let outcome = train(&splits.train, &splits.val, model, train_config, seed)?;
            let test = evaluate(&outcome.best, &splits.test)?;
            Ok(SeedRun { outcome, test })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let reports: Vec<MetricReport> = runs.iter().map(|r| r.test.clone()).collect();
    let aggregate = if reports.len() >= 2 { Some(aggregate_runs(&reports)?) } else { None };
    Ok(Experiment { runs, aggregate })
}
