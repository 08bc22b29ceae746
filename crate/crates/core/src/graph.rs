//! Heterogeneous target/context graphs and their on-disk bundle.
//!
//! Nodes hold raw encoder outputs; the learnable projections live in the
//! model, so one bundle serves any number of training runs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::*;
use crate::corpus::{Article, CorpusStore, Label, SentenceList, Split};
use crate::providers::{Embedding, ProviderError, RelationText, TextEncoder, ARTICLE_TOKEN_LIMIT};
use crate::retrieval::RetrievalResult;
use crate::text::truncate_tokens;

pub const DEFAULT_COHERENCE_WINDOW: usize = 2;
pub const BUNDLE_MAGIC: &[u8; 8] = b"LCVGRAPH";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("no relation for sentence {0}, context {1}")]
    MissingRelation(usize, usize),
    #[error("context article {0:?} not found in the corpus")]
    UnknownContext(String),
    #[error("retrieval for {retrieval:?} does not match target {target:?}")]
    TargetMismatch { target: String, retrieval: String },
    #[error("graph {id:?} is malformed: {reason}")]
    Invalid { id: String, reason: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("bundle io error: {0}")]
    Io(#[from] io::Error),
    #[error("bundle version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

/// Relation attached to a cross edge: an encoded phrase, or the marker that
/// the model resolves to its learnable null relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RelationSlot {
    Null,
    Embedded(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEdge {
    pub sentence: usize,
    pub context: usize,
    pub relation: RelationSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub target_id: String,
    pub split: Option<Split>,
    pub label: Option<Label>,
    pub window: usize,
    pub context_ids: Vec<String>,
    pub sentence_nodes: Vec<Vec<f64>>,
    pub context_nodes: Vec<Vec<f64>>,
    pub doc_embedding: Vec<f64>,
    /// Undirected pairs `(i, k)` with `i < k`.
    pub coh_edges: Vec<(usize, usize)>,
    pub cross_edges: Vec<CrossEdge>,
}

/// All `(i, k)` with `i < k` and `k - i <= window`, in lexicographic order.
pub fn coherence_edges(n: usize, window: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n.min(i + window + 1)).map(move |k| (i, k))).collect()
}

impl HeteroGraph {
    pub fn num_sentences(&self) -> usize {
        self.sentence_nodes.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.context_nodes.len()
    }

    pub fn input_dim(&self) -> usize {
        self.doc_embedding.len()
    }

    /// Cross edge for `(sentence, context)`; edges are stored row-major.
    pub fn cross_edge(&self, sentence: usize, context: usize) -> &CrossEdge {
        &self.cross_edges[sentence * self.num_contexts() + context]
    }

    /// Same graph without context nodes or cross edges.
    pub fn without_context(&self) -> HeteroGraph {
        HeteroGraph { context_ids: Vec::new(), context_nodes: Vec::new(), cross_edges: Vec::new(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |reason: String| Err(GraphError::Invalid { id: self.target_id.clone(), reason });
        let d0 = self.input_dim();
        let (n, k) = (self.num_sentences(), self.num_contexts());
        if n == 0 {
            return bad("no sentence nodes".into());
        }
        if d0 == 0 {
            return bad("empty document embedding".into());
        }
        if self.sentence_nodes.iter().chain(&self.context_nodes).any(|v| v.len() != d0) {
            return bad("node embedding dimensions disagree".into());
        }
        if self.context_ids.len() != k {
            return bad("context id count differs from context nodes".into());
        }
        if self.coh_edges != coherence_edges(n, self.window) {
            return bad(format!("coherence edges do not match window {}", self.window));
        }
        if self.cross_edges.len() != n * k {
            return bad(format!("{} cross edges for {}x{} pairs", self.cross_edges.len(), n, k));
        }
        for (idx, e) in self.cross_edges.iter().enumerate() {
            if (e.sentence, e.context) != (idx / k.max(1), idx % k.max(1)) {
                return bad(format!("cross edge {idx} out of order"));
            }
            if let RelationSlot::Embedded(r) = &e.relation {
                if r.len() != d0 {
                    return bad("relation embedding dimension differs".into());
                }
            }
        }
        let all_finite = self
            .sentence_nodes
            .iter()
            .chain(&self.context_nodes)
            .chain(std::iter::once(&self.doc_embedding))
            .flatten()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite embedding value".into());
        }
        Ok(())
    }
}

/// Relation lookup keyed by (sentence index, retrieved-context index).
pub type RelationTable = HashMap<(usize, usize), RelationText>;

fn encode_values<E: TextEncoder + ?Sized>(encoder: &E, text: &str) -> Result<Vec<f64>, ProviderError> {
    encoder.encode(text).map(|Embedding { values, .. }| values)
}

/// Assembles the graph of one target.
///
/// Sentences, truncated context articles, the full target text and every
/// non-sentinel relation go through the same encoder; sentinel relations
/// become [`RelationSlot::Null`].
pub fn build_graph<E: TextEncoder + ?Sized>(
    target: &Article,
    sentences: &SentenceList,
    retrieval: &RetrievalResult,
    store: &CorpusStore,
    relations: &RelationTable,
    encoder: &E,
    window: usize,
) -> Result<HeteroGraph, GraphError> {
    if retrieval.target_id != target.id || sentences.article_id != target.id {
        return Err(GraphError::TargetMismatch { target: target.id.clone(), retrieval: retrieval.target_id.clone() });
    }
    let contexts: Vec<&Article> = retrieval
        .context_ids
        .iter()
        .map(|id| store.get(id).ok_or_else(|| GraphError::UnknownContext(id.clone())))
        .collect::<Result<_, _>>()?;

    let sentence_nodes = sentences
        .sentences
        .iter()
        .map(|s| encode_values(encoder, s))
        .collect::<Result<Vec<_>, _>>()?;
    let context_nodes = contexts
        .iter()
        .map(|c| encode_values(encoder, &truncate_tokens(&c.text, ARTICLE_TOKEN_LIMIT)))
        .collect::<Result<Vec<_>, _>>()?;
    let doc_embedding = encode_values(encoder, &target.text)?;

    let mut cross_edges = Vec::with_capacity(sentence_nodes.len() * contexts.len());
    for i in 0..sentence_nodes.len() {
        for j in 0..contexts.len() {
            let relation = match relations.get(&(i, j)).ok_or(GraphError::MissingRelation(i, j))? {
                RelationText::Sentinel { .. } => RelationSlot::Null,
                RelationText::Text { text } => RelationSlot::Embedded(encode_values(encoder, text)?),
            };
            cross_edges.push(CrossEdge { sentence: i, context: j, relation });
        }
    }

    let graph = HeteroGraph {
        target_id: target.id.clone(),
        split: Some(target.split),
        label: target.label,
        window,
        context_ids: retrieval.context_ids.clone(),
        coh_edges: coherence_edges(sentence_nodes.len(), window),
        sentence_nodes,
        context_nodes,
        doc_embedding,
        cross_edges,
    };
    graph.validate()?;
    Ok(graph)
}

fn split_code(split: Option<Split>) -> u8 {
    match split {
        Some(Split::Train) => 0,
        Some(Split::Val) => 1,
        Some(Split::Test) => 2,
        Some(Split::ContextPool) => 3,
        None => 255,
    }
}

fn split_from_code(code: u8) -> io::Result<Option<Split>> {
    Ok(match code {
        0 => Some(Split::Train),
        1 => Some(Split::Val),
        2 => Some(Split::Test),
        3 => Some(Split::ContextPool),
        255 => None,
        _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "bad split code")),
    })
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Writes graphs as a versioned binary bundle of little-endian float64 vectors.
pub fn write_bundle<W: Write>(writer: W, graphs: &[HeteroGraph]) -> Result<(), GraphError> {
    let mut w = BufWriter::new(writer);
    let d0 = graphs.first().map_or(0, HeteroGraph::input_dim);
    w.write_all(BUNDLE_MAGIC)?;
    write_u32(&mut w, BUNDLE_VERSION)?;
    write_len(&mut w, d0)?;
    write_len(&mut w, graphs.len())?;
    for g in graphs {
        g.validate()?;
        if g.input_dim() != d0 {
            return Err(GraphError::Invalid { id: g.target_id.clone(), reason: "bundle mixes embedding dimensions".into() });
        }
        write_str(&mut w, &g.target_id)?;
        write_u8(&mut w, split_code(g.split))?;
        write_u8(&mut w, g.label.map_or(255, |l| l as u8))?;
        write_len(&mut w, g.window)?;
        write_len(&mut w, g.num_sentences())?;
        write_len(&mut w, g.num_contexts())?;
        for id in &g.context_ids {
            write_str(&mut w, id)?;
        }
        for v in g.sentence_nodes.iter().chain(&g.context_nodes) {
            write_f64s(&mut w, v)?;
        }
        write_f64s(&mut w, &g.doc_embedding)?;
        for e in &g.cross_edges {
            match &e.relation {
                RelationSlot::Null => write_u8(&mut w, 0)?,
                RelationSlot::Embedded(r) => {
                    write_u8(&mut w, 1)?;
                    write_f64s(&mut w, r)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_bundle<R: Read>(reader: R) -> Result<Vec<HeteroGraph>, GraphError> {
    let mut r = BufReader::new(reader);
    expect_magic(&mut r, BUNDLE_MAGIC)?;
    let version = read_u32(&mut r)?;
    if version != BUNDLE_VERSION {
        return Err(GraphError::Version { found: version, expected: BUNDLE_VERSION });
    }
    let d0 = read_len(&mut r, 1 << 20)?;
    let count = read_len(&mut r, 1 << 32)?;
    let mut graphs = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let target_id = read_str(&mut r)?;
        let split = split_from_code(read_u8(&mut r)?)?;
        let label = match read_u8(&mut r)? {
            255 => None,
            code => Some(Label::from_index(code as usize).ok_or_else(|| invalid("bad label code"))?),
        };
        let window = read_len(&mut r, 1 << 16)?;
        let n = read_len(&mut r, 1 << 16)?;
        let k = read_len(&mut r, 1 << 16)?;
        let context_ids = (0..k).map(|_| read_str(&mut r)).collect::<io::Result<Vec<_>>>()?;
        let sentence_nodes = (0..n).map(|_| read_f64s(&mut r, d0)).collect::<io::Result<Vec<_>>>()?;
        let context_nodes = (0..k).map(|_| read_f64s(&mut r, d0)).collect::<io::Result<Vec<_>>>()?;
        let doc_embedding = read_f64s(&mut r, d0)?;
        let mut cross_edges = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                let relation = match read_u8(&mut r)? {
                    0 => RelationSlot::Null,
                    1 => RelationSlot::Embedded(read_f64s(&mut r, d0)?),
                    _ => return Err(invalid("bad relation flag").into()),
                };
                cross_edges.push(CrossEdge { sentence: i, context: j, relation });
            }
        }
        let graph = HeteroGraph {
            target_id,
            split,
            label,
            window,
            context_ids,
            coh_edges: coherence_edges(n, window),
            sentence_nodes,
            context_nodes,
            doc_embedding,
            cross_edges,
        };
        graph.validate()?;
        graphs.push(graph);
    }
    Ok(graphs)
}

pub fn save_bundle(path: impl AsRef<Path>, graphs: &[HeteroGraph]) -> Result<(), GraphError> {
    write_bundle(File::create(path)?, graphs)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<Vec<HeteroGraph>, GraphError> {
    read_bundle(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::segment;
    use crate::providers::HashEmbedder;

    fn fixture(n_sentences: usize, n_contexts: usize) -> (CorpusStore, Article, RetrievalResult) {
        let mut articles: Vec<Article> = (0..n_contexts)
            .map(|j| Article {
                id: format!("c{j}"),
                text: format!("context number {j} mentions budget cuts"),
                day: 1,
                label: None,
                split: Split::ContextPool,
            })
            .collect();
        let text: String = (0..n_sentences).map(|i| format!("Sentence {i} about the strike. ")).collect();
        let target = Article { id: "t".into(), text, day: 3, label: Some(Label::Misinfo), split: Split::Train };
        articles.push(target.clone());
        let retrieval = RetrievalResult {
            target_id: "t".into(),
            context_ids: (0..n_contexts).map(|j| format!("c{j}")).collect(),
            scores: vec![0.5; n_contexts],
        };
        (CorpusStore::new(articles).unwrap(), target, retrieval)
    }

    fn relations(n: usize, k: usize) -> RelationTable {
        let mut table = RelationTable::new();
        for i in 0..n {
            for j in 0..k {
                let rel = if (i + j) % 2 == 0 { RelationText::sentinel() } else { RelationText::phrase("budget cuts") };
                table.insert((i, j), rel);
            }
        }
        table
    }

    fn build(n: usize, k: usize, w: usize) -> HeteroGraph {
        let (store, target, retrieval) = fixture(n, k);
        let sentences = segment(&target, 10).unwrap();
        build_graph(&target, &sentences, &retrieval, &store, &relations(n, k), &HashEmbedder::new(16), w).unwrap()
    }

    #[test]
    fn coherence_window_instantiation() {
        assert_eq!(coherence_edges(3, 2), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(coherence_edges(4, 1), vec![(0, 1), (1, 2), (2, 3)]);
        assert!(coherence_edges(1, 2).is_empty());
    }

    #[test]
    fn edge_counts_over_small_cases() {
        for n in 1usize..=10 {
            for w in 1..=3 {
                let expected = (1..=w.min(n.saturating_sub(1))).map(|gap| n - gap).sum::<usize>();
                assert_eq!(coherence_edges(n, w).len(), expected);
                for &(i, k) in &coherence_edges(n, w) {
                    assert!(i < k && k - i <= w);
                }
            }
        }
        for n in 1..=4 {
            for k in 0..=3 {
                let g = build(n, k, 2);
                assert_eq!(g.cross_edges.len(), n * k);
                assert_eq!(g.num_contexts(), k);
            }
        }
    }

    #[test]
    fn degenerate_single_sentence_without_context() {
        let g = build(1, 0, 2);
        assert_eq!((g.num_sentences(), g.num_contexts(), g.coh_edges.len(), g.cross_edges.len()), (1, 0, 0, 0));
    }

    #[test]
    fn sentinels_become_null_slots() {
        let g = build(2, 3, 2);
        assert_eq!(g.cross_edges.len(), 6);
        assert_eq!(g.cross_edge(0, 0).relation, RelationSlot::Null);
        assert!(matches!(g.cross_edge(0, 1).relation, RelationSlot::Embedded(_)));
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(build(3, 2, 2), build(3, 2, 2));
    }

    #[test]
    fn missing_relation_is_reported() {
        let (store, target, retrieval) = fixture(2, 2);
        let sentences = segment(&target, 10).unwrap();
        let mut rel = relations(2, 2);
        rel.remove(&(1, 0));
        let err = build_graph(&target, &sentences, &retrieval, &store, &rel, &HashEmbedder::new(8), 2).unwrap_err();
        assert!(matches!(err, GraphError::MissingRelation(1, 0)));
    }

    #[test]
    fn bundle_round_trip_is_exact() {
        let graphs = vec![build(3, 2, 2), build(1, 0, 2), build(2, 3, 1)];
        let mut bytes = Vec::new();
        write_bundle(&mut bytes, &graphs).unwrap();
        assert_eq!(read_bundle(bytes.as_slice()).unwrap(), graphs);
        bytes[8] = 9;
        assert!(matches!(read_bundle(bytes.as_slice()), Err(GraphError::Version { found: 9, .. })));
    }
}
