//! TF-IDF context retrieval over the temporal window of a target.
//!
//! Weights use raw term counts and the smoothed idf
//! `ln((1 + N) / (1 + df)) + 1`; document vectors are L2-normalized, so the
//! cosine of two documents is the dot product of their vectors. Targets are
//! vectorized with the pool statistics and never contribute to `df`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, CorpusStore};
use crate::text::tokenize;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_WINDOW_DAYS: i64 = 7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty pool")]
    EmptyPool,
}

/// Sparse vector with strictly increasing column indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector(Vec<(usize, f64)>);

impl SparseVector {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.0.len() && j < other.0.len() {
            let (ci, vi) = self.0[i];
            let (cj, vj) = other.0[j];
            match ci.cmp(&cj) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += vi * vj;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    doc_vectors: BTreeMap<String, SparseVector>,
    degenerate: Vec<String>,
}

impl TfIdfIndex {
    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn doc_vector(&self, id: &str) -> Option<&SparseVector> {
        self.doc_vectors.get(id)
    }

    pub fn len(&self) -> usize {
        self.doc_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_vectors.is_empty()
    }

    /// Pool documents without any indexable token; they map to the zero vector.
    pub fn degenerate_docs(&self) -> &[String] {
        &self.degenerate
    }

    /// L2-normalized TF-IDF vector of arbitrary text; out-of-vocabulary
    /// tokens are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        self.vectorize_tokens(&tokenize(text))
    }

    fn vectorize_tokens(&self, tokens: &[String]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokens {
            if let Some(&col) = self.vocabulary.get(token) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in entries.iter_mut() {
                *w /= norm;
            }
        }
        SparseVector(entries)
    }

    pub fn cosine_to(&self, query: &SparseVector, id: &str) -> Option<f64> {
        self.doc_vectors.get(id).map(|d| query.dot(d).clamp(0.0, 1.0))
    }
}

pub fn build_index<'a, I>(pool: I) -> Result<TfIdfIndex, RetrievalError>
where
    I: IntoIterator<Item = &'a Article>,
{
    let docs: Vec<(&str, Vec<String>)> = pool.into_iter().map(|a| (a.id.as_str(), tokenize(&a.text))).collect();
    if docs.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    let terms: BTreeSet<&str> = docs.iter().flat_map(|(_, t)| t.iter().map(String::as_str)).collect();
    let vocabulary: BTreeMap<String, usize> = terms.into_iter().enumerate().map(|(i, t)| (t.to_string(), i)).collect();

    let mut df = vec![0usize; vocabulary.len()];
    for (_, tokens) in &docs {
        let unique: BTreeSet<usize> = tokens.iter().map(|t| vocabulary[t]).collect();
        for col in unique {
            df[col] += 1;
        }
    }
    let n_docs = docs.len() as f64;
    let idf = df.iter().map(|&d| ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0).collect();

    let mut index = TfIdfIndex { vocabulary, idf, doc_vectors: BTreeMap::new(), degenerate: Vec::new() };
    for (id, tokens) in docs {
        if tokens.is_empty() {
            log::warn!("DegenerateDoc: article {id} has no indexable tokens");
            index.degenerate.push(id.to_string());
        }
        let vector = index.vectorize_tokens(&tokens);
        index.doc_vectors.insert(id.to_string(), vector);
    }
    Ok(index)
}

/// Builds the index over every context-pool article of `store`.
pub fn build_pool_index(store: &CorpusStore) -> Result<TfIdfIndex, RetrievalError> {
    build_index(store.context_pool())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub target_id: String,
    pub context_ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.context_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context_ids.is_empty()
    }
}

/// Top-`k` context articles from `[target.day - delta, target.day)` by cosine,
/// ties broken by ascending id. Returns fewer than `k` when the window is
/// short and an empty result when it is empty.
pub fn retrieve(target: &Article, store: &CorpusStore, index: &TfIdfIndex, k: usize, delta: i64) -> RetrievalResult {
    let query = index.vectorize(&target.text);
    let mut scored: Vec<(&str, f64)> = store
        .window(target.day, delta)
        .into_iter()
        .filter_map(|id| index.cosine_to(&query, id).map(|s| (id, s)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    scored.truncate(k);
    RetrievalResult {
        target_id: target.id.clone(),
        context_ids: scored.iter().map(|(id, _)| id.to_string()).collect(),
        scores: scored.iter().map(|(_, s)| *s).collect(),
    }
}

/// Runs [`retrieve`] for every target article in store order.
pub fn retrieve_all(store: &CorpusStore, index: &TfIdfIndex, k: usize, delta: i64) -> Vec<RetrievalResult> {
    store.targets().map(|t| retrieve(t, store, index, k, delta)).collect()
}
