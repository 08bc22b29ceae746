//! Articles, the corpus store with its temporal index, the JSONL corpus
//! format, sentence segmentation and the synthetic omission corpus.

mod segment;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use segment::{segment, split_sentences, SentenceList, DEFAULT_SENTENCE_BUDGET};
pub use synth::{synth_generate, synth_generate_with_truth, EventTruth, SynthSpec, SynthTruth};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate article id {0:?}")]
    DuplicateId(String),
    #[error("article {id:?}: {reason}")]
    InvalidArticle { id: String, reason: String },
    #[error("no sentence survives normalization")]
    EmptyText,
    #[error("sentence budget must be at least 1")]
    InvalidBudget,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Binary ground truth; misinformation is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Real = 0,
    Misinfo = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Label::Real),
            1 => Some(Label::Misinfo),
            _ => None,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Label::from_index(value as usize).ok_or_else(|| format!("label must be 0 or 1, got {value}"))
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Val,
    #[serde(rename = "test")]
    Test,
    #[serde(rename = "context-pool")]
    ContextPool,
}

impl Split {
    pub fn is_target(self) -> bool {
        self != Split::ContextPool
    }
}

/// One corpus line. `day` is an integer day index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub text: String,
    pub day: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub split: Split,
}

impl Article {
    pub fn validate(&self) -> Result<(), String> {
        if self.text.split_whitespace().next().is_none() {
            return Err("text is empty after whitespace normalization".into());
        }
        match (self.split, self.label) {
            (Split::ContextPool, Some(_)) => Err("context-pool articles carry no label".into()),
            (s, None) if s.is_target() => Err(format!("{s:?} article is missing its label")),
            _ => Ok(()),
        }
    }
}

/// Immutable collection of articles with a day index over the context pool.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    articles: Vec<Article>,
    by_id: HashMap<String, usize>,
    by_day: BTreeMap<i64, Vec<String>>,
}

impl CorpusStore {
    pub fn new(articles: Vec<Article>) -> Result<Self, CorpusError> {
        let mut store = CorpusStore::default();
        for article in articles {
            article
                .validate()
                .map_err(|reason| CorpusError::InvalidArticle { id: article.id.clone(), reason })?;
            store.insert(article)?;
        }
        store.finish();
        Ok(store)
    }

    fn insert(&mut self, article: Article) -> Result<(), CorpusError> {
        if self.by_id.contains_key(&article.id) {
            return Err(CorpusError::DuplicateId(article.id));
        }
        if article.split == Split::ContextPool {
            self.by_day.entry(article.day).or_default().push(article.id.clone());
        }
        self.by_id.insert(article.id.clone(), self.articles.len());
        self.articles.push(article);
        Ok(())
    }

    fn finish(&mut self) {
        for ids in self.by_day.values_mut() {
            ids.sort();
        }
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.by_id.get(id).map(|&i| &self.articles[i])
    }

    /// Articles in insertion order.
    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Article> {
        self.articles.iter().filter(move |a| a.split == split)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Article> {
        self.articles.iter().filter(|a| a.split.is_target())
    }

    pub fn context_pool(&self) -> impl Iterator<Item = &Article> {
        self.in_split(Split::ContextPool)
    }

    /// Context-pool ids with `day - delta <= timestamp < day`, ordered by
    /// (day, id).
    pub fn window(&self, day: i64, delta: i64) -> Vec<&str> {
        self.by_day
            .range(day.saturating_sub(delta)..day)
            .flat_map(|(_, ids)| ids.iter().map(String::as_str))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(writer);
        for article in &self.articles {
            serde_json::to_writer(&mut w, article).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        self.write_jsonl(File::create(path)?)
    }
}

/// Parses corpus JSONL; blank lines are skipped, line numbers are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<CorpusStore, CorpusError> {
    let mut store = CorpusStore::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
        article
            .validate()
            .map_err(|message| CorpusError::Parse { line: line_no, message })?;
        store.insert(article)?;
    }
    store.finish();
    Ok(store)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<CorpusStore, CorpusError> {
    parse_corpus(BufReader::new(File::open(path)?))
}
