//! Frozen text encoders and missing-context relation generators.
//!
//! Both come as a deterministic offline implementation and a client for a
//! remote endpoint. Relation outputs are cached per (sentence, article,
//! prompt version, provider) so generation happens once per pair.

mod cache;
mod hash;
mod normalize;
mod remote;
mod stub;

use serde::{Deserialize, Serialize};

pub use cache::{CachedRelationProvider, RelationCache, RelationCacheKey};
pub use hash::HashEmbedder;
pub use normalize::normalize_output;
pub use remote::{
    render_prompt, EndpointConfig, RemoteEncoder, RemoteRelationProvider, ENV_ENDPOINT_KEY, ENV_ENDPOINT_MODEL,
    ENV_ENDPOINT_URL, MAX_NEW_TOKENS, PROMPT_TEMPLATE,
};
pub use stub::StubRelationProvider;

use crate::text::truncate_tokens;

pub const DEFAULT_EMBEDDING_DIM: usize = 768;
pub const SENTENCE_TOKEN_LIMIT: usize = 32;
pub const ARTICLE_TOKEN_LIMIT: usize = 256;
pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("encoder returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("provider input is empty")]
    EmptyInput,
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("missing configuration: {0}")]
    Config(String),
    #[error("cache io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache line {line}: {message}")]
    CacheParse { line: usize, message: String },
}

/// Output of a frozen text encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub source: String,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A reconstructed missing-context phrase, or the explicit "nothing missing"
/// state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RelationText {
    Sentinel {
        #[serde(with = "sentinel_flag")]
        sentinel: (),
    },
    Text { text: String },
}

mod sentinel_flag {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(_: &(), s: S) -> Result<S::Ok, S::Error> {
        s.serialize_bool(true)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        if bool::deserialize(d)? {
            Ok(())
        } else {
            Err(D::Error::custom("sentinel flag must be true"))
        }
    }
}

impl RelationText {
    pub const SENTINEL_TOKEN: &'static str = "[NO_MISSING_CONTEXT]";

    pub fn sentinel() -> Self {
        RelationText::Sentinel { sentinel: () }
    }

    /// A phrase; blank or multi-line input goes through [`normalize_output`].
    pub fn phrase(text: impl Into<String>) -> Self {
        let text = text.into();
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.contains('\n') {
            return normalize_output(&text);
        }
        RelationText::Text { text: trimmed.to_string() }
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, RelationText::Sentinel { .. })
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            RelationText::Text { text } => Some(text),
            RelationText::Sentinel { .. } => None,
        }
    }
}

impl std::fmt::Display for RelationText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RelationText::Text { text } => f.write_str(text),
            RelationText::Sentinel { .. } => f.write_str(Self::SENTINEL_TOKEN),
        }
    }
}

pub trait TextEncoder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Embedding, ProviderError>;
}

pub trait RelationProvider: Send + Sync {
    fn id(&self) -> &str;

    fn prompt_version(&self) -> &str {
        PROMPT_VERSION
    }

    /// Generates the relation for an already truncated pair; callers go
    /// through [`reconstruct_relation`].
    fn generate(&self, sentence: &str, article: &str) -> Result<RelationText, ProviderError>;
}

impl<T: TextEncoder + ?Sized> TextEncoder for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, text: &str) -> Result<Embedding, ProviderError> {
        (**self).encode(text)
    }
}

impl<T: RelationProvider + ?Sized> RelationProvider for Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn prompt_version(&self) -> &str {
        (**self).prompt_version()
    }
    fn generate(&self, sentence: &str, article: &str) -> Result<RelationText, ProviderError> {
        (**self).generate(sentence, article)
    }
}

/// Sentence and article truncated to 32 and 256 whitespace tokens.
pub fn truncate_pair(sentence: &str, article: &str) -> (String, String) {
    (truncate_tokens(sentence, SENTENCE_TOKEN_LIMIT), truncate_tokens(article, ARTICLE_TOKEN_LIMIT))
}

/// Relation text for one (sentence, context article) pair.
pub fn reconstruct_relation<P: RelationProvider + ?Sized>(
    provider: &P,
    sentence: &str,
    context_article: &str,
) -> Result<RelationText, ProviderError> {
    let (s, c) = truncate_pair(sentence, context_article);
    if s.is_empty() || c.is_empty() {
        return Err(ProviderError::EmptyInput);
    }
    provider.generate(&s, &c)
}
