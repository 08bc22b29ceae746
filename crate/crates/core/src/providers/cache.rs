use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ProviderError, RelationProvider, RelationText};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationCacheKey {
    #[serde(rename = "sh")]
    pub sentence_hash: String,
    #[serde(rename = "ah")]
    pub article_hash: String,
    #[serde(rename = "pv")]
    pub prompt_version: String,
    #[serde(rename = "pid")]
    pub provider_id: String,
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl RelationCacheKey {
    pub fn new(sentence: &str, truncated_article: &str, prompt_version: &str, provider_id: &str) -> Self {
        Self {
            sentence_hash: digest(sentence),
            article_hash: digest(truncated_article),
            prompt_version: prompt_version.to_string(),
            provider_id: provider_id.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    k: RelationCacheKey,
    v: RelationText,
}

/// Append-only JSONL relation cache with an in-memory map.
///
/// Loading replays the file so the last line for a key wins. Writes go
/// through one writer lock; lookups only take the read side of the map lock.
#[derive(Debug, Default)]
pub struct RelationCache {
    entries: RwLock<HashMap<RelationCacheKey, RelationText>>,
    writer: Mutex<Option<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl RelationCache {
    /// A cache that lives only in memory.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file and loads its entries.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: CacheLine = serde_json::from_str(&line)
                    .map_err(|e| ProviderError::CacheParse { line: idx + 1, message: e.to_string() })?;
                entries.insert(parsed.k, parsed.v);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `None` is a miss; a cached sentinel comes back as `Some(sentinel)`.
    pub fn get(&self, key: &RelationCacheKey) -> Option<RelationText> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn put(&self, key: RelationCacheKey, value: RelationText) -> Result<(), ProviderError> {
        let mut writer = self.writer.lock().expect("cache writer poisoned");
        if let Some(w) = writer.as_mut() {
            let line = CacheLine { k: key.clone(), v: value.clone() };
            serde_json::to_writer(&mut *w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.entries.write().expect("cache lock poisoned").insert(key, value);
        Ok(())
    }
}

/// Consults a [`RelationCache`] before delegating to the wrapped provider.
pub struct CachedRelationProvider<P> {
    inner: P,
    cache: Arc<RelationCache>,
}

impl<P: RelationProvider> CachedRelationProvider<P> {
    pub fn new(inner: P, cache: Arc<RelationCache>) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cache(&self) -> &RelationCache {
        &self.cache
    }
}

impl<P: RelationProvider> RelationProvider for CachedRelationProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn prompt_version(&self) -> &str {
        self.inner.prompt_version()
    }

    fn generate(&self, sentence: &str, article: &str) -> Result<RelationText, ProviderError> {
        let key = RelationCacheKey::new(sentence, article, self.inner.prompt_version(), self.inner.id());
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let value = self.inner.generate(sentence, article)?;
        self.cache.put(key, value.clone())?;
        Ok(value)
    }
}
