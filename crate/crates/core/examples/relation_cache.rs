// Missing-context relations from the stub provider, memoised in a JSONL
// cache. A second pass over the same pairs never reaches the provider.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lcv::providers::{
    normalize_output, reconstruct_relation, CachedRelationProvider, ProviderError, RelationCache, RelationProvider,
    RelationText, StubRelationProvider,
};

/// Counts how often the wrapped provider is actually called.
pub struct Counted<P> {
    pub inner: P,
    pub calls: AtomicUsize,
}

impl<P: RelationProvider> RelationProvider for Counted<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, sentence: &str, article: &str) -> Result<RelationText, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(sentence, article)
    }
}

const PAIRS: [(&str, &str); 3] = [
    ("The council approved the bridge budget.", "The council approved the bridge budget and cut the school fund."),
    ("The council approved the bridge budget.", "The council approved the bridge budget."),
    ("Prices rose in March.", "Prices rose in March after the fuel tax doubled."),
];

/// Runs every pair twice against a cache at `path`; returns the provider
/// call counts of both passes.
pub fn relation_cache(path: &Path) -> Result<(usize, usize), Box<dyn std::error::Error>> {
    let mut counts = Vec::new();
    for pass in 0..2 {
        let cache = Arc::new(RelationCache::open(path)?);
        let provider = CachedRelationProvider::new(Counted { inner: StubRelationProvider::new(), calls: AtomicUsize::new(0) }, cache);
        for (s, c) in PAIRS {
            let rel = reconstruct_relation(&provider, s, c)?;
            if pass == 0 {
                println!("{s:45} -> {rel}");
            }
        }
        counts.push(provider.inner().calls.load(Ordering::SeqCst));
    }
    println!("provider calls: cold {} / warm {}", counts[0], counts[1]);

    for raw in ["budget cut for schools\nsecond line", "  ", "\"[NO_MISSING_CONTEXT]\"", "no missing context"] {
        println!("normalize {raw:?} -> {}", normalize_output(raw));
    }
    Ok((counts[0], counts[1]))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("lcv-relation-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let result = relation_cache(&dir.join("cache.jsonl"));
    std::fs::remove_dir_all(&dir)?;
    result.map(|_| ())
}
