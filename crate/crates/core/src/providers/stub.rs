use std::collections::{BTreeMap, HashSet};

use super::{ProviderError, RelationProvider, RelationText};
use crate::text::{content_tokens, tokenize};

const PHRASE_TOKENS: usize = 3;

/// Offline relation generator: names the article's most frequent content
/// tokens that the sentence does not contain.
///
/// Returns the sentinel when every article content token already appears in
/// the sentence. Otherwise the top three absent tokens by article frequency
/// (ties in ascending lexicographic order) are joined with spaces.
#[derive(Debug, Clone, Default)]
pub struct StubRelationProvider;

impl StubRelationProvider {
    pub const ID: &'static str = "stub";

    pub fn new() -> Self {
        Self
    }
}

impl RelationProvider for StubRelationProvider {
    fn id(&self) -> &str {
        Self::ID
    }

    fn generate(&self, sentence: &str, article: &str) -> Result<RelationText, ProviderError> {
        let present: HashSet<String> = tokenize(sentence).into_iter().collect();
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for token in content_tokens(article) {
            if !present.contains(&token) {
                *freq.entry(token).or_default() += 1;
            }
        }
        if freq.is_empty() {
            return Ok(RelationText::sentinel());
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let phrase = ranked.into_iter().take(PHRASE_TOKENS).map(|(t, _)| t).collect::<Vec<_>>().join(" ");
        Ok(RelationText::Text { text: phrase })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::reconstruct_relation;

    #[test]
    fn verbatim_sentence_gives_sentinel() {
        let text = "Police dispersed the crowd after midnight.";
        assert!(reconstruct_relation(&StubRelationProvider, text, text).unwrap().is_sentinel());
    }

    #[test]
    fn names_the_absent_tokens() {
        let rel = reconstruct_relation(
            &StubRelationProvider,
            "police dispersed crowd",
            "police dispersed crowd after protesters stormed buildings",
        )
        .unwrap();
        assert_eq!(rel.as_text(), Some("buildings protesters stormed"));
    }

    #[test]
    fn frequency_ranks_before_lexicographic_order() {
        let rel = StubRelationProvider.generate("x", "zeta zeta alpha beta gamma").unwrap();
        assert_eq!(rel.as_text(), Some("zeta alpha beta"));
    }

    #[test]
    fn stop_words_alone_do_not_count_as_missing() {
        assert!(StubRelationProvider.generate("storm hit", "the storm hit and then").unwrap().is_sentinel());
    }
}
