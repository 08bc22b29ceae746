//! Tokenization shared by retrieval, the hash embedder and the stub relation
//! provider.

/// Common English function words ignored when looking for content tokens.
pub const STOP_WORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have", "having", "he",
    "her", "here", "hers", "him", "his", "how", "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more",
    "most", "my", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "out",
    "over", "own", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "then", "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up", "very", "was",
    "we", "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you",
    "your", "yours",
];

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.binary_search(&token).is_ok()
}

/// CJK ideographs, kana and hangul.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2FA1F)
}

/// Lowercases, splits on non-alphanumeric characters and drops Latin tokens
/// shorter than two characters. A CJK run is kept whole and additionally
/// emits its character bigrams (a two-character run is its own bigram).
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for run in lower.split(|c: char| !c.is_alphanumeric()).filter(|r| !r.is_empty()) {
        let mut chars = run.chars().peekable();
        while let Some(&first) = chars.peek() {
            let cjk = is_cjk(first);
            let mut piece = Vec::new();
            while let Some(&c) = chars.peek() {
                if is_cjk(c) != cjk {
                    break;
                }
                piece.push(c);
                chars.next();
            }
            if cjk {
                tokens.push(piece.iter().collect());
                if piece.len() > 2 {
                    tokens.extend(piece.windows(2).map(|w| w.iter().collect::<String>()));
                }
            } else if piece.len() >= 2 {
                tokens.push(piece.into_iter().collect());
            }
        }
    }
    tokens
}

/// Tokens from [`tokenize`] minus stop words.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !is_stop_word(t)).collect()
}

/// Keeps the first `limit` whitespace-delimited tokens.
pub fn truncate_tokens(text: &str, limit: usize) -> String {
    text.split_whitespace().take(limit).collect::<Vec<_>>().join(" ")
}
