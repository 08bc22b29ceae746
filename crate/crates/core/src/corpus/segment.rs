use serde::{Deserialize, Serialize};

use super::{Article, CorpusError};

pub const DEFAULT_SENTENCE_BUDGET: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceList {
    pub article_id: String,
    pub sentences: Vec<String>,
}

impl SentenceList {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

fn is_latin_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_wide_terminal(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

fn normalize(piece: &str) -> String {
    piece.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits text into whitespace-normalized sentences with no budget applied.
///
/// `.`, `!` and `?` end a sentence when followed by whitespace or the end of
/// text; the full-width `。！？` end one unless another terminator follows.
/// Pieces without any alphanumeric character are folded into the previous
/// sentence (or the next one when they lead the text).
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut pieces = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        current.push(c);
        let next = chars.get(i + 1).copied();
        let ends = if is_latin_terminal(c) {
            next.is_none_or(char::is_whitespace)
        } else if is_wide_terminal(c) {
            next.is_none_or(|n| !is_wide_terminal(n) && !is_latin_terminal(n))
        } else {
            false
        };
        if ends {
            pieces.push(std::mem::take(&mut current));
        }
    }
    pieces.push(current);

    let mut sentences: Vec<String> = Vec::new();
    let mut pending_prefix = String::new();
    for piece in pieces.iter().map(|p| normalize(p)).filter(|p| !p.is_empty()) {
        if piece.chars().any(char::is_alphanumeric) {
            let sentence = if pending_prefix.is_empty() {
                piece
            } else {
                format!("{} {}", std::mem::take(&mut pending_prefix), piece)
            };
            sentences.push(sentence);
        } else if let Some(last) = sentences.last_mut() {
            last.push(' ');
            last.push_str(&piece);
        } else {
            if !pending_prefix.is_empty() {
                pending_prefix.push(' ');
            }
            pending_prefix.push_str(&piece);
        }
    }
    if !pending_prefix.is_empty() {
        // Text made only of punctuation.
        sentences.push(pending_prefix);
    }
    sentences
}

/// Segments an article into at most `sentence_budget` sentences.
pub fn segment(article: &Article, sentence_budget: usize) -> Result<SentenceList, CorpusError> {
    if sentence_budget == 0 {
        return Err(CorpusError::InvalidBudget);
    }
    let mut sentences = split_sentences(&article.text);
    if sentences.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    sentences.truncate(sentence_budget);
    Ok(SentenceList { article_id: article.id.clone(), sentences })
}
