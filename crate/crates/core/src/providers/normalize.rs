use super::RelationText;

const PAIRS: &[(char, char)] = &[
    ('"', '"'),
    ('\'', '\''),
    ('`', '`'),
    ('[', ']'),
    ('(', ')'),
    ('{', '}'),
    ('<', '>'),
    ('\u{201c}', '\u{201d}'),
    ('\u{2018}', '\u{2019}'),
];

fn strip_wrappers(mut s: &str) -> &str {
    loop {
        let trimmed = s.trim();
        let mut chars = trimmed.chars();
        let (Some(first), Some(last)) = (chars.next(), chars.next_back()) else {
            return trimmed;
        };
        if PAIRS.iter().any(|&(open, close)| first == open && last == close) {
            s = &trimmed[first.len_utf8()..trimmed.len() - last.len_utf8()];
        } else {
            return trimmed;
        }
    }
}

fn is_sentinel_variant(s: &str) -> bool {
    let squashed: String = s
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect();
    squashed == "nomissingcontext"
}

/// Post-processes raw generator output: keeps the first line, strips
/// surrounding quotes and brackets, and maps empty output or any spelling of
/// the NO_MISSING_CONTEXT token to the sentinel.
pub fn normalize_output(raw: &str) -> RelationText {
    let first_line = raw.split('\n').next().unwrap_or("");
    let stripped = strip_wrappers(first_line.trim_end_matches('\r'));
    if stripped.is_empty() || is_sentinel_variant(stripped) {
        RelationText::sentinel()
    } else {
        RelationText::Text { text: stripped.to_string() }
    }
}
