//! The pipeline word tokenizer.
//!
//! Tokens are maximal runs of alphanumeric characters. An apostrophe or hyphen
//! is kept only when it sits between two alphanumeric characters, so
//! `don't` and `well-known` stay whole while `'quoted'` and `--` split away.
//! Every index, count and lookup in the crate goes through this tokenizer so
//! that corpus statistics and per-sample features agree.

/// Identifier stamped into persisted indexes.
pub const TOKENIZER_ID: &str = "lcp-word-v1";

fn is_joiner(c: char) -> bool {
    c == '\'' || c == '-' || c == '\u{2019}'
}

/// Split `text` into tokens, keeping the original case.
pub fn tokenize_cased(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.push(c);
        } else if is_joiner(c) && !current.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric()) {
            current.push(if c == '\u{2019}' { '\'' } else { c });
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Split `text` into lowercased tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_cased(text).into_iter().map(|t| t.to_lowercase()).collect()
}

/// Normalize a single target word to its token form. Returns `None` when the
/// word does not tokenize to exactly one token.
pub fn normalize_word(word: &str) -> Option<String> {
    let mut toks = tokenize(word);
    if toks.len() == 1 {
        toks.pop()
    } else {
        None
    }
}

/// Position of the first occurrence of `target` (already normalized) in `tokens`.
pub fn find_token(tokens: &[String], target: &str) -> Option<usize> {
    tokens.iter().position(|t| t == target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(tokenize("The cat sat."), vec!["the", "cat", "sat"]);
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
    }

    #[test]
    fn keeps_internal_apostrophes_and_hyphens() {
        assert_eq!(tokenize("don't stop"), vec!["don't", "stop"]);
        assert_eq!(tokenize("a well-known fact"), vec!["a", "well-known", "fact"]);
        assert_eq!(tokenize("'quoted' -- dash"), vec!["quoted", "dash"]);
        assert_eq!(tokenize("trailing- 'x"), vec!["trailing", "x"]);
        assert_eq!(tokenize("a--b"), vec!["a", "b"]);
    }

    #[test]
    fn curly_apostrophe_is_normalized() {
        assert_eq!(tokenize("it\u{2019}s"), vec!["it's"]);
    }

    #[test]
    fn digits_are_tokens() {
        assert_eq!(tokenize("in 1990, 3rd"), vec!["in", "1990", "3rd"]);
    }

    #[test]
    fn normalize_word_requires_single_token() {
        assert_eq!(normalize_word("Cat").as_deref(), Some("cat"));
        assert_eq!(normalize_word("blood pressure"), None);
        assert_eq!(normalize_word("..."), None);
    }

    #[test]
    fn cased_variant_preserves_case() {
        assert_eq!(tokenize_cased("NATO met"), vec!["NATO", "met"]);
    }
}
