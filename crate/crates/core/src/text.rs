//! Tokenization shared by the indexer, the query path and the toy encoder.
//!
//! Pipeline: Unicode lowercase → split on every non-alphanumeric character →
//! drop empty fragments. No stemming and no stop-word removal, so BM25 scores
//! stay reproducible by hand.

/// Split `text` into lowercase alphanumeric tokens.
///
/// ```
/// use universal_model::text::tokenize;
///
/// assert_eq!(tokenize("Wi-Fi router #2"), vec!["wi", "fi", "router", "2"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Number of tokens `tokenize` would produce, without allocating them.
pub fn token_count(text: &str) -> usize {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .count()
}
