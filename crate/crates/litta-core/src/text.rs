//! Text canonicalization applied to corrector output and scored hypotheses:
//! lowercase, drop characters outside the vocabulary, squeeze whitespace.

use crate::vocab::Vocab;

/// Normalizes arbitrary text into the vocabulary's closed character set.
/// Whitespace runs collapse to a single space and the ends are trimmed.
pub fn normalize_to_vocab(text: &str, vocab: &Vocab) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for raw in text.chars() {
        for ch in raw.to_lowercase() {
            if ch.is_whitespace() {
                if !out.is_empty() {
                    pending_space = true;
                }
                continue;
            }
            if !vocab.contains(ch) {
                continue;
            }
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}
