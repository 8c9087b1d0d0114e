//! Token counting and truncation used by corpus preprocessing.
//!
//! Length caps are expressed in units of whichever tokenizer is active: the
//! built-in whitespace splitter at desk scale, or the attached model's subword
//! tokenizer when a bridge is connected.

use crate::bridge::BridgeError;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> Result<usize, TokenizerError>;

    /// Longest prefix of `text` holding at most `max_tokens` tokens.
    fn truncate(&self, text: &str, max_tokens: usize) -> Result<String, TokenizerError>;
}

/// Splits on Unicode whitespace. Truncation slices the original string so
/// spacing inside the kept prefix is untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl WhitespaceTokenizer {
    /// Byte offset just past the end of the `n`-th token, if there are at
    /// least `n` tokens.
    fn end_of_nth(text: &str, n: usize) -> Option<usize> {
        if n == 0 {
            return Some(0);
        }
        let mut seen = 0;
        let mut in_token = false;
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() {
                if in_token {
                    in_token = false;
                    if seen == n {
                        return Some(i);
                    }
                }
            } else if !in_token {
                in_token = true;
                seen += 1;
            }
        }
        (in_token && seen == n).then_some(text.len())
    }
}

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> Result<usize, TokenizerError> {
        Ok(text.split_whitespace().count())
    }

    fn truncate(&self, text: &str, max_tokens: usize) -> Result<String, TokenizerError> {
        let cut = Self::end_of_nth(text, max_tokens).unwrap_or(text.len());
        Ok(text[..cut].trim_end().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncate_keeps_inner_spacing() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.truncate("a  b\n\nc d", 2).unwrap(), "a  b");
        assert_eq!(t.truncate("a  b\n\nc d", 3).unwrap(), "a  b\n\nc");
        assert_eq!(t.truncate("a b", 10).unwrap(), "a b");
        assert_eq!(t.truncate("a b", 0).unwrap(), "");
        assert_eq!(t.truncate("  lead b", 1).unwrap(), "  lead");
    }

    #[test]
    fn count_matches_split() {
        let t = WhitespaceTokenizer;
        assert_eq!(t.count(" x y\tz\n").unwrap(), 3);
        assert_eq!(t.count("").unwrap(), 0);
    }
}
