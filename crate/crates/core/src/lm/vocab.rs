use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Codec, LmError, TokenId};
use crate::corpus::ExampleFormat;

pub const UNK: &str = "<unk>";

/// Ids of the marker tokens used to build generation contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub start: TokenId,
    pub end: TokenId,
    pub prompt: TokenId,
    pub response: TokenId,
}

/// Whitespace-token vocabulary. The four format markers and `<unk>` take the
/// first five ids; corpus tokens follow in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    specials: SpecialTokens,
    unk: TokenId,
}

impl Vocab {
    pub fn with_format(format: &ExampleFormat) -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
            specials: SpecialTokens { start: 0, end: 1, prompt: 2, response: 3 },
            unk: 4,
        };
        for t in [&format.start, &format.end, &format.prompt_marker, &format.response_marker] {
            v.insert(t);
        }
        v.insert(UNK);
        v
    }

    pub fn build<'a, I: IntoIterator<Item = &'a str>>(texts: I, format: &ExampleFormat) -> Self {
        let mut v = Self::with_format(format);
        for text in texts {
            for tok in text.split_whitespace() {
                v.insert(tok);
            }
        }
        v
    }

    /// Rebuilds from a token list whose first five entries are the start,
    /// end, prompt and response markers followed by `<unk>`.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, LmError> {
        if tokens.len() < 5 || tokens[4] != UNK {
            return Err(LmError::UnsupportedFormat("vocabulary must start with the four markers and <unk>".into()));
        }
        let format = ExampleFormat {
            start: tokens[0].clone(),
            end: tokens[1].clone(),
            prompt_marker: tokens[2].clone(),
            response_marker: tokens[3].clone(),
        };
        let mut v = Self::with_format(&format);
        for t in &tokens[5..] {
            v.insert(t);
        }
        if v.tokens != tokens {
            return Err(LmError::UnsupportedFormat("vocabulary contains duplicate tokens".into()));
        }
        Ok(v)
    }

    fn insert(&mut self, tok: &str) -> TokenId {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(tok.to_string());
        self.index.insert(tok.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn encode_lossy(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|t| self.id(t).unwrap_or(self.unk))
            .collect()
    }
}

impl Codec for Vocab {
    fn encode(&self, text: &str) -> Result<Vec<TokenId>, LmError> {
        Ok(self.encode_lossy(text))
    }

    fn decode(&self, ids: &[TokenId]) -> Result<String, LmError> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            out.push(self.token(id).ok_or(LmError::OutOfVocab { id, vocab_size: self.len() })?);
        }
        Ok(out.join(" "))
    }

    fn specials(&self) -> SpecialTokens {
        self.specials
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_take_first_ids() {
        let v = Vocab::build(["a b", "b c [WP]"], &ExampleFormat::default());
        assert_eq!(v.len(), 8);
        assert_eq!(v.id("[WP]"), Some(2));
        assert_eq!(v.id("a"), Some(5));
        assert_eq!(v.encode_lossy("c zzz"), vec![7, 4]);
        assert_eq!(v.decode(&[5, 6]).unwrap(), "a b");
        assert!(v.decode(&[99]).is_err());
        let back = Vocab::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(back, v);
    }
}
