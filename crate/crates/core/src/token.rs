//! Tokens, source spans and the interned vocabulary used by scoring models.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

/// Reserved end-of-sequence token. Scoring models always include it in their
/// vocabulary; it is never emitted as an output token.
pub const EOS_TOKEN: &str = "</s>";

/// A single output-side token. Subword markers (if any) are opaque to the
/// engine; the only requirements are non-emptiness and absence of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn new(text: impl Into<String>) -> Result<Self, ValidationError> {
        let text = text.into();
        if text.is_empty() {
            return Err(ValidationError::EmptyToken);
        }
        if text.chars().any(char::is_whitespace) {
            return Err(ValidationError::WhitespaceInToken(text));
        }
        Ok(Token(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_eos(&self) -> bool {
        self.0 == EOS_TOKEN
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Token {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Token::new(s)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let text = String::deserialize(deserializer)?;
        Token::new(text).map_err(serde::de::Error::custom)
    }
}

/// Convenience constructor for tests and internal literals; panics on invalid text.
pub fn tok(text: &str) -> Token {
    Token::new(text).expect("valid token literal")
}

/// Half-open span `[start, end)` of source positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Result<Self, ValidationError> {
        if start >= end {
            return Err(ValidationError::EmptySpan { start, end });
        }
        Ok(SourceSpan { start, end })
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos >= self.start && pos < self.end
    }

    pub fn overlaps(&self, other: &SourceSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> {
        self.start..self.end
    }

    /// Span validity against a concrete source length.
    pub fn check_in_source(&self, source_len: usize) -> Result<(), ValidationError> {
        if self.end > source_len {
            return Err(ValidationError::SpanOutOfRange {
                start: self.start,
                end: self.end,
                source_len,
            });
        }
        Ok(())
    }
}

// Tuple form keeps the JSON schema as `"span": [4, 6]`. Deserialization goes
// through `From`, so an inverted span is caught by the later validity checks
// rather than at parse time.
impl From<(usize, usize)> for SourceSpan {
    fn from((start, end): (usize, usize)) -> Self {
        SourceSpan { start, end }
    }
}

impl From<SourceSpan> for (usize, usize) {
    fn from(s: SourceSpan) -> (usize, usize) {
        (s.start, s.end)
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Integer handle into a [`Vocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interned, immutable vocabulary. Id 0 is always the end-of-sequence token.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<Token>,
    index: HashMap<Token, TokenId>,
}

impl Vocab {
    /// Build a vocabulary from an iterator of tokens. EOS is inserted first;
    /// duplicates are ignored. Insertion order (after dedup) fixes the ids.
    pub fn build<I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = Token>,
    {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        vocab.insert(tok(EOS_TOKEN));
        for t in tokens {
            vocab.insert(t);
        }
        vocab
    }

    fn insert(&mut self, t: Token) -> TokenId {
        if let Some(&id) = self.index.get(&t) {
            return id;
        }
        let id = TokenId(self.tokens.len() as u32);
        self.tokens.push(t.clone());
        self.index.insert(t, id);
        id
    }

    pub fn eos(&self) -> TokenId {
        TokenId(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, t: &Token) -> Option<TokenId> {
        self.index.get(t).copied()
    }

    pub fn token(&self, id: TokenId) -> &Token {
        &self.tokens[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &Token)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (TokenId(i as u32), t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_rejects_empty_and_whitespace() {
        assert!(Token::new("").is_err());
        assert!(Token::new("a b").is_err());
        assert!(Token::new("a\tb").is_err());
        assert!(Token::new("Tote").is_ok());
    }

    #[test]
    fn span_requires_start_before_end() {
        assert!(SourceSpan::new(4, 6).is_ok());
        assert!(SourceSpan::new(5, 5).is_err());
        assert!(SourceSpan::new(5, 4).is_err());
    }

    #[test]
    fn span_json_round_trip() {
        let s = SourceSpan::new(4, 6).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "[4,6]");
        let back: SourceSpan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn vocab_reserves_eos_as_id_zero() {
        let v = Vocab::build([tok("a"), tok("b"), tok("a")]);
        assert_eq!(v.token(v.eos()).as_str(), EOS_TOKEN);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id(&tok("b")), Some(TokenId(2)));
    }
}
