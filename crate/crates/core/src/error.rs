//! Error types shared across the crate.

use thiserror::Error;

use crate::token::SourceSpan;

/// Violations of the basic domain invariants (tokens, spans, constraint shapes).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("token must be non-empty")]
    EmptyToken,
    #[error("token {0:?} contains whitespace")]
    WhitespaceInToken(String),
    #[error("span [{start},{end}) is empty or inverted")]
    EmptySpan { start: usize, end: usize },
    #[error("span [{start},{end}) exceeds source length {source_len}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        source_len: usize,
    },
    #[error("constraint must have at least one alternative")]
    NoAlternatives,
    #[error("constraint alternative must be a non-empty token sequence")]
    EmptyAlternative,
    #[error("constraint alternatives must be pairwise distinct")]
    DuplicateAlternative,
}

/// Rejections raised while compiling constraints into an acceptor.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("constraints {a} and {b} have overlapping source spans {span_a} and {span_b}")]
    OverlappingSpans {
        a: usize,
        b: usize,
        span_a: SourceSpan,
        span_b: SourceSpan,
    },
    #[error("constraints {a} and {b} share the duplicate alternative {alt:?}; satisfaction would be ambiguous")]
    DuplicateAcrossConstraints { a: usize, b: usize, alt: String },
    #[error("alternative {shorter:?} is a prefix of {longer:?} reachable from the same state; completion would be ambiguous")]
    AmbiguousPrefix { shorter: String, longer: String },
    #[error("span-annotated constraints {a} and {b} both start with token {token:?}; span gating would be ambiguous")]
    SpannedPrefixClash { a: usize, b: usize, token: String },
    #[error("relaxation budget {0} exceeds the supported maximum of 2")]
    RelaxationTooLarge(u8),
    #[error("{0} constraints exceed the supported maximum of 16")]
    TooManyConstraints(usize),
}

/// Scoring-model contract failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("attention mask covers every source position; renormalization impossible")]
    FullyMasked,
    #[error("replay trace exhausted at step {0}")]
    TraceExhausted(usize),
    #[error("token {0:?} is not in the scorer vocabulary")]
    UnknownToken(String),
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
}

/// Decoder-level failures.
#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("v2 decoding requires a source span on every constraint")]
    SpanlessConstraint,
    #[error("source sentence is empty")]
    EmptySource,
    #[error("invalid decode input: {0}")]
    Invalid(ValidationError),
    #[error("invalid decode configuration: {0}")]
    BadConfig(String),
    #[error("constraint token {0:?} is not in the scorer vocabulary")]
    VocabMismatch(String),
    #[error("search exhausted: no complete hypothesis within the length limit")]
    SearchExhausted,
    #[error("attention gating starved: no complete hypothesis and fallback is disabled")]
    GatingStarved,
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Build(#[from] BuildError),
}
