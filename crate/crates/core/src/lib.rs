//! Terminology-constrained sequence decoding.
//!
//! The crate compiles user terminology constraints into finite-state
//! acceptors and runs multi-stack beam search over a pluggable scoring model
//! that exposes next-token log-probabilities together with an attention
//! distribution over source positions. Two search strategies are provided:
//! permutation-complete constrained search (v1) and attention-gated search
//! with coverage masking (v2), plus plain beam search as the degenerate case
//! and a v2 -> v1 fallback so constraint satisfaction is never sacrificed.
//!
//! Supporting modules extract constraints from dictionaries or references,
//! evaluate outputs (BLEU, repetition, satisfaction) and generate seeded
//! synthetic decoding suites for benchmarks.

pub mod acceptor;
pub mod constraint;
pub mod decoder;
pub mod error;
pub mod metrics;
pub mod scoring;
pub mod synth;
pub mod task;
pub mod terminology;
pub mod token;

pub use acceptor::{build_acceptor, Acceptor, Arc, ArcLabel, ArcRole, Gate, StateId};
pub use constraint::{ConstraintRecord, ConstraintSpec};
pub use decoder::{
    decode, decode_n_best, expand_v1, expand_v2, run_with_fallback, Candidate, DecodeConfig,
    DecodeResult, Hypothesis, Mode, SearchStats,
};
pub use error::{BuildError, DecodeError, ScoreError, ValidationError};
pub use scoring::{
    AnyScorer, AnyState, AttentionMask, LexiconConfig, LexiconModel, ReplayModel,
    ReplayStepRecord, Scorer, StepResult,
};
pub use task::SentenceTask;
pub use token::{tok, SourceSpan, Token, TokenId, Vocab, EOS_TOKEN};
