//! Scoring-model contract: next-token log-probabilities plus an attention
//! distribution over source positions, with coverage masking.

mod lexicon;
mod replay;

pub use lexicon::{LexiconConfig, LexiconModel, LexiconState};
pub use replay::{ReplayModel, ReplayState, ReplayStepRecord};

use std::collections::BTreeSet;

use crate::error::ScoreError;
use crate::token::{Token, TokenId, Vocab};

/// Set of covered source positions whose attention must be zeroed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttentionMask(BTreeSet<usize>);

impl AttentionMask {
    pub fn from_positions<I: IntoIterator<Item = usize>>(positions: I) -> Self {
        AttentionMask(positions.into_iter().collect())
    }

    pub fn insert(&mut self, pos: usize) {
        self.0.insert(pos);
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.0.contains(&pos)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn is_superset(&self, other: &AttentionMask) -> bool {
        other.0.is_subset(&self.0)
    }
}

/// One scorer step: dense log-probabilities over the vocabulary (including
/// the reserved end-of-sequence token) and an attention distribution over
/// source positions.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub logprobs: Vec<f64>,
    pub attention: Vec<f64>,
}

impl StepResult {
    pub fn logprob(&self, id: TokenId) -> f64 {
        self.logprobs[id.index()]
    }
}

/// The contract consumed by the decoder. Implementations must be pure:
/// identical inputs yield identical outputs, and masked positions receive
/// exactly zero attention in the returned step.
pub trait Scorer {
    type State: Clone;

    fn vocab(&self) -> &Vocab;

    /// Initialize per-sentence model state.
    fn begin(&self, source: &[Token]) -> Result<Self::State, ScoreError>;

    /// Score the next step given the previously emitted token (none at the
    /// first step) and the hypothesis coverage mask.
    fn advance(
        &self,
        state: &Self::State,
        prev: Option<TokenId>,
        mask: &AttentionMask,
    ) -> Result<(StepResult, Self::State), ScoreError>;
}

/// Zero masked positions and renormalize in place. Fails when no attention
/// mass survives the mask.
pub fn apply_mask(attention: &mut [f64], mask: &AttentionMask) -> Result<(), ScoreError> {
    for pos in mask.iter() {
        if pos < attention.len() {
            attention[pos] = 0.0;
        }
    }
    let total: f64 = attention.iter().sum();
    if total <= 0.0 {
        return Err(ScoreError::FullyMasked);
    }
    for w in attention.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// Runtime-selected scorer (lexicon-attention synthetic model or recorded
/// trace replay).
#[derive(Debug, Clone)]
pub enum AnyScorer {
    Lexicon(LexiconModel),
    Replay(ReplayModel),
}

#[derive(Debug, Clone)]
pub enum AnyState {
    Lexicon(LexiconState),
    Replay(ReplayState),
}

impl Scorer for AnyScorer {
    type State = AnyState;

    fn vocab(&self) -> &Vocab {
        match self {
            AnyScorer::Lexicon(m) => m.vocab(),
            AnyScorer::Replay(m) => m.vocab(),
        }
    }

    fn begin(&self, source: &[Token]) -> Result<AnyState, ScoreError> {
        Ok(match self {
            AnyScorer::Lexicon(m) => AnyState::Lexicon(m.begin(source)?),
            AnyScorer::Replay(m) => AnyState::Replay(m.begin(source)?),
        })
    }

    fn advance(
        &self,
        state: &AnyState,
        prev: Option<TokenId>,
        mask: &AttentionMask,
    ) -> Result<(StepResult, AnyState), ScoreError> {
        match (self, state) {
            (AnyScorer::Lexicon(m), AnyState::Lexicon(s)) => {
                let (r, s2) = m.advance(s, prev, mask)?;
                Ok((r, AnyState::Lexicon(s2)))
            }
            (AnyScorer::Replay(m), AnyState::Replay(s)) => {
                let (r, s2) = m.advance(s, prev, mask)?;
                Ok((r, AnyState::Replay(s2)))
            }
            _ => Err(ScoreError::BadConfig(
                "scorer state does not match scorer kind".into(),
            )),
        }
    }
}
