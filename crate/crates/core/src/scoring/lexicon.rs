//! Deterministic lexicon-attention model.
//!
//! A synthetic stand-in for a trained attention-based translation model: a
//! monotone cursor walks the source sentence, attention is a sharpened peak at
//! the cursor with geometric decay to the neighbours, and the next-token
//! distribution is the attention-weighted mixture of per-source-token lexicon
//! rows plus epsilon smoothing. Masked positions are excluded from both the
//! attention and the mixture, and the cursor skips over them.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ScoreError;
use crate::token::{Token, TokenId, Vocab};

use super::{apply_mask, AttentionMask, Scorer, StepResult};

/// On-disk lexicon model configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconConfig {
    /// Source token -> list of (target token, probability); each row sums to 1.
    pub lexicon: BTreeMap<String, Vec<(String, f64)>>,
    /// Attention sharpness; weights decay as exp(-gamma * distance).
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Smoothing mass spread uniformly over the vocabulary.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Extra target tokens (e.g. constraint terms) not present in any row.
    #[serde(default)]
    pub extra_vocab: Vec<String>,
}

fn default_gamma() -> f64 {
    2.0
}

fn default_epsilon() -> f64 {
    0.01
}

#[derive(Debug, Clone)]
pub struct LexiconModel {
    vocab: Vocab,
    rows: BTreeMap<Token, Vec<(TokenId, f64)>>,
    gamma: f64,
    epsilon: f64,
}

/// Per-hypothesis model state. Cloning is cheap: the resolved source context
/// is shared behind an `Arc`.
#[derive(Debug, Clone)]
pub struct LexiconState {
    ctx: Arc<SourceCtx>,
    cursor: usize,
    prev_argmax: Option<TokenId>,
}

#[derive(Debug)]
struct SourceCtx {
    /// Lexicon row per source position; `None` for out-of-lexicon tokens,
    /// which contribute a uniform distribution.
    rows: Vec<Option<Vec<(TokenId, f64)>>>,
}

impl LexiconModel {
    pub fn from_config(config: &LexiconConfig) -> Result<LexiconModel, ScoreError> {
        if config.gamma < 1.0 {
            return Err(ScoreError::BadConfig(format!(
                "gamma must be >= 1, got {}",
                config.gamma
            )));
        }
        if !(0.0..=0.1).contains(&config.epsilon) {
            return Err(ScoreError::BadConfig(format!(
                "epsilon must lie in [0, 0.1], got {}",
                config.epsilon
            )));
        }
        let mut targets: Vec<Token> = Vec::new();
        for (src, row) in &config.lexicon {
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ScoreError::BadConfig(format!(
                    "lexicon row for {src:?} sums to {sum}, expected 1"
                )));
            }
            for (t, p) in row {
                if *p < 0.0 {
                    return Err(ScoreError::BadConfig(format!(
                        "negative probability for {t:?} in row {src:?}"
                    )));
                }
                targets.push(Token::new(t.clone()).map_err(|e| {
                    ScoreError::BadConfig(format!("bad target token {t:?}: {e}"))
                })?);
            }
        }
        for t in &config.extra_vocab {
            targets.push(
                Token::new(t.clone())
                    .map_err(|e| ScoreError::BadConfig(format!("bad extra token {t:?}: {e}")))?,
            );
        }
        let vocab = Vocab::build(targets);
        let mut rows = BTreeMap::new();
        for (src, row) in &config.lexicon {
            let src_tok = Token::new(src.clone())
                .map_err(|e| ScoreError::BadConfig(format!("bad source token {src:?}: {e}")))?;
            let resolved: Vec<(TokenId, f64)> = row
                .iter()
                .map(|(t, p)| (vocab.id(&Token::new(t.clone()).unwrap()).unwrap(), *p))
                .collect();
            rows.insert(src_tok, resolved);
        }
        Ok(LexiconModel {
            vocab,
            rows,
            gamma: config.gamma,
            epsilon: config.epsilon,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn begin(&self, source: &[Token]) -> Result<LexiconState, ScoreError> {
        let rows: Vec<Option<Vec<(TokenId, f64)>>> = source
            .iter()
            .map(|t| {
                let row = self.rows.get(t).cloned();
                if row.is_none() {
                    log::warn!("source token {t} absent from lexicon; using uniform row");
                }
                row
            })
            .collect();
        Ok(LexiconState {
            ctx: Arc::new(SourceCtx { rows }),
            cursor: 0,
            prev_argmax: None,
        })
    }

    pub fn advance(
        &self,
        state: &LexiconState,
        prev: Option<TokenId>,
        mask: &AttentionMask,
    ) -> Result<(StepResult, LexiconState), ScoreError> {
        let source_len = state.ctx.rows.len();
        let mut cursor = state.cursor;
        if let (Some(prev), Some(argmax)) = (prev, state.prev_argmax) {
            if prev == argmax {
                cursor += 1;
            }
        }
        while cursor < source_len && mask.contains(cursor) {
            cursor += 1;
        }

        let peak = cursor.min(source_len.saturating_sub(1));
        let mut attention: Vec<f64> = (0..source_len)
            .map(|j| (-self.gamma * (j as f64 - peak as f64).abs()).exp())
            .collect();
        apply_mask(&mut attention, mask)?;

        let v = self.vocab.len() as f64;
        let mut probs = vec![self.epsilon / v; self.vocab.len()];
        if cursor >= source_len {
            probs[self.vocab.eos().index()] += 1.0 - self.epsilon;
        } else {
            for (j, weight) in attention.iter().enumerate() {
                if *weight == 0.0 {
                    continue;
                }
                match &state.ctx.rows[j] {
                    Some(row) => {
                        for (id, p) in row {
                            probs[id.index()] += (1.0 - self.epsilon) * weight * p;
                        }
                    }
                    None => {
                        let share = (1.0 - self.epsilon) * weight / v;
                        for p in probs.iter_mut() {
                            *p += share;
                        }
                    }
                }
            }
        }

        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(j.cmp(i)))
            .map(|(i, _)| TokenId(i as u32))
            .unwrap();
        let logprobs = probs.iter().map(|p| p.ln()).collect();

        Ok((
            StepResult {
                logprobs,
                attention,
            },
            LexiconState {
                ctx: Arc::clone(&state.ctx),
                cursor,
                prev_argmax: Some(argmax),
            },
        ))
    }
}

impl Scorer for LexiconModel {
    type State = LexiconState;

    fn vocab(&self) -> &Vocab {
        LexiconModel::vocab(self)
    }

    fn begin(&self, source: &[Token]) -> Result<LexiconState, ScoreError> {
        LexiconModel::begin(self, source)
    }

    fn advance(
        &self,
        state: &LexiconState,
        prev: Option<TokenId>,
        mask: &AttentionMask,
    ) -> Result<(StepResult, LexiconState), ScoreError> {
        LexiconModel::advance(self, state, prev, mask)
    }
}
