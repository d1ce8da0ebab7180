//! Recorded-distribution replay model for golden-file decoder tests.
//!
//! A trace holds one recorded step per time index; every hypothesis at step t
//! receives the same distributions, with the hypothesis coverage mask applied
//! to the recorded attention. Log-probabilities are returned as recorded.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ScoreError;
use crate::token::{Token, TokenId, Vocab};

use super::{apply_mask, AttentionMask, Scorer, StepResult};

/// One JSON-Lines trace record:
/// `{"step": 0, "attention": [...], "logprobs": {"tok": -0.1, ...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayStepRecord {
    pub step: usize,
    pub attention: Vec<f64>,
    pub logprobs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
struct ReplayStep {
    attention: Vec<f64>,
    logprobs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayModel {
    vocab: Vocab,
    steps: Arc<Vec<ReplayStep>>,
    source_len: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayState {
    step: usize,
}

impl ReplayModel {
    pub fn from_records(records: &[ReplayStepRecord]) -> Result<ReplayModel, ScoreError> {
        if records.is_empty() {
            return Err(ScoreError::BadConfig("replay trace is empty".into()));
        }
        for (i, rec) in records.iter().enumerate() {
            if rec.step != i {
                return Err(ScoreError::BadConfig(format!(
                    "replay trace steps must be contiguous from 0; found step {} at index {i}",
                    rec.step
                )));
            }
            let att_sum: f64 = rec.attention.iter().sum();
            if (att_sum - 1.0).abs() > 1e-9 || rec.attention.iter().any(|w| *w < 0.0) {
                return Err(ScoreError::BadConfig(format!(
                    "attention at step {i} is not a probability vector"
                )));
            }
            let prob_sum: f64 = rec.logprobs.values().map(|lp| lp.exp()).sum();
            if (prob_sum - 1.0).abs() > 1e-6 {
                return Err(ScoreError::BadConfig(format!(
                    "exp(logprobs) at step {i} sums to {prob_sum}, expected 1"
                )));
            }
        }
        let source_len = records[0].attention.len();
        if records.iter().any(|r| r.attention.len() != source_len) {
            return Err(ScoreError::BadConfig(
                "attention vectors must share one source length".into(),
            ));
        }
        let mut tokens: Vec<Token> = Vec::new();
        for rec in records {
            for key in rec.logprobs.keys() {
                tokens.push(
                    Token::new(key.clone())
                        .map_err(|e| ScoreError::BadConfig(format!("bad token {key:?}: {e}")))?,
                );
            }
        }
        let vocab = Vocab::build(tokens);
        let steps = records
            .iter()
            .map(|rec| {
                let mut logprobs = vec![f64::NEG_INFINITY; vocab.len()];
                for (key, lp) in &rec.logprobs {
                    let id = vocab.id(&Token::new(key.clone()).unwrap()).unwrap();
                    logprobs[id.index()] = *lp;
                }
                ReplayStep {
                    attention: rec.attention.clone(),
                    logprobs,
                }
            })
            .collect();
        Ok(ReplayModel {
            vocab,
            steps: Arc::new(steps),
            source_len,
        })
    }

    /// Parse a JSON-Lines trace (one record per line).
    pub fn from_jsonl(text: &str) -> Result<ReplayModel, ScoreError> {
        let records: Vec<ReplayStepRecord> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                serde_json::from_str(l)
                    .map_err(|e| ScoreError::BadConfig(format!("bad trace record: {e}")))
            })
            .collect::<Result<_, _>>()?;
        ReplayModel::from_records(&records)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn begin(&self, source: &[Token]) -> Result<ReplayState, ScoreError> {
        if source.len() != self.source_len {
            return Err(ScoreError::BadConfig(format!(
                "trace was recorded over {} source positions, got {}",
                self.source_len,
                source.len()
            )));
        }
        Ok(ReplayState { step: 0 })
    }

    pub fn advance(
        &self,
        state: &ReplayState,
        _prev: Option<TokenId>,
        mask: &AttentionMask,
    ) -> Result<(StepResult, ReplayState), ScoreError> {
        let step = self
            .steps
            .get(state.step)
            .ok_or(ScoreError::TraceExhausted(state.step))?;
        let mut attention = step.attention.clone();
        apply_mask(&mut attention, mask)?;
        Ok((
            StepResult {
                logprobs: step.logprobs.clone(),
                attention,
            },
            ReplayState {
                step: state.step + 1,
            },
        ))
    }
}

impl Scorer for ReplayModel {
    type State = ReplayState;

    fn vocab(&self) -> &Vocab {
        ReplayModel::vocab(self)
    }

    fn begin(&self, source: &[Token]) -> Result<ReplayState, ScoreError> {
        ReplayModel::begin(self, source)
    }

    fn advance(
        &self,
        state: &ReplayState,
        prev: Option<TokenId>,
        mask: &AttentionMask,
    ) -> Result<(StepResult, ReplayState), ScoreError> {
        ReplayModel::advance(self, state, prev, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::tok;

    fn record(step: usize, attention: &[f64], logprobs: &[(&str, f64)]) -> ReplayStepRecord {
        ReplayStepRecord {
            step,
            attention: attention.to_vec(),
            logprobs: logprobs
                .iter()
                .map(|(t, lp)| (t.to_string(), *lp))
                .collect(),
        }
    }

    fn uniform2() -> Vec<(&'static str, f64)> {
        let lp = 0.5_f64.ln();
        vec![("u", lp), ("v", lp)]
    }

    #[test]
    fn passthrough_without_mask() {
        let m = ReplayModel::from_records(&[record(0, &[0.1, 0.9], &uniform2())]).unwrap();
        let state = m.begin(&[tok("s0"), tok("s1")]).unwrap();
        let (step, _) = m.advance(&state, None, &AttentionMask::default()).unwrap();
        assert_eq!(step.attention, vec![0.1, 0.9]);
    }

    #[test]
    fn mask_renormalizes_the_recorded_attention() {
        let m = ReplayModel::from_records(&[record(0, &[0.1, 0.9], &uniform2())]).unwrap();
        let state = m.begin(&[tok("s0"), tok("s1")]).unwrap();
        let mask = AttentionMask::from_positions([1]);
        let (step, _) = m.advance(&state, None, &mask).unwrap();
        assert_eq!(step.attention, vec![1.0, 0.0]);
        // Log-probabilities are returned exactly as recorded.
        let u = m.vocab().id(&tok("u")).unwrap();
        assert_eq!(step.logprob(u), 0.5_f64.ln());
    }

    #[test]
    fn exhausted_trace_reports_the_step_index() {
        let records: Vec<ReplayStepRecord> = (0..5)
            .map(|i| record(i, &[1.0], &uniform2()))
            .collect();
        let m = ReplayModel::from_records(&records).unwrap();
        let mut state = m.begin(&[tok("s0")]).unwrap();
        for _ in 0..5 {
            let (_, next) = m.advance(&state, None, &AttentionMask::default()).unwrap();
            state = next;
        }
        let err = m.advance(&state, None, &AttentionMask::default()).unwrap_err();
        assert_eq!(err, ScoreError::TraceExhausted(5));
        assert_eq!(err.to_string(), "replay trace exhausted at step 5");
    }

    #[test]
    fn jsonl_round_trip() {
        let line = r#"{"step": 0, "attention": [0.25, 0.75], "logprobs": {"u": -0.6931471805599453, "v": -0.6931471805599453}}"#;
        let m = ReplayModel::from_jsonl(line).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.vocab().len(), 3); // eos + u + v
    }

    #[test]
    fn rejects_gapped_steps() {
        let err =
            ReplayModel::from_records(&[record(1, &[1.0], &uniform2())]).unwrap_err();
        assert!(matches!(err, ScoreError::BadConfig(_)));
    }
}
