//! Evaluation kit: repetition counting, corpus BLEU, constraint satisfaction
//! and speed-ratio aggregation for benchmark runs.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::acceptor::Acceptor;
use crate::token::Token;

/// Count repeated character 7-grams within one sentence.
///
/// Stop-word tokens are removed, the remainder is joined with single spaces,
/// and each distinct 7-gram contributes its greedy non-overlapping occurrence
/// count minus one. Overlapping occurrences of the same gram are not counted
/// twice, so a long run of one character counts once per seven characters.
pub fn rep_count(tokens: &[Token], stop_words: &BTreeSet<Token>) -> usize {
    const WIDTH: usize = 7;
    let kept: Vec<&str> = tokens
        .iter()
        .filter(|t| !stop_words.contains(*t))
        .map(|t| t.as_str())
        .collect();
    let text: Vec<char> = kept.join(" ").chars().collect();
    if text.len() < WIDTH {
        return 0;
    }
    let mut occurrences: BTreeMap<&[char], Vec<usize>> = BTreeMap::new();
    for start in 0..=text.len() - WIDTH {
        occurrences
            .entry(&text[start..start + WIDTH])
            .or_default()
            .push(start);
    }
    let mut total = 0;
    for positions in occurrences.values() {
        let mut count = 0usize;
        let mut next_free = 0;
        for &p in positions {
            if p >= next_free {
                count += 1;
                next_free = p + WIDTH;
            }
        }
        total += count.saturating_sub(1);
    }
    total
}

/// Corpus-level lowercase BLEU (4-gram, brevity penalty, no smoothing).
pub fn corpus_bleu(hypotheses: &[Vec<Token>], references: &[Vec<Token>]) -> Result<f64, String> {
    if hypotheses.is_empty() {
        return Err("empty corpus".to_string());
    }
    if hypotheses.len() != references.len() {
        return Err(format!(
            "corpus size mismatch: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        ));
    }
    let lower = |sent: &[Token]| -> Vec<String> {
        sent.iter().map(|t| t.as_str().to_lowercase()).collect()
    };
    let hyps: Vec<Vec<String>> = hypotheses.iter().map(|h| lower(h)).collect();
    let refs: Vec<Vec<String>> = references.iter().map(|r| lower(r)).collect();

    let mut log_precision_sum = 0.0;
    for n in 1..=4usize {
        let mut matched = 0u64;
        let mut total = 0u64;
        for (h, r) in hyps.iter().zip(&refs) {
            let mut ref_counts: BTreeMap<&[String], u64> = BTreeMap::new();
            if r.len() >= n {
                for g in r.windows(n) {
                    *ref_counts.entry(g).or_insert(0) += 1;
                }
            }
            if h.len() >= n {
                let mut hyp_counts: BTreeMap<&[String], u64> = BTreeMap::new();
                for g in h.windows(n) {
                    *hyp_counts.entry(g).or_insert(0) += 1;
                }
                for (g, c) in hyp_counts {
                    matched += c.min(ref_counts.get(g).copied().unwrap_or(0));
                    total += c;
                }
            }
        }
        if total == 0 || matched == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matched as f64 / total as f64).ln();
    }

    let hyp_len: usize = hyps.iter().map(Vec::len).sum();
    let ref_len: usize = refs.iter().map(Vec::len).sum();
    let brevity = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * brevity * (log_precision_sum / 4.0).exp())
}

/// Fraction of outputs accepted by their acceptors (plain ungated semantics,
/// so span annotations and relaxation gadgets do not affect the check).
pub fn satisfaction_rate(outputs: &[Vec<Token>], acceptors: &[Acceptor]) -> f64 {
    assert_eq!(outputs.len(), acceptors.len());
    if outputs.is_empty() {
        return 1.0;
    }
    let ok = outputs
        .iter()
        .zip(acceptors)
        .filter(|(out, fsa)| fsa.accepts(out))
        .count();
    ok as f64 / outputs.len() as f64
}

/// One measured decode, as consumed by the speed table.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub mode: String,
    pub constraint_count: usize,
    pub expansions: u64,
    pub wall_micros: u128,
}

/// Aggregated cell of the speed table.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedCell {
    pub mode: String,
    pub constraint_count: usize,
    pub sentences: usize,
    pub mean_expansions: f64,
    pub mean_wall_micros: f64,
    /// Baseline mean expansions / this mode's mean expansions; 1.0 for the
    /// baseline itself, below 1.0 for slower configurations.
    pub expansion_speed_ratio: f64,
    pub wall_speed_ratio: f64,
}

/// Aggregate bench records into per-(mode, c) rows with speed ratios relative
/// to the `baseline_mode` rows over the same constraint count.
pub fn speed_table(records: &[BenchRecord], baseline_mode: &str) -> Vec<SpeedCell> {
    let mut groups: BTreeMap<(String, usize), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.mode.clone(), r.constraint_count))
            .or_default()
            .push(r);
    }
    let mean = |rs: &[&BenchRecord]| -> (f64, f64) {
        let n = rs.len() as f64;
        let e = rs.iter().map(|r| r.expansions as f64).sum::<f64>() / n;
        let w = rs.iter().map(|r| r.wall_micros as f64).sum::<f64>() / n;
        (e, w)
    };
    let baselines: BTreeMap<usize, (f64, f64)> = groups
        .iter()
        .filter(|((mode, _), _)| mode == baseline_mode)
        .map(|((_, c), rs)| (*c, mean(rs)))
        .collect();
    groups
        .into_iter()
        .map(|((mode, c), rs)| {
            let (mean_expansions, mean_wall) = mean(&rs);
            let (base_e, base_w) = baselines.get(&c).copied().unwrap_or((f64::NAN, f64::NAN));
            SpeedCell {
                mode,
                constraint_count: c,
                sentences: rs.len(),
                mean_expansions,
                mean_wall_micros: mean_wall,
                expansion_speed_ratio: base_e / mean_expansions,
                wall_speed_ratio: base_w / mean_wall,
            }
        })
        .collect()
}

/// Corpus evaluation report.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub length_ratio: f64,
    pub rep: usize,
    pub satisfaction: Option<f64>,
    pub sentences: Vec<SentenceEval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SentenceEval {
    pub rep: usize,
    pub hyp_len: usize,
    pub ref_len: usize,
}

/// Full corpus evaluation; `acceptors` is optional and adds the satisfaction
/// column.
pub fn evaluate(
    hypotheses: &[Vec<Token>],
    references: &[Vec<Token>],
    stop_words: &BTreeSet<Token>,
    acceptors: Option<&[Acceptor]>,
) -> Result<EvalReport, String> {
    let bleu = corpus_bleu(hypotheses, references)?;
    let sentences: Vec<SentenceEval> = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| SentenceEval {
            rep: rep_count(h, stop_words),
            hyp_len: h.len(),
            ref_len: r.len(),
        })
        .collect();
    let hyp_len: usize = sentences.iter().map(|s| s.hyp_len).sum();
    let ref_len: usize = sentences.iter().map(|s| s.ref_len).sum();
    Ok(EvalReport {
        bleu,
        length_ratio: hyp_len as f64 / ref_len as f64,
        rep: sentences.iter().map(|s| s.rep).sum(),
        satisfaction: acceptors.map(|a| satisfaction_rate(hypotheses, a)),
        sentences,
    })
}
