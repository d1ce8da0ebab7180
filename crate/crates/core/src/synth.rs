//! Seed-deterministic synthetic decoding suites.
//!
//! Generated sentences pair a lexicon model with span-annotated dictionary
//! constraints whose targets differ from the form the model itself prefers:
//! the model renders a constrained source token as a longer compound
//! (`gross<stem>`) while the constraint demands the bare stem. Plain
//! constrained search therefore tends to emit both forms, which the
//! repetition metric picks up through their shared character 7-grams, while
//! attention-gated search with coverage masking emits the stem alone.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::ConstraintSpec;
use crate::scoring::LexiconConfig;
use crate::task::SentenceTask;
use crate::token::{SourceSpan, Token};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of sentences.
    pub size: usize,
    /// Number of ordinary source-token types.
    pub vocab: usize,
    /// Constraints per sentence: uniform in 1..=c_max (0 disables constraints).
    pub c_max: usize,
    /// Exactly this many constraints per sentence, overriding the uniform draw.
    pub c_exact: Option<usize>,
    /// Source length range (inclusive).
    pub len_range: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            size: 100,
            vocab: 40,
            c_max: 2,
            c_exact: None,
            len_range: (8, 14),
        }
    }
}

/// Number of distinct constrained source-token types in the pool.
const TERM_POOL: usize = 10;

fn normal_source(i: usize) -> String {
    format!("s{i:02}")
}

fn normal_target(i: usize) -> String {
    format!("n{i:02}m")
}

fn normal_alt(i: usize) -> String {
    format!("v{i:02}z")
}

fn term_source(i: usize) -> String {
    format!("u{i:02}")
}

/// Constraint target: long enough to carry repeated character 7-grams.
pub fn term_stem(i: usize) -> String {
    format!("best{i:02}werk")
}

/// The translation the model prefers for a constrained source token; shares
/// every stem 7-gram with the constraint target.
pub fn term_model_form(i: usize) -> String {
    format!("gross{}", term_stem(i))
}

/// Lexicon over the full synthetic vocabulary; shared by all sentences of a
/// suite.
pub fn lexicon_config(vocab: usize) -> LexiconConfig {
    let mut lexicon = std::collections::BTreeMap::new();
    for i in 0..vocab {
        lexicon.insert(
            normal_source(i),
            vec![(normal_target(i), 0.8), (normal_alt(i), 0.2)],
        );
    }
    for i in 0..TERM_POOL {
        lexicon.insert(term_source(i), vec![(term_model_form(i), 1.0)]);
    }
    LexiconConfig {
        lexicon,
        gamma: 3.0,
        epsilon: 0.01,
        extra_vocab: (0..TERM_POOL).map(term_stem).collect(),
    }
}

/// Generate a suite of tasks plus the matching lexicon model configuration.
/// Identical configurations yield identical output.
pub fn generate(config: &SynthConfig) -> (Vec<SentenceTask>, LexiconConfig) {
    assert!(config.vocab >= config.len_range.1, "vocab must cover the longest sentence");
    assert!(
        config.len_range.0 >= config.c_max.max(config.c_exact.unwrap_or(0)) + 2,
        "sentences must keep at least two unconstrained positions"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tasks = Vec::with_capacity(config.size);

    for idx in 0..config.size {
        let len = rng.gen_range(config.len_range.0..=config.len_range.1);
        let mut normal_ids: Vec<usize> = (0..config.vocab).collect();
        normal_ids.shuffle(&mut rng);
        let mut source: Vec<Token> = normal_ids[..len]
            .iter()
            .map(|i| Token::new(normal_source(*i)).unwrap())
            .collect();
        let mut reference: Vec<Token> = normal_ids[..len]
            .iter()
            .map(|i| Token::new(normal_target(*i)).unwrap())
            .collect();

        let c = match config.c_exact {
            Some(c) => c,
            None if config.c_max == 0 => 0,
            None => rng.gen_range(1..=config.c_max),
        };
        // Constrained positions: distinct, and never the full sentence.
        let mut positions: Vec<usize> = (0..len).collect();
        positions.shuffle(&mut rng);
        let mut chosen: Vec<usize> = positions[..c].to_vec();
        chosen.sort_unstable();

        let mut term_ids: Vec<usize> = (0..TERM_POOL).collect();
        term_ids.shuffle(&mut rng);

        let mut constraints = Vec::with_capacity(c);
        for (slot, &pos) in chosen.iter().enumerate() {
            let term = term_ids[slot];
            source[pos] = Token::new(term_source(term)).unwrap();
            reference[pos] = Token::new(term_stem(term)).unwrap();
            constraints.push(ConstraintSpec {
                alts: vec![vec![Token::new(term_stem(term)).unwrap()]],
                span: Some(SourceSpan::new(pos, pos + 1).unwrap()),
            });
        }

        tasks.push(SentenceTask {
            id: format!("synth-{idx:04}"),
            source,
            constraints,
            reference: Some(reference),
        });
    }

    (tasks, lexicon_config(config.vocab))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seed_deterministic() {
        let config = SynthConfig::default();
        let (a, _) = generate(&config);
        let (b, _) = generate(&config);
        let ser = |t: &[SentenceTask]| serde_json::to_string(t).unwrap();
        assert_eq!(ser(&a), ser(&b));

        let other = SynthConfig {
            seed: 43,
            ..config
        };
        let (c, _) = generate(&other);
        assert_ne!(ser(&a), ser(&c));
    }

    #[test]
    fn c_max_zero_yields_unconstrained_tasks() {
        let (tasks, _) = generate(&SynthConfig {
            c_max: 0,
            size: 10,
            ..SynthConfig::default()
        });
        assert!(tasks.iter().all(|t| t.constraints.is_empty()));
    }

    #[test]
    fn constraint_targets_appear_in_references() {
        let (tasks, _) = generate(&SynthConfig {
            size: 50,
            c_max: 4,
            ..SynthConfig::default()
        });
        for task in &tasks {
            let reference = task.reference.as_ref().unwrap();
            for c in &task.constraints {
                assert!(
                    c.alts
                        .iter()
                        .any(|alt| reference.windows(alt.len()).any(|w| w == &alt[..])),
                    "constraint target missing from reference in {}",
                    task.id
                );
            }
            task.validate().unwrap();
        }
    }

    #[test]
    fn spans_are_disjoint_and_in_range() {
        let (tasks, _) = generate(&SynthConfig {
            size: 50,
            c_max: 4,
            ..SynthConfig::default()
        });
        for task in &tasks {
            let spans: Vec<_> = task.constraints.iter().filter_map(|c| c.span).collect();
            for (i, a) in spans.iter().enumerate() {
                assert!(a.end <= task.source.len());
                for b in &spans[i + 1..] {
                    assert!(!a.overlaps(b));
                }
            }
        }
    }

    #[test]
    fn exact_constraint_count_is_honored() {
        let (tasks, _) = generate(&SynthConfig {
            size: 20,
            c_max: 4,
            c_exact: Some(3),
            ..SynthConfig::default()
        });
        assert!(tasks.iter().all(|t| t.constraints.len() == 3));
    }
}
