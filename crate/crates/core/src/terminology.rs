//! Constraint extraction: dictionary application with source spans, and gold
//! token/phrase extraction from reference/baseline pairs.

use std::collections::{BTreeSet, HashMap};

use crate::constraint::ConstraintSpec;
use crate::error::ValidationError;
use crate::token::{SourceSpan, Token};

/// One bilingual dictionary entry: a source phrase and its admissible target
/// renderings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub source_phrase: Vec<Token>,
    pub target_alternatives: Vec<Vec<Token>>,
}

impl DictionaryEntry {
    pub fn new(
        source_phrase: Vec<Token>,
        target_alternatives: Vec<Vec<Token>>,
    ) -> Result<Self, ValidationError> {
        if source_phrase.is_empty() {
            return Err(ValidationError::EmptyAlternative);
        }
        if target_alternatives.is_empty() {
            return Err(ValidationError::NoAlternatives);
        }
        if target_alternatives.iter().any(|a| a.is_empty()) {
            return Err(ValidationError::EmptyAlternative);
        }
        Ok(DictionaryEntry {
            source_phrase,
            target_alternatives,
        })
    }

    /// Parse one TSV line: `source phrase<TAB>alt1|alt2`, tokens
    /// space-separated.
    pub fn parse_tsv_line(line: &str) -> Result<DictionaryEntry, ValidationError> {
        let (src, tgt) = line
            .split_once('\t')
            .ok_or(ValidationError::EmptyAlternative)?;
        let source_phrase = src
            .split_whitespace()
            .map(Token::new)
            .collect::<Result<Vec<_>, _>>()?;
        let target_alternatives = tgt
            .split('|')
            .map(|alt| {
                alt.split_whitespace()
                    .map(Token::new)
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        DictionaryEntry::new(source_phrase, target_alternatives)
    }
}

/// Token -> corpus count, for rarity ranking. Unseen tokens count 0 (rarest).
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    counts: HashMap<Token, u64>,
}

impl FrequencyTable {
    pub fn from_corpus_lines<'a, I: IntoIterator<Item = &'a str>>(lines: I) -> FrequencyTable {
        let mut counts = HashMap::new();
        for line in lines {
            for word in line.split_whitespace() {
                if let Ok(t) = Token::new(word) {
                    *counts.entry(t).or_insert(0) += 1;
                }
            }
        }
        FrequencyTable { counts }
    }

    pub fn insert(&mut self, token: Token, count: u64) {
        self.counts.insert(token, count);
    }

    pub fn count(&self, token: &Token) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }
}

/// Drop entries whose source phrase consists entirely of stop-listed tokens.
pub fn filter_entries(entries: &[DictionaryEntry], stop_list: &BTreeSet<Token>) -> Vec<DictionaryEntry> {
    entries
        .iter()
        .filter(|e| !e.source_phrase.iter().all(|t| stop_list.contains(t)))
        .cloned()
        .collect()
}

/// Match dictionary entries against a source sentence and emit span-annotated
/// constraints.
///
/// Matches are selected longest-first with a leftmost tie-break and must not
/// overlap. When a reference is supplied, only entries with at least one
/// target alternative occurring contiguously in the reference are kept, and
/// the alternatives are pruned to the occurring ones. At most
/// `max_constraints` constraints are returned, keeping the leftmost matches.
pub fn apply_dictionary(
    entries: &[DictionaryEntry],
    source: &[Token],
    reference: Option<&[Token]>,
    max_constraints: usize,
) -> Vec<ConstraintSpec> {
    let mut candidates: Vec<(usize, usize, &DictionaryEntry)> = Vec::new();
    for entry in entries {
        let m = entry.source_phrase.len();
        if m > source.len() {
            continue;
        }
        for start in 0..=source.len() - m {
            if source[start..start + m] == entry.source_phrase[..] {
                candidates.push((start, start + m, entry));
            }
        }
    }
    // Longest first, then leftmost, then dictionary order.
    candidates.sort_by_key(|(start, end, _)| (usize::MAX - (end - start), *start));

    let mut taken: Vec<(usize, usize, &DictionaryEntry)> = Vec::new();
    for (start, end, entry) in candidates {
        if taken
            .iter()
            .all(|(s, e, _)| end <= *s || *e <= start)
        {
            taken.push((start, end, entry));
        }
    }
    taken.sort_by_key(|(start, _, _)| *start);

    let mut constraints = Vec::new();
    for (start, end, entry) in taken {
        if constraints.len() >= max_constraints {
            break;
        }
        let alts: Vec<Vec<Token>> = match reference {
            Some(reference) => entry
                .target_alternatives
                .iter()
                .filter(|alt| contains_subsequence(reference, alt))
                .cloned()
                .collect(),
            None => entry.target_alternatives.clone(),
        };
        if alts.is_empty() {
            continue;
        }
        let span = SourceSpan::new(start, end).expect("match spans are non-empty");
        constraints.push(ConstraintSpec { alts, span: Some(span) });
    }
    constraints
}

fn contains_subsequence(haystack: &[Token], needle: &[Token]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Extract up to `max` reference tokens absent from the baseline output,
/// favouring rarer words (ascending corpus frequency, ties in first-occurrence
/// order). Returned as single-alternative, span-less constraints.
pub fn extract_gold_tokens(
    reference: &[Token],
    baseline: &[Token],
    freq: &FrequencyTable,
    max: usize,
) -> Vec<ConstraintSpec> {
    let baseline_set: BTreeSet<&Token> = baseline.iter().collect();
    let mut missing: Vec<&Token> = Vec::new();
    for t in reference {
        if !baseline_set.contains(t) && !missing.contains(&t) {
            missing.push(t);
        }
    }
    missing.sort_by_key(|t| freq.count(t));
    missing
        .into_iter()
        .take(max)
        .map(|t| ConstraintSpec {
            alts: vec![vec![t.clone()]],
            span: None,
        })
        .collect()
}

/// Extract one phrase of up to `max_len` reference tokens centered on the
/// rarest missing token (window clipped at sentence edges; for even window
/// sizes the extra token falls on the right). Returns `None` when the
/// baseline already produces every reference token.
pub fn extract_gold_phrase(
    reference: &[Token],
    baseline: &[Token],
    freq: &FrequencyTable,
    max_len: usize,
) -> Option<ConstraintSpec> {
    if max_len == 0 {
        return None;
    }
    let baseline_set: BTreeSet<&Token> = baseline.iter().collect();
    let missing_pos = reference
        .iter()
        .enumerate()
        .filter(|(_, t)| !baseline_set.contains(t))
        .min_by_key(|(i, t)| (freq.count(t), *i))
        .map(|(i, _)| i)?;

    let left = (max_len - 1) / 2;
    let start = missing_pos.saturating_sub(left);
    let end = (start + max_len).min(reference.len());
    let start = end.saturating_sub(max_len);
    Some(ConstraintSpec {
        alts: vec![reference[start..end].to_vec()],
        span: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::token::tok;

    fn toks(s: &str) -> Vec<Token> {
        s.split_whitespace().map(tok).collect()
    }

    fn entry(src: &str, alts: &[&str]) -> DictionaryEntry {
        DictionaryEntry::new(toks(src), alts.iter().map(|a| toks(a)).collect()).unwrap()
    }

    #[test]
    fn dictionary_match_emits_span_and_alternatives() {
        let entries = vec![entry("Dead Sea", &["Tote Meer", "Toten Meer"])];
        let source = toks("swimming in the Dead Sea today");
        let got = apply_dictionary(&entries, &source, None, 2);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].span, Some(SourceSpan::new(3, 5).unwrap()));
        assert_eq!(got[0].alts.len(), 2);
    }

    #[test]
    fn no_match_yields_no_constraints() {
        let entries = vec![entry("Dead Sea", &["Tote Meer"])];
        assert!(apply_dictionary(&entries, &toks("nothing here"), None, 2).is_empty());
    }

    #[test]
    fn overlapping_matches_keep_leftmost_longest() {
        let entries = vec![entry("New York", &["NY"]), entry("York City", &["YC"])];
        let source = toks("New York City");
        let got = apply_dictionary(&entries, &source, None, 2);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].span, Some(SourceSpan::new(0, 2).unwrap()));
        assert_eq!(got[0].alts, vec![toks("NY")]);
    }

    #[test]
    fn reference_filter_prunes_entries_and_alternatives() {
        let entries = vec![entry("Dead Sea", &["Tote Meer", "Toten Meer"])];
        let source = toks("the Dead Sea");
        let reference = toks("am Toten Meer entlang");
        let got = apply_dictionary(&entries, &source, Some(&reference), 2);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].alts, vec![toks("Toten Meer")]);

        let unrelated = toks("etwas ganz anderes");
        assert!(apply_dictionary(&entries, &source, Some(&unrelated), 2).is_empty());
    }

    #[test]
    fn cap_keeps_leftmost_matches() {
        let entries = vec![entry("u", &["U"]), entry("v", &["V"]), entry("w", &["W"])];
        let source = toks("u v w");
        let got = apply_dictionary(&entries, &source, None, 2);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].span.unwrap().start, 0);
        assert_eq!(got[1].span.unwrap().start, 1);
    }

    #[test]
    fn tsv_parsing_matches_the_documented_layout() {
        let e = DictionaryEntry::parse_tsv_line("Dead Sea\tTote Meer|Toten Meer").unwrap();
        assert_eq!(e.source_phrase, toks("Dead Sea"));
        assert_eq!(e.target_alternatives.len(), 2);
    }

    #[test]
    fn stop_list_drops_all_stopword_entries() {
        let entries = vec![entry("the", &["der"]), entry("the house", &["das Haus"])];
        let stop: BTreeSet<Token> = [tok("the")].into();
        let kept = filter_entries(&entries, &stop);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].source_phrase, toks("the house"));
    }

    #[test]
    fn gold_tokens_prefer_rare_words() {
        let mut freq = FrequencyTable::default();
        freq.insert(tok("zeitgeist"), 3);
        freq.insert(tok("house"), 90_000);
        let reference = toks("the house of zeitgeist");
        let baseline = toks("the of");
        let got = extract_gold_tokens(&reference, &baseline, &freq, 2);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].alts[0], toks("zeitgeist"));
        assert_eq!(got[1].alts[0], toks("house"));
    }

    #[test]
    fn gold_tokens_when_nothing_is_missing() {
        let freq = FrequencyTable::default();
        let reference = toks("a b");
        let baseline = toks("b a c");
        assert!(extract_gold_tokens(&reference, &baseline, &freq, 2).is_empty());
    }

    #[test]
    fn gold_tokens_respect_the_cap() {
        let mut freq = FrequencyTable::default();
        freq.insert(tok("p"), 5);
        freq.insert(tok("q"), 1);
        freq.insert(tok("r"), 3);
        let got = extract_gold_tokens(&toks("p q r"), &toks("x"), &freq, 2);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].alts[0], toks("q"));
        assert_eq!(got[1].alts[0], toks("r"));
    }

    #[test]
    fn gold_phrase_clips_at_the_left_edge() {
        let freq = FrequencyTable::default();
        let reference = toks("r0 r1 r2 r3 r4 r5 r6");
        let baseline = toks("r1 r2 r3 r4 r5 r6");
        let got = extract_gold_phrase(&reference, &baseline, &freq, 5).unwrap();
        assert_eq!(got.alts[0], toks("r0 r1 r2 r3 r4"));
    }

    #[test]
    fn gold_phrase_centers_with_extra_token_on_the_right() {
        let freq = FrequencyTable::default();
        let reference = toks("r0 r1 r2 r3 r4 r5 r6 r7 r8");
        let baseline: Vec<Token> = reference
            .iter()
            .filter(|t| t.as_str() != "r4")
            .cloned()
            .collect();
        let got = extract_gold_phrase(&reference, &baseline, &freq, 5).unwrap();
        assert_eq!(got.alts[0], toks("r2 r3 r4 r5 r6"));
    }

    #[test]
    fn gold_phrase_none_when_nothing_missing() {
        let freq = FrequencyTable::default();
        let reference = toks("a b c");
        assert!(extract_gold_phrase(&reference, &reference.clone(), &freq, 5).is_none());
    }
}
