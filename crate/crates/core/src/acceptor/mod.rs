//! Finite-state acceptors over terminology constraints.
//!
//! An acceptor encodes every permutation of the given constraints interleaved
//! with vocabulary loops. Non-intermediate states correspond to subsets of
//! satisfied constraints; phrase constraints add intermediate states whose only
//! legal continuation is the next token of the phrase. Span-annotated
//! constraints may additionally carry relaxation gadgets that admit a bounded
//! number of extra tokens adjacent to the constraint while the decoder is
//! attending to its source span.

mod build;
mod dot;

pub use build::build_acceptor;

use std::collections::BTreeSet;

use crate::constraint::ConstraintSpec;
use crate::error::BuildError;
use crate::scoring::AttentionMask;
use crate::token::{SourceSpan, Token};

/// Dense acceptor state handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for StateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// What an arc matches: one token, everything outside an exclusion set, or
/// everything. Complement/Wildcard labels keep vocabulary loops open-ended
/// without enumerating the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArcLabel {
    Literal(Token),
    Complement(BTreeSet<Token>),
    Wildcard,
}

impl ArcLabel {
    pub fn matches(&self, token: &Token) -> bool {
        match self {
            ArcLabel::Literal(t) => t == token,
            ArcLabel::Complement(excluded) => !excluded.contains(token),
            ArcLabel::Wildcard => true,
        }
    }

    /// Normalizing constructor: an empty exclusion set is just a wildcard.
    fn complement(excluded: BTreeSet<Token>) -> ArcLabel {
        if excluded.is_empty() {
            ArcLabel::Wildcard
        } else {
            ArcLabel::Complement(excluded)
        }
    }
}

/// Structural role of an arc, used by attention gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcRole {
    /// Vocabulary loop (or gadget escape back to the plain state).
    Loop,
    /// Part of a constraint path: start, continuation, or completion.
    Constraint,
    /// Relaxation filler: an extra token admitted while attending a span.
    RelaxFiller,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub from: StateId,
    pub to: StateId,
    pub label: ArcLabel,
    /// Source span of the owning constraint, when unambiguous.
    pub span: Option<SourceSpan>,
    /// Owning constraint, when the arc serves exactly one.
    pub constraint: Option<usize>,
    /// Owning alternative within the constraint, when unique.
    pub alt: Option<usize>,
    /// Index of the matched token within the alternative(s).
    pub pos_in_alt: Option<usize>,
    pub role: ArcRole,
}

/// Relaxation bookkeeping attached to gadget states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxRole {
    /// Consumed `used` filler tokens before starting the constraint.
    Pre { constraint: usize, used: u8 },
    /// Intermediate inside a gadget copy of the constraint path.
    Path { constraint: usize, used: u8 },
    /// Constraint complete; `remaining` filler tokens may still follow.
    Post { constraint: usize, remaining: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMeta {
    /// Bitmask over constraint indices satisfied on every path to this state.
    pub satisfied: u32,
    /// Inside a phrase: outgoing vocabulary restricted to the next token(s).
    pub intermediate: bool,
    pub relax: Option<RelaxRole>,
}

/// Immutable compiled acceptor. Safe to share across decoding threads.
#[derive(Debug, Clone)]
pub struct Acceptor {
    pub(crate) states: Vec<StateMeta>,
    pub(crate) outgoing: Vec<Vec<Arc>>,
    pub(crate) start: StateId,
    pub(crate) finals: BTreeSet<StateId>,
    pub(crate) constraints: Vec<ConstraintSpec>,
    pub(crate) relaxation: u8,
}

impl Acceptor {
    pub fn build(constraints: &[ConstraintSpec], relaxation: u8) -> Result<Acceptor, BuildError> {
        build_acceptor(constraints, relaxation)
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn finals(&self) -> &BTreeSet<StateId> {
        &self.finals
    }

    pub fn is_final(&self, state: StateId) -> bool {
        self.finals.contains(&state)
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn meta(&self, state: StateId) -> &StateMeta {
        &self.states[state.index()]
    }

    pub fn arcs(&self, state: StateId) -> &[Arc] {
        &self.outgoing[state.index()]
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len() as u32).map(StateId)
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn relaxation(&self) -> u8 {
        self.relaxation
    }

    /// Count of plain subset states (neither intermediate nor relaxation).
    pub fn plain_state_count(&self) -> usize {
        self.states
            .iter()
            .filter(|m| !m.intermediate && m.relax.is_none())
            .count()
    }

    /// Arcs permitted in the given state under an optional attention gate.
    ///
    /// Without a gate this is the plain constrained language: every arc except
    /// relaxation fillers. With a gate, attended spans disable the vocabulary
    /// loops and restrict the expansion to their constraint (and, for the
    /// primary span, relaxation filler) arcs. Intermediate states ignore the
    /// gate: mid-phrase the only continuation is the next token anyway.
    pub fn active_arcs(&self, state: StateId, gate: Option<&Gate>) -> Vec<&Arc> {
        let arcs = &self.outgoing[state.index()];
        if self.meta(state).intermediate {
            return arcs.iter().collect();
        }
        let Some(gate) = gate else {
            return arcs
                .iter()
                .filter(|a| a.role != ArcRole::RelaxFiller)
                .collect();
        };
        let any_attended = arcs
            .iter()
            .any(|a| a.span.is_some_and(|s| gate.attended(&s)));
        if any_attended {
            arcs.iter()
                .filter(|a| match a.role {
                    ArcRole::Constraint => a.span.is_some_and(|s| gate.attended(&s)),
                    ArcRole::RelaxFiller => a.span.is_some_and(|s| gate.primary(&s)),
                    ArcRole::Loop => false,
                })
                .collect()
        } else {
            arcs.iter()
                .filter(|a| match a.role {
                    ArcRole::Loop => true,
                    ArcRole::Constraint => a.span.is_none(),
                    ArcRole::RelaxFiller => false,
                })
                .collect()
        }
    }

    /// Follow the unique arc matching `token` among `arcs`. A literal match
    /// takes precedence over complement/wildcard loops.
    fn follow<'a>(arcs: &[&'a Arc], token: &Token) -> Option<&'a Arc> {
        arcs.iter()
            .find(|a| matches!(a.label, ArcLabel::Literal(_)) && a.label.matches(token))
            .or_else(|| {
                arcs.iter()
                    .find(|a| !matches!(a.label, ArcLabel::Literal(_)) && a.label.matches(token))
            })
            .copied()
    }

    /// Ungated traversal primitive: the v1 stack mapping.
    pub fn step(&self, state: StateId, token: &Token) -> Option<StateId> {
        self.step_gated(state, token, None)
    }

    /// Traversal under an optional attention gate.
    pub fn step_gated(&self, state: StateId, token: &Token, gate: Option<&Gate>) -> Option<StateId> {
        let arcs = self.active_arcs(state, gate);
        Self::follow(&arcs, token).map(|a| a.to)
    }

    /// Whether the token sequence satisfies all constraints under the plain
    /// (ungated) semantics. Span gates and relaxation gadgets are ignored.
    pub fn accepts(&self, tokens: &[Token]) -> bool {
        let mut state = self.start;
        for t in tokens {
            match self.step(state, t) {
                Some(next) => state = next,
                None => return false,
            }
        }
        self.is_final(state)
    }

    /// Source positions whose constraints are complete in `state` and whose
    /// spans must therefore be masked. Positions of a constraint are exempt
    /// while inside its own post-relaxation window, so that extra tokens can
    /// still attend to the span before it is covered.
    pub fn coverage_for(&self, state: StateId) -> AttentionMask {
        let meta = self.meta(state);
        let exempt = match meta.relax {
            Some(RelaxRole::Post { constraint, .. }) => Some(constraint),
            _ => None,
        };
        let mut mask = AttentionMask::default();
        for (i, spec) in self.constraints.iter().enumerate() {
            if meta.satisfied & (1 << i) == 0 || exempt == Some(i) {
                continue;
            }
            if let Some(span) = spec.span {
                for pos in span.positions() {
                    mask.insert(pos);
                }
            }
        }
        mask
    }

    /// Rebuild this acceptor with all span annotations removed (the fallback
    /// target: plain constrained decoding without attentions).
    pub fn span_stripped(&self) -> Result<Acceptor, BuildError> {
        let stripped: Vec<ConstraintSpec> =
            self.constraints.iter().map(|c| c.without_span()).collect();
        build_acceptor(&stripped, 0)
    }
}

/// Attention gate: decides which source spans count as attended at one step.
///
/// The primary test places the attention argmax inside the span; the optional
/// secondary test compares the span's attention statistic against a threshold.
#[derive(Debug, Clone)]
pub struct Gate {
    attention: Vec<f64>,
    argmax: usize,
    tau: Option<f64>,
    span_sum: bool,
}

impl Gate {
    pub fn new(attention: &[f64], tau: Option<f64>, span_sum: bool) -> Gate {
        let argmax = attention
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(j.cmp(i)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        Gate {
            attention: attention.to_vec(),
            argmax,
            tau,
            span_sum,
        }
    }

    /// Gate whose argmax is pinned at `pos` (for direct tests).
    pub fn at_position(pos: usize, len: usize) -> Gate {
        let mut attention = vec![0.0; len.max(pos + 1)];
        attention[pos] = 1.0;
        Gate::new(&attention, None, false)
    }

    pub fn argmax(&self) -> usize {
        self.argmax
    }

    pub fn primary(&self, span: &SourceSpan) -> bool {
        span.contains(self.argmax)
    }

    pub fn attended(&self, span: &SourceSpan) -> bool {
        if self.primary(span) {
            return true;
        }
        let Some(tau) = self.tau else {
            return false;
        };
        let positions = span
            .positions()
            .filter_map(|p| self.attention.get(p).copied());
        let stat = if self.span_sum {
            positions.sum::<f64>()
        } else {
            positions.fold(0.0_f64, f64::max)
        };
        stat >= tau
    }
}
