//! Acceptor construction.
//!
//! States are laid out deterministically: subsets of satisfied constraints in
//! increasing popcount (then increasing bitmask), each followed by its phrase
//! intermediates (breadth-first over the shared prefix trie, constraints in
//! index order) and, when a relaxation budget is set, by the pre/path/post
//! gadget states of each span-annotated constraint.

use std::collections::{BTreeSet, HashMap};

use crate::constraint::ConstraintSpec;
use crate::error::BuildError;
use crate::token::Token;

use super::{Acceptor, Arc, ArcLabel, ArcRole, RelaxRole, StateId, StateMeta};

const MAX_CONSTRAINTS: usize = 16;

/// Compile a constraint set into an acceptor. `relaxation` is the extra-token
/// budget admitted adjacent to each span-annotated constraint (0, 1 or 2); the
/// budget may be split arbitrarily between tokens before and after the phrase.
pub fn build_acceptor(
    constraints: &[ConstraintSpec],
    relaxation: u8,
) -> Result<Acceptor, BuildError> {
    if relaxation > 2 {
        return Err(BuildError::RelaxationTooLarge(relaxation));
    }
    if constraints.len() > MAX_CONSTRAINTS {
        return Err(BuildError::TooManyConstraints(constraints.len()));
    }
    for c in constraints {
        c.validate()?;
    }
    check_span_disjointness(constraints)?;
    check_spanned_initials(constraints)?;
    // Validate prefix/duplicate ambiguities on the full trie once; every
    // smaller subset trie is a restriction of it.
    Trie::over(constraints, u32::MAX)?;

    Builder::new(constraints, relaxation).run()
}

fn check_span_disjointness(constraints: &[ConstraintSpec]) -> Result<(), BuildError> {
    for (i, a) in constraints.iter().enumerate() {
        let Some(sa) = a.span else { continue };
        for (j, b) in constraints.iter().enumerate().skip(i + 1) {
            let Some(sb) = b.span else { continue };
            if sa.overlaps(&sb) {
                return Err(BuildError::OverlappingSpans {
                    a: i,
                    b: j,
                    span_a: sa,
                    span_b: sb,
                });
            }
        }
    }
    Ok(())
}

/// A span-annotated constraint cannot share an initial token with any other
/// constraint: the shared trie arc could not carry a single span annotation
/// and gating would become ambiguous.
fn check_spanned_initials(constraints: &[ConstraintSpec]) -> Result<(), BuildError> {
    for (i, a) in constraints.iter().enumerate() {
        if a.span.is_none() {
            continue;
        }
        let initials: BTreeSet<&Token> = a.initial_tokens().collect();
        for (j, b) in constraints.iter().enumerate() {
            if i == j {
                continue;
            }
            if let Some(t) = b.initial_tokens().find(|t| initials.contains(t)) {
                let (a_idx, b_idx) = if i < j { (i, j) } else { (j, i) };
                return Err(BuildError::SpannedPrefixClash {
                    a: a_idx,
                    b: b_idx,
                    token: t.as_str().to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Shared prefix trie over the alternatives of a set of constraints.
struct Trie {
    nodes: Vec<TrieNode>,
}

#[derive(Default)]
struct TrieNode {
    /// Child edges in insertion order (constraint index, then alternative).
    children: Vec<(Token, usize)>,
    /// (constraint, alternative) ending exactly at this node.
    terminal: Option<(usize, usize)>,
    /// Constraints whose paths traverse this node's incoming edge.
    owners: BTreeSet<usize>,
    /// (constraint, alternative) pairs traversing the incoming edge.
    owner_alts: BTreeSet<(usize, usize)>,
    depth: usize,
}

impl Trie {
    /// Build the trie over all constraints whose bit is set in `members`.
    fn over(constraints: &[ConstraintSpec], members: u32) -> Result<Trie, BuildError> {
        let mut trie = Trie {
            nodes: vec![TrieNode::default()],
        };
        for (ci, spec) in constraints.iter().enumerate() {
            if members & (1u32 << ci) == 0 {
                continue;
            }
            for (ai, alt) in spec.alts.iter().enumerate() {
                trie.insert(constraints, ci, ai, alt)?;
            }
        }
        trie.check_prefixes(constraints)?;
        Ok(trie)
    }

    fn insert(
        &mut self,
        constraints: &[ConstraintSpec],
        ci: usize,
        ai: usize,
        alt: &[Token],
    ) -> Result<(), BuildError> {
        let mut node = 0usize;
        for (depth, token) in alt.iter().enumerate() {
            let child = match self.nodes[node]
                .children
                .iter()
                .find(|(t, _)| t == token)
            {
                Some((_, c)) => *c,
                None => {
                    let c = self.nodes.len();
                    self.nodes.push(TrieNode {
                        depth: depth + 1,
                        ..TrieNode::default()
                    });
                    self.nodes[node].children.push((token.clone(), c));
                    c
                }
            };
            self.nodes[child].owners.insert(ci);
            self.nodes[child].owner_alts.insert((ci, ai));
            node = child;
        }
        if let Some((other, _)) = self.nodes[node].terminal {
            let (a, b) = if other < ci { (other, ci) } else { (ci, other) };
            return Err(BuildError::DuplicateAcrossConstraints {
                a,
                b,
                alt: join(alt),
            });
        }
        self.nodes[node].terminal = Some((ci, ai));
        let _ = constraints;
        Ok(())
    }

    fn check_prefixes(&self, constraints: &[ConstraintSpec]) -> Result<(), BuildError> {
        for node in &self.nodes {
            if let Some((ci, ai)) = node.terminal {
                if let Some((_, child)) = node.children.first() {
                    let longer = self.nodes[*child]
                        .owner_alts
                        .iter()
                        .next()
                        .map(|&(c, a)| join(&constraints[c].alts[a]))
                        .unwrap_or_default();
                    return Err(BuildError::AmbiguousPrefix {
                        shorter: join(&constraints[ci].alts[ai]),
                        longer,
                    });
                }
            }
        }
        Ok(())
    }

    /// Non-root, non-terminal node indices in breadth-first order.
    fn internal_nodes(&self) -> Vec<usize> {
        let mut order = Vec::new();
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(n) = queue.pop_front() {
            for &(_, child) in &self.nodes[n].children {
                if self.nodes[child].terminal.is_none() {
                    order.push(child);
                }
                queue.push_back(child);
            }
        }
        order
    }
}

fn join(alt: &[Token]) -> String {
    alt.iter()
        .map(Token::as_str)
        .collect::<Vec<_>>()
        .join(" ")
}

struct Builder<'a> {
    constraints: &'a [ConstraintSpec],
    relaxation: u8,
    full_mask: u32,
    subset_order: Vec<u32>,
    subset_ids: HashMap<u32, StateId>,
    /// (subset, trie node) -> intermediate state.
    trie_ids: HashMap<(u32, usize), StateId>,
    /// (subset, constraint, used fillers) -> pre state.
    pre_ids: HashMap<(u32, usize, u8), StateId>,
    /// (subset, constraint, used fillers, trie node) -> gadget path state.
    path_ids: HashMap<(u32, usize, u8, usize), StateId>,
    /// (subset, constraint, remaining fillers) -> post state.
    post_ids: HashMap<(u32, usize, u8), StateId>,
    tries: HashMap<u32, Trie>,
    /// Per-constraint tries (gadget copies follow a single constraint).
    own_tries: Vec<Trie>,
    states: Vec<StateMeta>,
}

impl<'a> Builder<'a> {
    fn new(constraints: &'a [ConstraintSpec], relaxation: u8) -> Builder<'a> {
        let c = constraints.len();
        let full_mask = if c == 0 { 0 } else { (1u32 << c) - 1 };
        let mut subset_order: Vec<u32> = (0..=full_mask).collect();
        subset_order.sort_by_key(|m| (m.count_ones(), *m));
        Builder {
            constraints,
            relaxation,
            full_mask,
            subset_order,
            subset_ids: HashMap::new(),
            trie_ids: HashMap::new(),
            pre_ids: HashMap::new(),
            path_ids: HashMap::new(),
            post_ids: HashMap::new(),
            tries: HashMap::new(),
            own_tries: Vec::new(),
            states: Vec::new(),
        }
    }

    fn gadget_for(&self, subset: u32, ci: usize) -> bool {
        self.relaxation > 0
            && subset & (1 << ci) == 0
            && self.constraints[ci].span.is_some()
    }

    fn run(mut self) -> Result<Acceptor, BuildError> {
        self.own_tries = (0..self.constraints.len())
            .map(|ci| Trie::over(self.constraints, 1u32 << ci))
            .collect::<Result<_, _>>()?;
        self.assign_ids()?;
        let outgoing = self.emit_arcs();
        let finals: BTreeSet<StateId> = self
            .states
            .iter()
            .enumerate()
            .filter(|(_, m)| m.satisfied == self.full_mask && !m.intermediate)
            .map(|(i, _)| StateId(i as u32))
            .collect();
        Ok(Acceptor {
            states: self.states,
            outgoing,
            start: StateId(0),
            finals,
            constraints: self.constraints.to_vec(),
            relaxation: self.relaxation,
        })
    }

    fn push_state(&mut self, meta: StateMeta) -> StateId {
        let id = StateId(self.states.len() as u32);
        self.states.push(meta);
        id
    }

    fn assign_ids(&mut self) -> Result<(), BuildError> {
        for subset in self.subset_order.clone() {
            let id = self.push_state(StateMeta {
                satisfied: subset,
                intermediate: false,
                relax: None,
            });
            self.subset_ids.insert(subset, id);

            let unsat = !subset & self.full_mask;
            let trie = Trie::over(self.constraints, unsat)?;
            for node in trie.internal_nodes() {
                let id = self.push_state(StateMeta {
                    satisfied: subset,
                    intermediate: true,
                    relax: None,
                });
                self.trie_ids.insert((subset, node), id);
            }
            self.tries.insert(subset, trie);

            for ci in 0..self.constraints.len() {
                if !self.gadget_for(subset, ci) {
                    continue;
                }
                for used in 1..=self.relaxation {
                    let id = self.push_state(StateMeta {
                        satisfied: subset,
                        intermediate: false,
                        relax: Some(RelaxRole::Pre {
                            constraint: ci,
                            used,
                        }),
                    });
                    self.pre_ids.insert((subset, ci, used), id);
                }
                for used in 1..=self.relaxation {
                    let internal = self.own_tries[ci].internal_nodes();
                    for node in internal {
                        let id = self.push_state(StateMeta {
                            satisfied: subset,
                            intermediate: true,
                            relax: Some(RelaxRole::Path {
                                constraint: ci,
                                used,
                            }),
                        });
                        self.path_ids.insert((subset, ci, used, node), id);
                    }
                }
                for remaining in 1..=self.relaxation {
                    let id = self.push_state(StateMeta {
                        satisfied: subset | (1 << ci),
                        intermediate: false,
                        relax: Some(RelaxRole::Post {
                            constraint: ci,
                            remaining,
                        }),
                    });
                    self.post_ids.insert((subset, ci, remaining), id);
                }
            }
        }
        Ok(())
    }

    /// Loop exclusion set of a subset state: the initial tokens of every
    /// still-unsatisfied constraint.
    fn exclusion(&self, subset: u32) -> BTreeSet<Token> {
        let mut excluded = BTreeSet::new();
        for (ci, spec) in self.constraints.iter().enumerate() {
            if subset & (1 << ci) == 0 {
                excluded.extend(spec.initial_tokens().cloned());
            }
        }
        excluded
    }

    /// Destination of the arc that completes constraint `ci` from `subset`,
    /// with `remaining` filler budget left.
    fn completion_target(&self, subset: u32, ci: usize, remaining: u8) -> StateId {
        if remaining > 0 && self.gadget_for(subset, ci) {
            self.post_ids[&(subset, ci, remaining)]
        } else {
            self.subset_ids[&(subset | (1 << ci))]
        }
    }

    /// Arcs out of the shared trie of `subset`, starting at `node`.
    fn trie_arcs(&self, subset: u32, node: usize, from: StateId) -> Vec<Arc> {
        let trie = &self.tries[&subset];
        let mut arcs = Vec::new();
        for (token, child_idx) in &trie.nodes[node].children {
            let child = &trie.nodes[*child_idx];
            let constraint = single(&child.owners);
            let alt = single(&child.owner_alts).map(|(_, a)| a);
            let span = constraint.and_then(|ci| self.constraints[ci].span);
            let to = match child.terminal {
                Some((ci, _)) => self.completion_target(subset, ci, self.relaxation),
                None => self.trie_ids[&(subset, *child_idx)],
            };
            arcs.push(Arc {
                from,
                to,
                label: ArcLabel::Literal(token.clone()),
                span,
                constraint,
                alt,
                pos_in_alt: Some(child.depth - 1),
                role: ArcRole::Constraint,
            });
        }
        arcs
    }

    /// Arcs of a gadget path copy for constraint `ci` entered after `used`
    /// pre-fillers, starting at `node` of the constraint's own trie.
    fn gadget_trie_arcs(
        &self,
        subset: u32,
        ci: usize,
        used: u8,
        node: usize,
        from: StateId,
    ) -> Vec<Arc> {
        let trie = &self.own_tries[ci];
        let span = self.constraints[ci].span;
        let mut arcs = Vec::new();
        for (token, child_idx) in &trie.nodes[node].children {
            let child = &trie.nodes[*child_idx];
            let to = match child.terminal {
                Some(_) => self.completion_target(subset, ci, self.relaxation - used),
                None => self.path_ids[&(subset, ci, used, *child_idx)],
            };
            arcs.push(Arc {
                from,
                to,
                label: ArcLabel::Literal(token.clone()),
                span,
                constraint: Some(ci),
                alt: single(&child.owner_alts).map(|(_, a)| a),
                pos_in_alt: Some(child.depth - 1),
                role: ArcRole::Constraint,
            });
        }
        arcs
    }

    fn filler_arc(&self, from: StateId, to: StateId, subset: u32, ci: usize) -> Arc {
        Arc {
            from,
            to,
            label: ArcLabel::complement(self.exclusion(subset)),
            span: self.constraints[ci].span,
            constraint: Some(ci),
            alt: None,
            pos_in_alt: None,
            role: ArcRole::RelaxFiller,
        }
    }

    fn loop_arc(&self, from: StateId, to: StateId, subset: u32) -> Arc {
        Arc {
            from,
            to,
            label: ArcLabel::complement(self.exclusion(subset)),
            span: None,
            constraint: None,
            alt: None,
            pos_in_alt: None,
            role: ArcRole::Loop,
        }
    }

    /// The non-loop arcs a subset state exposes: constraint entries plus
    /// relaxation fillers. Gadget escape states mirror these so that a
    /// hypothesis whose attention drifts away is not starved.
    fn subset_constraint_arcs(&self, subset: u32, from: StateId) -> Vec<Arc> {
        let mut arcs = self.trie_arcs(subset, 0, from);
        for ci in 0..self.constraints.len() {
            if self.gadget_for(subset, ci) {
                arcs.push(self.filler_arc(from, self.pre_ids[&(subset, ci, 1)], subset, ci));
            }
        }
        arcs
    }

    fn emit_arcs(&self) -> Vec<Vec<Arc>> {
        let mut outgoing: Vec<Vec<Arc>> = vec![Vec::new(); self.states.len()];

        for &subset in &self.subset_order {
            let sid = self.subset_ids[&subset];
            let mut arcs = self.subset_constraint_arcs(subset, sid);
            arcs.push(self.loop_arc(sid, sid, subset));
            outgoing[sid.index()] = arcs;

            // Shared-trie intermediates.
            for (node, _) in self.tries[&subset].nodes.iter().enumerate() {
                if let Some(&iid) = self.trie_ids.get(&(subset, node)) {
                    outgoing[iid.index()] = self.trie_arcs(subset, node, iid);
                }
            }

            for ci in 0..self.constraints.len() {
                if !self.gadget_for(subset, ci) {
                    continue;
                }
                // Pre states: enter the constraint (budget `used` spent),
                // take one more filler, escape, or start another constraint.
                for used in 1..=self.relaxation {
                    let pid = self.pre_ids[&(subset, ci, used)];
                    let mut arcs = self.gadget_trie_arcs(subset, ci, used, 0, pid);
                    if used < self.relaxation {
                        arcs.push(self.filler_arc(
                            pid,
                            self.pre_ids[&(subset, ci, used + 1)],
                            subset,
                            ci,
                        ));
                    }
                    for other in self.subset_constraint_arcs(subset, pid) {
                        if other.constraint != Some(ci) {
                            arcs.push(other);
                        }
                    }
                    arcs.push(self.loop_arc(pid, self.subset_ids[&subset], subset));
                    outgoing[pid.index()] = arcs;
                }
                // Gadget path intermediates.
                for used in 1..=self.relaxation {
                    for (node, _) in self.own_tries[ci].nodes.iter().enumerate() {
                        if let Some(&nid) = self.path_ids.get(&(subset, ci, used, node)) {
                            outgoing[nid.index()] =
                                self.gadget_trie_arcs(subset, ci, used, node, nid);
                        }
                    }
                }
                // Post states: trailing fillers while still attending the
                // span, then behave like the completed subset state.
                let done = subset | (1 << ci);
                for remaining in 1..=self.relaxation {
                    let pid = self.post_ids[&(subset, ci, remaining)];
                    let next = if remaining == 1 {
                        self.subset_ids[&done]
                    } else {
                        self.post_ids[&(subset, ci, remaining - 1)]
                    };
                    let mut arcs = vec![Arc {
                        from: pid,
                        to: next,
                        label: ArcLabel::complement(self.exclusion(done)),
                        span: self.constraints[ci].span,
                        constraint: Some(ci),
                        alt: None,
                        pos_in_alt: None,
                        role: ArcRole::RelaxFiller,
                    }];
                    arcs.extend(self.subset_constraint_arcs(done, pid));
                    arcs.push(self.loop_arc(pid, self.subset_ids[&done], done));
                    outgoing[pid.index()] = arcs;
                }
            }
        }
        outgoing
    }
}

fn single<T: Copy + Ord>(set: &BTreeSet<T>) -> Option<T> {
    if set.len() == 1 {
        set.iter().next().copied()
    } else {
        None
    }
}
