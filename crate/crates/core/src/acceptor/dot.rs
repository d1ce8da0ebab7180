//! Deterministic DOT rendering and versioned JSON dump of an acceptor.

use serde::Serialize;

use super::{Acceptor, Arc, ArcLabel, RelaxRole};

impl Acceptor {
    /// Render the acceptor in DOT format. Output is byte-stable for a given
    /// acceptor: states in id order, arcs in their stored order.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("digraph acceptor {\n");
        out.push_str("  rankdir=LR;\n");
        out.push_str("  node [shape=circle];\n");
        for sid in self.state_ids() {
            let meta = self.meta(sid);
            let mut label = format!("s{} {}", sid.0, satisfied_set(meta.satisfied));
            if meta.intermediate {
                label.push_str(" mid");
            }
            match meta.relax {
                Some(RelaxRole::Pre { constraint, used }) => {
                    label.push_str(&format!(" pre(c{constraint},{used})"));
                }
                Some(RelaxRole::Path { constraint, used }) => {
                    label.push_str(&format!(" path(c{constraint},{used})"));
                }
                Some(RelaxRole::Post {
                    constraint,
                    remaining,
                }) => {
                    label.push_str(&format!(" post(c{constraint},{remaining})"));
                }
                None => {}
            }
            let shape = if self.is_final(sid) {
                ", peripheries=2"
            } else {
                ""
            };
            out.push_str(&format!("  {} [label=\"{}\"{}];\n", sid.0, label, shape));
        }
        for sid in self.state_ids() {
            for arc in self.arcs(sid) {
                out.push_str(&format!(
                    "  {} -> {} [label=\"{}\"];\n",
                    arc.from.0,
                    arc.to.0,
                    arc_label(arc)
                ));
            }
        }
        out.push_str("}\n");
        out
    }

    /// Versioned JSON dump of the full automaton, for golden tests.
    pub fn dump_json(&self) -> serde_json::Value {
        let states: Vec<StateDump> = self
            .state_ids()
            .map(|sid| {
                let meta = self.meta(sid);
                StateDump {
                    id: sid.0,
                    satisfied: bits(meta.satisfied),
                    intermediate: meta.intermediate,
                    relax: meta.relax.map(|r| match r {
                        RelaxRole::Pre { constraint, used } => RelaxDump {
                            kind: "pre",
                            constraint,
                            budget: used,
                        },
                        RelaxRole::Path { constraint, used } => RelaxDump {
                            kind: "path",
                            constraint,
                            budget: used,
                        },
                        RelaxRole::Post {
                            constraint,
                            remaining,
                        } => RelaxDump {
                            kind: "post",
                            constraint,
                            budget: remaining,
                        },
                    }),
                }
            })
            .collect();
        let arcs: Vec<ArcDump> = self
            .state_ids()
            .flat_map(|sid| self.arcs(sid).iter().map(arc_dump))
            .collect();
        serde_json::json!({
            "format": 1,
            "start": self.start.0,
            "finals": self.finals.iter().map(|s| s.0).collect::<Vec<_>>(),
            "constraint_count": self.constraint_count(),
            "relaxation": self.relaxation,
            "states": states,
            "arcs": arcs,
        })
    }
}

fn satisfied_set(mask: u32) -> String {
    let inside = bits(mask)
        .iter()
        .map(|i| format!("C{i}"))
        .collect::<Vec<_>>()
        .join(",");
    format!("{{{inside}}}")
}

fn bits(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

fn arc_label(arc: &Arc) -> String {
    let mut label = match &arc.label {
        ArcLabel::Literal(t) => t.as_str().to_string(),
        ArcLabel::Complement(excluded) => {
            let names = excluded
                .iter()
                .map(|t| t.as_str())
                .collect::<Vec<_>>()
                .join(",");
            format!("V-{{{names}}}")
        }
        ArcLabel::Wildcard => "V".to_string(),
    };
    if let Some(span) = arc.span {
        label.push_str(&format!(" {span}"));
    }
    label
}

#[derive(Serialize)]
struct StateDump {
    id: u32,
    satisfied: Vec<usize>,
    intermediate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    relax: Option<RelaxDump>,
}

#[derive(Serialize)]
struct RelaxDump {
    kind: &'static str,
    constraint: usize,
    budget: u8,
}

#[derive(Serialize)]
struct ArcDump {
    from: u32,
    to: u32,
    label: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    span: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alt: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pos: Option<usize>,
    role: &'static str,
}

fn arc_dump(arc: &Arc) -> ArcDump {
    let label = match &arc.label {
        ArcLabel::Literal(t) => serde_json::json!({ "lit": t.as_str() }),
        ArcLabel::Complement(excluded) => serde_json::json!({
            "not": excluded.iter().map(|t| t.as_str()).collect::<Vec<_>>()
        }),
        ArcLabel::Wildcard => serde_json::json!("any"),
    };
    ArcDump {
        from: arc.from.0,
        to: arc.to.0,
        label,
        span: arc.span.map(|s| (s.start, s.end)),
        constraint: arc.constraint,
        alt: arc.alt,
        pos: arc.pos_in_alt,
        role: match arc.role {
            super::ArcRole::Loop => "loop",
            super::ArcRole::Constraint => "constraint",
            super::ArcRole::RelaxFiller => "relax_filler",
        },
    }
}
