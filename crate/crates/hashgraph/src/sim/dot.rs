//! Graphviz export of a party's hashgraph. Nodes are labeled creator:round,
//! witnesses draw with a heavy border, famous witnesses fill blue and
//! not-famous gray. Self-parent edges are solid, other-parent edges dashed.

use crate::graph::{Fame, Hashgraph};
use std::fmt::Write;

pub fn to_dot(graph: &Hashgraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph hashgraph {{");
    let _ = writeln!(out, "  rankdir=BT;");
    let _ = writeln!(out, "  node [shape=ellipse, fontsize=10];");
    for id in graph.event_ids() {
        let ev = graph.event(id).unwrap();
        let short = &id.to_hex()[..8];
        let round = graph.round_of(id).unwrap();
        let witness = graph.is_witness(id).unwrap();
        let fame = graph.fame_of(id).unwrap();
        let mut attrs = format!("label=\"p{}:r{}\"", ev.creator.0, round);
        if witness {
            attrs.push_str(", penwidth=2.5, shape=box");
        }
        match fame {
            Fame::Famous => attrs.push_str(", style=filled, fillcolor=lightblue"),
            Fame::NotFamous => attrs.push_str(", style=filled, fillcolor=lightgray"),
            Fame::Undecided => {}
        }
        let _ = writeln!(out, "  \"{short}\" [{attrs}];");
    }
    for id in graph.event_ids() {
        let ev = graph.event(id).unwrap();
        let short = &id.to_hex()[..8];
        if let Some(p) = ev.self_parent {
            let _ = writeln!(out, "  \"{short}\" -> \"{}\";", &p.to_hex()[..8]);
        }
        if let Some(p) = ev.other_parent {
            let _ = writeln!(
                out,
                "  \"{short}\" -> \"{}\" [style=dashed];",
                &p.to_hex()[..8]
            );
        }
    }
    out.push_str("}\n");
    out
}
