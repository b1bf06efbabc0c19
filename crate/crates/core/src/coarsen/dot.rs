//! Graphviz export. Nodes are named `L{level}_N{index}`.

use std::fmt::Write;

use super::GraphHierarchy;

pub fn node_name(level: usize, index: usize) -> String {
    format!("L{level}_N{index}")
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// One level as an undirected graph. Edge labels are the `A^l` weights;
/// diagonal weights are written as a node attribute. `tokens` (level-0
/// surface forms) become node labels when given.
pub fn level_dot(h: &GraphHierarchy, level: usize, tokens: Option<&[String]>) -> String {
    let lvl = &h.levels[level];
    let a = &lvl.adjacency;
    let mut out = String::new();
    writeln!(out, "graph L{level} {{").unwrap();
    writeln!(out, "  // method={} nodes={}", h.method, a.size()).unwrap();
    for (i, members) in lvl.members.iter().enumerate() {
        let label = match tokens {
            Some(t) => members
                .iter()
                .map(|&m| t.get(m).map_or("?", String::as_str))
                .collect::<Vec<_>>()
                .join(" "),
            None => members
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        };
        write!(out, "  {} [label=\"{}\"", node_name(level, i), escape(&label)).unwrap();
        if a.get(i, i) > 0 {
            write!(out, ", self_weight={}", a.get(i, i)).unwrap();
        }
        writeln!(out, "];").unwrap();
    }
    for u in 0..a.size() {
        for v in u + 1..a.size() {
            let w = a.get(u, v);
            if w > 0 {
                writeln!(
                    out,
                    "  {} -- {} [weight={w}, label=\"{w}\"];",
                    node_name(level, u),
                    node_name(level, v)
                )
                .unwrap();
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Supernode-to-member edges from level `level` down to `level - 1`.
pub fn merge_tree_dot(h: &GraphHierarchy, level: usize) -> String {
    assert!(level >= 1 && level < h.levels.len(), "no matching into level {level}");
    let m = &h.matchings[level - 1];
    let mut out = String::new();
    writeln!(out, "digraph merge_L{level} {{").unwrap();
    for (s, members) in m.members().iter().enumerate() {
        for &f in members {
            writeln!(
                out,
                "  {} -> {};",
                node_name(level, s),
                node_name(level - 1, f)
            )
            .unwrap();
        }
    }
    out.push_str("}\n");
    out
}
