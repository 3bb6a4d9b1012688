//! Graphviz export of a partition state.

use std::fmt::Write;

use crate::state::WspState;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '{' | '}' | '|' | '<' | '>' | '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Renders blocks as record nodes listing their instructions. Dependency edges are solid,
/// fuse-preventing edges dashed and weight edges dotted with their weight as label.
pub fn to_dot(s: &WspState<'_>, title: &str) -> String {
    let g = s.graph();
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", title.replace('"', "'")).unwrap();
    writeln!(out, "  node [shape=record, fontname=monospace];").unwrap();
    for id in s.ids() {
        let rows: Vec<String> = s.block(id).iter().map(|&v| escape(&format!("{}: {}", v, g.label(v)))).collect();
        writeln!(out, "  b{} [label=\"{{{}}}\"];", id, rows.join("|")).unwrap();
    }
    for (a, b) in s.dep_hat() {
        writeln!(out, "  b{} -> b{};", a, b).unwrap();
    }
    for (a, b) in s.forbid_hat() {
        writeln!(out, "  b{} -> b{} [style=dashed, dir=none, color=red];", a, b).unwrap();
    }
    for ((a, b), w) in s.weights() {
        writeln!(out, "  b{} -> b{} [style=dotted, dir=none, label=\"{}\"];", a, b, w).unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cost::Bohrium;
    use crate::graph::build_wsp;
    use crate::ir::parse_program;

    #[test]
    fn renders_all_edge_kinds() {
        let p = Arc::new(
            parse_program("array A 4 u8\narray B 5 u8\nCOPY A, 1\nCOPY B[0:4], A\nCOPY B[1:5], A\nSYNC B").unwrap(),
        );
        let g = build_wsp(&p);
        let m = Bohrium::new(p.clone());
        let s = WspState::singleton(&g, &m);
        let d = to_dot(&s, "t");
        assert!(d.starts_with("digraph \"t\" {"));
        assert!(d.contains("b0 -> b1;"));
        assert!(d.contains("style=dashed"));
        assert!(d.contains("style=dotted"));
        assert!(d.contains("COPY B[0:4], A"));
        assert_eq!(d, to_dot(&s, "t"));
    }
}
