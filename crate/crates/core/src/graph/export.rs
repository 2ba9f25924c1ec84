use std::fmt::Write as _;
use std::path::Path;

use super::{HyperedgeKind, InteractionGraph, RelationKind, WeightedHypergraph};
use crate::error::{Error, Result};

/// Plain-text dump: one `edge <src> <dst> <alpha> <beta>` line per directed
/// edge, then one `hyperedge <k> <kind> <lambda> <node:gamma>...` line per
/// hyperedge. Node indices are zero-based.
pub fn debug_text(
    graph: &InteractionGraph,
    hg: &WeightedHypergraph,
    speaker_space: usize,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# nodes {} window {} edges {} hyperedges {}",
        graph.n,
        graph.window,
        graph.edges.len(),
        hg.num_edges()
    );
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "edge {} {} {} {}",
            e.src,
            e.dst,
            e.relation(RelationKind::Speaker, speaker_space),
            e.context.name()
        );
    }
    for (k, edge) in hg.edges.iter().enumerate() {
        let kind = match edge.kind {
            HyperedgeKind::Context => "context".to_string(),
            HyperedgeKind::Speaker(s) => format!("speaker{s}"),
            HyperedgeKind::Custom => "custom".to_string(),
        };
        let _ = write!(out, "hyperedge {k} {kind} {}", hg.lambda[k]);
        for ((v, e), g) in hg.incidences.iter().zip(&hg.gamma) {
            if *e == k {
                let _ = write!(out, " {v}:{g}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_debug(
    path: impl AsRef<Path>,
    graph: &InteractionGraph,
    hg: &WeightedHypergraph,
    speaker_space: usize,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, debug_text(graph, hg, speaker_space)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::interaction::tests::conv_with_speakers;
    use crate::graph::{build_hypergraph, build_interaction_graph};

    #[test]
    fn lists_every_edge_and_hyperedge() {
        let conv = conv_with_speakers(&[0, 1, 0]);
        let g = build_interaction_graph(&conv, 1).unwrap();
        let hg = build_hypergraph(&conv, 1, 1.0, 1.0).unwrap();
        let text = debug_text(&g, &hg, 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("edge ")).count(), 7);
        assert_eq!(
            text.lines().filter(|l| l.starts_with("hyperedge ")).count(),
            hg.num_edges()
        );
        assert!(text.contains("edge 0 1 1 forward"));
        assert!(text.contains("hyperedge 3 speaker0 1 0:1 2:1"));
    }
}
