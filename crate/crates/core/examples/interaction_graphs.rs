//! Build the windowed interaction graph and the weighted hypergraph of one
//! conversation and print their debug dump.
//!
//! cargo run --example interaction_graphs -- 2

use convrecon::data::{synth_generate, Split, SynthConfig};
use convrecon::graph::{build_hypergraph, build_interaction_graph, debug_text, RelationKind};

fn main() -> convrecon::Result<()> {
    let window: usize = std::env::args()
        .nth(1)
        .map_or(2, |s| s.parse().expect("window"));
    let cfg = SynthConfig {
        num_conversations: 1,
        utterances_per_conversation: 6,
        ..SynthConfig::default()
    };
    let ds = synth_generate(&cfg, Split::Train)?;
    let conv = &ds.conversations[0];

    let graph = build_interaction_graph(conv, window)?;
    let hg = build_hypergraph(conv, window, 1.0, 1.0)?;
    println!(
        "{} utterances, {} typed edges, {} hyperedges",
        graph.n,
        graph.edges.len(),
        hg.num_edges()
    );
    for (i, d) in graph.degrees(RelationKind::Speaker).iter().enumerate() {
        println!("  node {i}: out {} in {}", d.out, d.into);
    }
    println!();
    print!("{}", debug_text(&graph, &hg, ds.speaker_space()));
    Ok(())
}
