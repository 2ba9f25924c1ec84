//! Per-conversation graph construction: typed interaction graphs for
//! relational aggregation and weighted hypergraphs for spectral smoothing.

mod export;
mod hypergraph;
mod interaction;

pub use export::{debug_text, write_debug};
pub use hypergraph::{build_hypergraph, Hyperedge, HyperedgeKind, WeightedHypergraph};
pub use interaction::{
    build_interaction_graph, window_range, ContextRelation, EdgeDegrees, InteractionGraph,
    RelationKind, TypedEdge,
};
