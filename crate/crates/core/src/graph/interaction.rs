use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::Conversation;
use crate::error::{Error, Result};

/// Temporal position of the target relative to the source utterance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextRelation {
    Backward = 0,
    Present = 1,
    Forward = 2,
}

impl ContextRelation {
    pub const COUNT: usize = 3;

    pub fn between(src: usize, dst: usize) -> Self {
        match dst.cmp(&src) {
            std::cmp::Ordering::Less => ContextRelation::Backward,
            std::cmp::Ordering::Equal => ContextRelation::Present,
            std::cmp::Ordering::Greater => ContextRelation::Forward,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            ContextRelation::Backward => ContextRelation::Forward,
            ContextRelation::Present => ContextRelation::Present,
            ContextRelation::Forward => ContextRelation::Backward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextRelation::Backward => "backward",
            ContextRelation::Present => "present",
            ContextRelation::Forward => "forward",
        }
    }
}

/// Which relation family an aggregation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Speaker,
    Context,
}

/// Directed edge `src -> dst`; `dst` is a neighbour of `src`. Indices are
/// zero-based utterance positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypedEdge {
    pub src: usize,
    pub dst: usize,
    /// (speaker of src, speaker of dst).
    pub speakers: (usize, usize),
    pub context: ContextRelation,
}

impl TypedEdge {
    /// Relation id within `kind`. Speaker pairs are encoded as
    /// `a * speaker_space + b`.
    pub fn relation(&self, kind: RelationKind, speaker_space: usize) -> usize {
        match kind {
            RelationKind::Speaker => self.speakers.0 * speaker_space + self.speakers.1,
            RelationKind::Context => self.context as usize,
        }
    }
}

/// Per-edge neighbour counts under the edge's own relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeDegrees {
    /// `|N_src^r|`: neighbours of the source under relation r.
    pub out: usize,
    /// Number of nodes that have the target as an r-neighbour (>= 1).
    pub into: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionGraph {
    pub n: usize,
    pub window: usize,
    pub edges: Vec<TypedEdge>,
    /// Distinct speaker pairs present, sorted.
    pub speaker_relations: Vec<(usize, usize)>,
    speaker_degrees: Vec<EdgeDegrees>,
    context_degrees: Vec<EdgeDegrees>,
}

/// `[max(i - w, 0), min(i + w, n - 1)]`.
pub fn window_range(i: usize, w: usize, n: usize) -> std::ops::RangeInclusive<usize> {
    i.saturating_sub(w)..=(i + w).min(n - 1)
}

pub(crate) fn check_window(w: usize) -> Result<()> {
    if w == 0 {
        return Err(Error::Config("context window must be positive".into()));
    }
    if w > 4 {
        log::warn!("context window {w} is outside the usual 1..=4 grid");
    }
    Ok(())
}

pub fn build_interaction_graph(conv: &Conversation, w: usize) -> Result<InteractionGraph> {
    check_window(w)?;
    let n = conv.len();
    if n == 0 {
        return Err(Error::Graph(format!("conversation {} is empty", conv.id)));
    }
    let speakers = conv.speaker_seq();
    let mut edges = Vec::new();
    for src in 0..n {
        for dst in window_range(src, w, n) {
            edges.push(TypedEdge {
                src,
                dst,
                speakers: (speakers[src], speakers[dst]),
                context: ContextRelation::between(src, dst),
            });
        }
    }
    let speaker_relations: BTreeSet<(usize, usize)> = edges.iter().map(|e| e.speakers).collect();

    let degrees = |key: &dyn Fn(&TypedEdge) -> (usize, usize)| -> Vec<EdgeDegrees> {
        let mut out: HashMap<(usize, (usize, usize)), usize> = HashMap::new();
        let mut into: HashMap<(usize, (usize, usize)), usize> = HashMap::new();
        for e in &edges {
            *out.entry((e.src, key(e))).or_default() += 1;
            *into.entry((e.dst, key(e))).or_default() += 1;
        }
        edges
            .iter()
            .map(|e| EdgeDegrees {
                out: out[&(e.src, key(e))],
                into: into[&(e.dst, key(e))],
            })
            .collect()
    };
    let speaker_degrees = degrees(&|e| e.speakers);
    let context_degrees = degrees(&|e| (e.context as usize, 0));

    Ok(InteractionGraph {
        n,
        window: w,
        edges,
        speaker_relations: speaker_relations.into_iter().collect(),
        speaker_degrees,
        context_degrees,
    })
}

impl InteractionGraph {
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.src == i)
            .map(|e| e.dst)
            .collect()
    }

    pub fn degrees(&self, kind: RelationKind) -> &[EdgeDegrees] {
        match kind {
            RelationKind::Speaker => &self.speaker_degrees,
            RelationKind::Context => &self.context_degrees,
        }
    }

    /// `|N_i^r|` for node `i` and relation `r` of `kind`.
    pub fn neighbor_count(
        &self,
        i: usize,
        kind: RelationKind,
        relation: usize,
        speaker_space: usize,
    ) -> usize {
        self.edges
            .iter()
            .filter(|e| e.src == i && e.relation(kind, speaker_space) == relation)
            .count()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::Utterance;

    pub(crate) fn conv_with_speakers(speakers: &[usize]) -> Conversation {
        Conversation {
            id: "g".into(),
            speakers: (0..=speakers.iter().copied().max().unwrap_or(0)).collect(),
            utterances: speakers
                .iter()
                .map(|&s| Utterance {
                    speaker: s,
                    label: 0,
                    mask: [true; 3],
                    features: [vec![0.0], vec![0.0], vec![0.0]],
                })
                .collect(),
        }
    }

    #[test]
    fn single_node_has_present_self_loop() {
        for w in 1..=4 {
            let g = build_interaction_graph(&conv_with_speakers(&[0]), w).unwrap();
            assert_eq!(g.edges.len(), 1);
            assert_eq!(g.edges[0].context, ContextRelation::Present);
        }
    }

    #[test]
    fn window_one_neighbourhoods() {
        let g = build_interaction_graph(&conv_with_speakers(&[0, 1, 0]), 1).unwrap();
        assert_eq!(g.neighbors(1), vec![0, 1, 2]);
        assert_eq!(g.neighbors(0), vec![0, 1]);
    }

    #[test]
    fn speaker_pairs() {
        let g = build_interaction_graph(&conv_with_speakers(&[0, 1, 0]), 2).unwrap();
        let find = |s, d| g.edges.iter().find(|e| e.src == s && e.dst == d).unwrap();
        assert_eq!(find(0, 2).speakers, (0, 0));
        assert_eq!(find(0, 1).speakers, (0, 1));
        assert_eq!(g.speaker_relations, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn empty_conversation_and_zero_window_error() {
        let mut c = conv_with_speakers(&[0]);
        c.utterances.clear();
        assert!(matches!(
            build_interaction_graph(&c, 1),
            Err(Error::Graph(_))
        ));
        assert!(matches!(
            build_interaction_graph(&conv_with_speakers(&[0]), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn degrees_are_positive_and_match_counts() {
        let conv = conv_with_speakers(&[0, 0, 1, 0, 1, 1, 0]);
        let g = build_interaction_graph(&conv, 2).unwrap();
        for kind in [RelationKind::Speaker, RelationKind::Context] {
            for (e, d) in g.edges.iter().zip(g.degrees(kind)) {
                assert!(d.into >= 1 && d.out >= 1);
                assert_eq!(d.out, g.neighbor_count(e.src, kind, e.relation(kind, 2), 2));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn edge_symmetry_and_count(
            speakers in proptest::collection::vec(0usize..3, 1..25),
            w in 1usize..6,
        ) {
            let g = build_interaction_graph(&conv_with_speakers(&speakers), w).unwrap();
            let n = speakers.len();
            for e in &g.edges {
                let back = g.edges.iter().find(|r| r.src == e.dst && r.dst == e.src);
                proptest::prop_assert!(back.is_some());
                proptest::prop_assert_eq!(back.unwrap().context, e.context.opposite());
                proptest::prop_assert!(e.src.abs_diff(e.dst) <= w);
            }
            let expected: usize = (0..n).map(|i| window_range(i, w, n).count()).sum();
            proptest::prop_assert_eq!(g.edges.len(), expected);
            if n > 2 * w {
                proptest::prop_assert_eq!(g.edges.len(), n * (2 * w + 1) - w * (w + 1));
            }
        }
    }
}
