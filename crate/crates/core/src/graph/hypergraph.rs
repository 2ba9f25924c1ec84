//! Hypergraph with edge-dependent node weights.
//!
//! `H` is the binary `n × |E|` incidence, `Ĥ` carries a positive weight
//! `γ_e(v)` at every incidence and `W_e = diag(λ)`. Degrees follow
//! `D_vv = Σ_e H_ve λ(e)` and `B_ee = Σ_v Ĥ_ve`.

use std::collections::BTreeMap;

use crate::data::Conversation;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

use super::interaction::{check_window, window_range};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyperedgeKind {
    /// Sliding window centred on an utterance.
    Context,
    /// All utterances of one speaker.
    Speaker(usize),
    /// Built by hand via [`WeightedHypergraph::from_edges`].
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hyperedge {
    pub kind: HyperedgeKind,
    /// Sorted, distinct, non-empty.
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedHypergraph {
    pub n: usize,
    pub edges: Vec<Hyperedge>,
    /// `(node, edge)` per incidence, edge-major; indexes `gamma`.
    pub incidences: Vec<(usize, usize)>,
    /// Node weight per incidence (`γ_e(v)`).
    pub gamma: Vec<f64>,
    /// Weight per hyperedge (`λ(e)`).
    pub lambda: Vec<f64>,
}

pub fn build_hypergraph(
    conv: &Conversation,
    w: usize,
    gamma_init: f64,
    lambda_init: f64,
) -> Result<WeightedHypergraph> {
    check_window(w)?;
    let n = conv.len();
    if n == 0 {
        return Err(Error::Graph(format!("conversation {} is empty", conv.id)));
    }
    let mut edges: Vec<Hyperedge> = Vec::new();
    for i in 0..n {
        let nodes: Vec<usize> = window_range(i, w, n).collect();
        if !edges.iter().any(|e| e.nodes == nodes) {
            edges.push(Hyperedge {
                kind: HyperedgeKind::Context,
                nodes,
            });
        }
    }
    let mut by_speaker: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, u) in conv.utterances.iter().enumerate() {
        by_speaker.entry(u.speaker).or_default().push(i);
    }
    edges.extend(by_speaker.into_iter().map(|(s, nodes)| Hyperedge {
        kind: HyperedgeKind::Speaker(s),
        nodes,
    }));
    WeightedHypergraph::with_weights(n, edges, gamma_init, lambda_init)
}

impl WeightedHypergraph {
    pub fn from_edges(
        n: usize,
        node_sets: Vec<Vec<usize>>,
        gamma_init: f64,
        lambda_init: f64,
    ) -> Result<Self> {
        let edges = node_sets
            .into_iter()
            .map(|mut nodes| {
                nodes.sort_unstable();
                nodes.dedup();
                Hyperedge {
                    kind: HyperedgeKind::Custom,
                    nodes,
                }
            })
            .collect();
        Self::with_weights(n, edges, gamma_init, lambda_init)
    }

    fn with_weights(
        n: usize,
        edges: Vec<Hyperedge>,
        gamma_init: f64,
        lambda_init: f64,
    ) -> Result<Self> {
        if !(gamma_init > 0.0 && lambda_init > 0.0) {
            return Err(Error::Config(format!(
                "hypergraph weights must be positive (gamma {gamma_init}, lambda {lambda_init})"
            )));
        }
        let mut incidences = Vec::new();
        for (e, edge) in edges.iter().enumerate() {
            if edge.nodes.is_empty() {
                return Err(Error::Graph(format!("hyperedge {e} is empty")));
            }
            for &v in &edge.nodes {
                if v >= n {
                    return Err(Error::Graph(format!(
                        "hyperedge {e} names node {v} beyond {n}"
                    )));
                }
                incidences.push((v, e));
            }
        }
        let covered: std::collections::HashSet<usize> =
            incidences.iter().map(|&(v, _)| v).collect();
        if covered.len() != n {
            return Err(Error::Graph("every node must belong to a hyperedge".into()));
        }
        Ok(Self {
            n,
            gamma: vec![gamma_init; incidences.len()],
            lambda: vec![lambda_init; edges.len()],
            edges,
            incidences,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn set_weights(&mut self, gamma: Vec<f64>, lambda: Vec<f64>) -> Result<()> {
        if gamma.len() != self.incidences.len() || lambda.len() != self.edges.len() {
            return Err(Error::Shape {
                op: "set_weights",
                lhs: vec![self.incidences.len(), self.edges.len()],
                rhs: vec![gamma.len(), lambda.len()],
            });
        }
        if gamma
            .iter()
            .chain(&lambda)
            .any(|&v| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::Graph(
                "hypergraph weights must be positive and finite".into(),
            ));
        }
        self.gamma = gamma;
        self.lambda = lambda;
        Ok(())
    }

    /// Binary incidence `H`.
    pub fn incidence(&self) -> Tensor {
        let mut h = Tensor::zeros(&[self.n, self.num_edges()]);
        let cols = self.num_edges();
        for &(v, e) in &self.incidences {
            h.data_mut()[v * cols + e] = 1.0;
        }
        h
    }

    /// Weighted incidence `Ĥ`.
    pub fn weighted_incidence(&self) -> Tensor {
        let mut h = Tensor::zeros(&[self.n, self.num_edges()]);
        let cols = self.num_edges();
        for (&(v, e), &g) in self.incidences.iter().zip(&self.gamma) {
            h.data_mut()[v * cols + e] = g;
        }
        h
    }

    /// `W_e = diag(λ)`.
    pub fn edge_weights(&self) -> Tensor {
        diag(&self.lambda)
    }

    /// Node and edge degree matrices `(D, B)`, recomputed from the current
    /// weights.
    pub fn degree_matrices(&self) -> Result<(Tensor, Tensor)> {
        let mut d = vec![0.0; self.n];
        let mut b = vec![0.0; self.num_edges()];
        for (&(v, e), &g) in self.incidences.iter().zip(&self.gamma) {
            d[v] += self.lambda[e];
            b[e] += g;
        }
        if let Some(v) = d.iter().position(|&x| x <= 0.0) {
            return Err(Error::Graph(format!("node degree of {v} is zero")));
        }
        if let Some(e) = b.iter().position(|&x| x <= 0.0) {
            return Err(Error::Graph(format!(
                "edge degree of hyperedge {e} is zero"
            )));
        }
        Ok((diag(&d), diag(&b)))
    }
}

fn diag(values: &[f64]) -> Tensor {
    let n = values.len();
    let mut t = Tensor::zeros(&[n, n]);
    for (i, &v) in values.iter().enumerate() {
        t.data_mut()[i * n + i] = v;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::interaction::tests::conv_with_speakers;

    fn diag_of(t: &Tensor) -> Vec<f64> {
        (0..t.rows()).map(|i| t.get2(i, i)).collect()
    }

    #[test]
    fn two_nodes_one_speaker_enumeration() {
        let hg = build_hypergraph(&conv_with_speakers(&[0, 0]), 1, 1.0, 1.0).unwrap();
        assert_eq!(hg.num_edges(), 2);
        assert_eq!(hg.edges[0].kind, HyperedgeKind::Context);
        assert_eq!(hg.edges[0].nodes, vec![0, 1]);
        assert_eq!(hg.edges[1].kind, HyperedgeKind::Speaker(0));
        assert_eq!(hg.edges[1].nodes, vec![0, 1]);
    }

    #[test]
    fn unit_weight_pair_degrees() {
        let hg = WeightedHypergraph::from_edges(2, vec![vec![0, 1]], 1.0, 1.0).unwrap();
        let (d, b) = hg.degree_matrices().unwrap();
        assert_eq!(diag_of(&d), vec![1.0, 1.0]);
        assert_eq!(b.data(), &[2.0]);
    }

    #[test]
    fn singleton_hyperedges_are_identity() {
        let hg =
            WeightedHypergraph::from_edges(3, vec![vec![0], vec![1], vec![2]], 1.0, 1.0).unwrap();
        assert_eq!(hg.incidence(), Tensor::eye(3));
        assert_eq!(hg.weighted_incidence(), Tensor::eye(3));
        let (d, b) = hg.degree_matrices().unwrap();
        assert_eq!((d, b), (Tensor::eye(3), Tensor::eye(3)));
    }

    #[test]
    fn weighted_degree_sums() {
        let mut hg = WeightedHypergraph::from_edges(3, vec![vec![0, 1, 2]], 1.0, 1.0).unwrap();
        hg.set_weights(vec![1.0, 2.0, 3.0], vec![2.0]).unwrap();
        let (d, b) = hg.degree_matrices().unwrap();
        assert_eq!(b.data(), &[6.0]);
        assert_eq!(diag_of(&d), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn lambda_scaling_scales_node_degrees_only() {
        let conv = conv_with_speakers(&[0, 1, 1, 0, 1]);
        let mut hg = build_hypergraph(&conv, 2, 1.0, 1.0).unwrap();
        hg.set_weights(
            (0..hg.gamma.len()).map(|k| 0.5 + k as f64 * 0.1).collect(),
            (0..hg.num_edges()).map(|e| 1.0 + e as f64).collect(),
        )
        .unwrap();
        let (d0, b0) = hg.degree_matrices().unwrap();
        let t = 3.5;
        let lambda: Vec<f64> = hg.lambda.iter().map(|l| l * t).collect();
        hg.set_weights(hg.gamma.clone(), lambda).unwrap();
        let (d1, b1) = hg.degree_matrices().unwrap();
        assert_eq!(b0, b1);
        for (a, b) in diag_of(&d0).iter().zip(diag_of(&d1)) {
            assert!((a * t - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_weights_and_edges_error() {
        assert!(WeightedHypergraph::from_edges(2, vec![vec![0, 1]], 0.0, 1.0).is_err());
        assert!(WeightedHypergraph::from_edges(2, vec![vec![0, 1]], 1.0, -1.0).is_err());
        assert!(WeightedHypergraph::from_edges(2, vec![vec![]], 1.0, 1.0).is_err());
        assert!(WeightedHypergraph::from_edges(3, vec![vec![0, 1]], 1.0, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn membership_and_sparsity_invariants(
            speakers in proptest::collection::vec(0usize..3, 1..20),
            w in 1usize..5,
        ) {
            let conv = conv_with_speakers(&speakers);
            let hg = build_hypergraph(&conv, w, 1.0, 1.0).unwrap();
            for v in 0..speakers.len() {
                let ctx = hg.edges.iter().filter(|e| e.kind == HyperedgeKind::Context && e.nodes.contains(&v)).count();
                let spk = hg.edges.iter().filter(|e| matches!(e.kind, HyperedgeKind::Speaker(_)) && e.nodes.contains(&v)).count();
                proptest::prop_assert!(ctx >= 1);
                proptest::prop_assert_eq!(spk, 1);
            }
            let h = hg.incidence();
            let hw = hg.weighted_incidence();
            for (a, b) in h.data().iter().zip(hw.data()) {
                proptest::prop_assert_eq!(*a > 0.0, *b > 0.0);
            }
            let (d, b) = hg.degree_matrices().unwrap();
            proptest::prop_assert!(diag_of(&d).iter().all(|&x| x > 0.0));
            proptest::prop_assert!(diag_of(&b).iter().all(|&x| x > 0.0));
        }
    }
}
