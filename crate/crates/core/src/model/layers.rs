//! Differentiable building blocks. Each takes tape variables, so the same
//! code serves training, inference and per-layer gradient checks.

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, RelationKind, WeightedHypergraph};

/// Weights of one GRU direction. Gate columns are ordered `z | r | n`.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights<'t> {
    /// `[in, 3·hd]`.
    pub w_x: Var<'t>,
    /// `[hd, 2·hd]`, recurrent part of the update and reset gates.
    pub u_zr: Var<'t>,
    /// `[hd, hd]`, recurrent part of the candidate.
    pub u_n: Var<'t>,
    /// `[3·hd]`.
    pub b: Var<'t>,
}

/// One GRU step given the precomputed input term `x W_x + b` (`[1, 3·hd]`):
///
/// ```text
/// z = σ(x_z + h U_z)        r = σ(x_r + h U_r)
/// c = tanh(x_n + (r ⊙ h) U_n)
/// h' = h + z ⊙ (c − h)
/// ```
pub fn gru_step<'t>(x_proj: Var<'t>, h: Var<'t>, w: &GruWeights<'t>) -> Result<Var<'t>> {
    let hd = h.shape()[1];
    let zr = x_proj
        .slice(1, 0, 2 * hd)?
        .add(h.matmul(w.u_zr)?)?
        .sigmoid();
    let z = zr.slice(1, 0, hd)?;
    let r = zr.slice(1, hd, hd)?;
    let cand = x_proj
        .slice(1, 2 * hd, hd)?
        .add(r.mul(h)?.matmul(w.u_n)?)?
        .tanh();
    h.add(z.mul(cand.sub(h)?)?)
}

/// Runs one direction over the rows of `x` (`[n, in]`). Output row `t` is the
/// hidden state after consuming input row `t`, whichever the direction.
pub fn gru_pass<'t>(
    tape: &'t Tape,
    x: Var<'t>,
    w: &GruWeights<'t>,
    reverse: bool,
) -> Result<Var<'t>> {
    let n = x.shape()[0];
    let hd = w.u_n.shape()[0];
    let proj = x.matmul(w.w_x)?.add_bias(w.b)?;
    let mut h = tape.constant(Tensor::zeros(&[1, hd]));
    let mut states = vec![h; n];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for t in order {
        h = gru_step(proj.slice(0, t, 1)?, h, w)?;
        states[t] = h;
    }
    tape.concat(&states, 0)
}

/// Relation-typed mean aggregation followed by ReLU:
/// `v_i = ReLU(Σ_r Σ_{j ∈ N_i^r} W_r h_j / |N_i^r|)`.
///
/// `weights[r]` is the `[in, out]` transform of relation `r`; relations
/// without edges in `graph` are skipped.
pub fn rgcn<'t>(
    tape: &'t Tape,
    h: Var<'t>,
    graph: &InteractionGraph,
    kind: RelationKind,
    weights: &[Var<'t>],
    speaker_space: usize,
) -> Result<Var<'t>> {
    let n = graph.n;
    let mut adj: Vec<Option<Tensor>> = vec![None; weights.len()];
    for (e, deg) in graph.edges.iter().zip(graph.degrees(kind)) {
        let r = e.relation(kind, speaker_space);
        let a = adj
            .get_mut(r)
            .ok_or_else(|| {
                Error::Graph(format!(
                    "relation {r} has no weight ({} available)",
                    weights.len()
                ))
            })?
            .get_or_insert_with(|| Tensor::zeros(&[n, n]));
        a.data_mut()[e.src * n + e.dst] += 1.0 / deg.out as f64;
    }
    let mut acc: Option<Var<'t>> = None;
    for (a, &w) in adj.into_iter().zip(weights) {
        let Some(a) = a else { continue };
        let term = tape.constant(a).matmul(h.matmul(w)?)?;
        acc = Some(match acc {
            Some(s) => s.add(term)?,
            None => term,
        });
    }
    Ok(acc.expect("every graph has at least one self edge").relu())
}

/// `layers` rounds of `V ← LeakyReLU(D⁻¹ H W_e B⁻¹ Ĥᵀ V)`.
///
/// `gamma` holds one positive weight per incidence (ordered as
/// `hg.incidences`), `lambda` one per hyperedge. Degrees are rebuilt from
/// them on every call so both stay differentiable.
pub fn hypergraph_conv<'t>(
    tape: &'t Tape,
    v: Var<'t>,
    hg: &WeightedHypergraph,
    gamma: Var<'t>,
    lambda: Var<'t>,
    layers: usize,
    slope: f64,
) -> Result<Var<'t>> {
    if layers == 0 {
        return Ok(v);
    }
    let e = hg.num_edges();
    let h_w = tape.scatter_dense(gamma, hg.incidences.clone(), [hg.n, e])?;
    let h_bin = tape.constant(hg.incidence());
    let edge_deg = h_w.sum_axis(0)?;
    let node_deg = h_bin.matmul(lambda.reshape(&[e, 1])?)?;
    if edge_deg
        .value()
        .data()
        .iter()
        .chain(node_deg.value().data())
        .any(|&d| d <= 0.0)
    {
        return Err(Error::Graph("singular hypergraph degree matrix".into()));
    }
    let edge_coef = lambda.mul(edge_deg.recip())?;
    let node_coef = node_deg.recip();
    let h_wt = h_w.transpose()?;
    let mut v = v;
    for _ in 0..layers {
        let per_edge = h_wt.matmul(v)?.mul_col(edge_coef)?;
        v = h_bin
            .matmul(per_edge)?
            .mul_col(node_coef)?
            .leaky_relu(slope);
    }
    Ok(v)
}

/// Signed residual aggregation:
/// `l_i = v_i + Σ_r Σ_{j ∈ N_i^r} tanh(w_r · [v_i ; v_j] / sqrt(|N_i^r| |N_j^r|)) v_j`.
///
/// `gate` is `[2·d, R]`; column `r` is `w_r`, its first `d` rows act on
/// `v_i` and the rest on `v_j`.
pub fn freq_gate<'t>(
    tape: &'t Tape,
    v: Var<'t>,
    graph: &InteractionGraph,
    kind: RelationKind,
    gate: Var<'t>,
    speaker_space: usize,
) -> Result<Var<'t>> {
    let d = v.shape()[1];
    let relations = gate.shape()[1];
    if gate.shape()[0] != 2 * d {
        return Err(Error::Shape {
            op: "freq_gate",
            lhs: v.shape(),
            rhs: gate.shape(),
        });
    }
    let self_part = v.matmul(gate.slice(0, 0, d)?)?;
    let nbr_part = v.matmul(gate.slice(0, d, d)?)?;
    let mut src_pos = Vec::with_capacity(graph.edges.len());
    let mut dst_pos = Vec::with_capacity(graph.edges.len());
    let mut norm = Vec::with_capacity(graph.edges.len());
    for (e, deg) in graph.edges.iter().zip(graph.degrees(kind)) {
        let r = e.relation(kind, speaker_space);
        if r >= relations {
            return Err(Error::Graph(format!(
                "relation {r} has no gate ({relations} available)"
            )));
        }
        src_pos.push((e.src, r));
        dst_pos.push((e.dst, r));
        norm.push(1.0 / ((deg.out * deg.into) as f64).sqrt());
    }
    let k = norm.len();
    let pre = self_part
        .gather_elems(src_pos)?
        .add(nbr_part.gather_elems(dst_pos)?)?;
    let g = pre.mul(tape.constant(Tensor::new(&[k, 1], norm)?))?.tanh();
    let dst: Vec<usize> = graph.edges.iter().map(|e| e.dst).collect();
    let src: Vec<usize> = graph.edges.iter().map(|e| e.src).collect();
    let messages = v
        .gather_rows(dst)?
        .mul_col(g)?
        .scatter_add_rows(src, graph.n)?;
    v.add(messages)
}

/// Multi-head scaled dot-product self-attention over rows of `x`.
/// `w_q`, `w_k`, `w_v` are `[in, a]`, `w_o` is `[a, out]`; `a` must be a
/// multiple of `heads`, and scores are scaled by the per-head extent.
pub fn attention<'t>(
    tape: &'t Tape,
    x: Var<'t>,
    w_q: Var<'t>,
    w_k: Var<'t>,
    w_v: Var<'t>,
    w_o: Var<'t>,
    heads: usize,
) -> Result<Var<'t>> {
    let a = w_q.shape()[1];
    if heads == 0 || a % heads != 0 {
        return Err(Error::Config(format!(
            "attention extent {a} is not divisible by {heads} heads"
        )));
    }
    let dk = a / heads;
    let q = x.matmul(w_q)?;
    let k = x.matmul(w_k)?;
    let v = x.matmul(w_v)?;
    let scale = 1.0 / (dk as f64).sqrt();
    let outs = (0..heads)
        .map(|i| {
            let qh = q.slice(1, i * dk, dk)?;
            let kh = k.slice(1, i * dk, dk)?;
            let vh = v.slice(1, i * dk, dk)?;
            qh.matmul(kh.transpose()?)?
                .scale(scale)
                .softmax(1)?
                .matmul(vh)
        })
        .collect::<Result<Vec<_>>>()?;
    tape.concat(&outs, 1)?.matmul(w_o)
}
