//! Reverse-mode differentiation over a Wengert list.
//!
//! Every operation on a [`Var`] appends a node holding its forward value and
//! enough bookkeeping to compute a vector-Jacobian product. [`Tape::backward`]
//! walks the list in reverse and accumulates gradients into the
//! [`ParamStore`] entries that were bound with [`Tape::param`].

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied inside [`Var::ln_clamped`].
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Tanh,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Act(Activation),
    Exp,
    Recip,
    Square,
    LnClamped,
}

/// Operation families, used to name nodes and to target the fault hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Param,
    MatMul,
    Add,
    Sub,
    Mul,
    AddBias,
    MulCol,
    Scale,
    Tanh,
    Relu,
    LeakyRelu,
    Sigmoid,
    Exp,
    Recip,
    Square,
    Ln,
    Softmax,
    Concat,
    Slice,
    Transpose,
    Sum,
    SumAxis,
    Reshape,
    GatherRows,
    ScatterAddRows,
    GatherElems,
    ScatterDense,
    Dropout,
}

impl std::str::FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use OpKind::*;
        let all = [
            MatMul,
            Add,
            Sub,
            Mul,
            AddBias,
            MulCol,
            Scale,
            Tanh,
            Relu,
            LeakyRelu,
            Sigmoid,
            Exp,
            Recip,
            Square,
            Ln,
            Softmax,
            Concat,
            Slice,
            Transpose,
            Sum,
            SumAxis,
            Reshape,
            GatherRows,
            ScatterAddRows,
            GatherElems,
            ScatterDense,
            Dropout,
        ];
        all.into_iter()
            .find(|k| format!("{k:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown op kind {s}")))
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    Unary(usize, Unary),
    Softmax(usize, usize),
    Concat(Vec<usize>, usize),
    Slice {
        src: usize,
        axis: usize,
        start: usize,
    },
    Transpose(usize),
    Sum(usize),
    SumAxis(usize, usize),
    Reshape(usize),
    GatherRows(usize, Vec<usize>),
    ScatterAddRows(usize, Vec<usize>),
    GatherElems(usize, Vec<(usize, usize)>),
    ScatterDense(usize, Vec<(usize, usize)>),
    Dropout(usize, Tensor),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::AddBias(..) => OpKind::AddBias,
            Op::MulCol(..) => OpKind::MulCol,
            Op::Scale(..) => OpKind::Scale,
            Op::Unary(_, u) => match u {
                Unary::Act(Activation::Tanh) => OpKind::Tanh,
                Unary::Act(Activation::Relu) => OpKind::Relu,
                Unary::Act(Activation::LeakyRelu(_)) => OpKind::LeakyRelu,
                Unary::Act(Activation::Sigmoid) => OpKind::Sigmoid,
                Unary::Exp => OpKind::Exp,
                Unary::Recip => OpKind::Recip,
                Unary::Square => OpKind::Square,
                Unary::LnClamped => OpKind::Ln,
            },
            Op::Softmax(..) => OpKind::Softmax,
            Op::Concat(..) => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Sum(_) => OpKind::Sum,
            Op::SumAxis(..) => OpKind::SumAxis,
            Op::Reshape(_) => OpKind::Reshape,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::ScatterAddRows(..) => OpKind::ScatterAddRows,
            Op::GatherElems(..) => OpKind::GatherElems,
            Op::ScatterDense(..) => OpKind::ScatterDense,
            Op::Dropout(..) => OpKind::Dropout,
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Recording context for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    bound: RefCell<HashMap<ParamId, usize>>,
    fault: Option<OpKind>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test hook: the backward pass of every `kind` node is scaled by 1.5.
    /// Used as a negative control for the gradient checker.
    pub fn with_fault(kind: OpKind) -> Self {
        Self {
            fault: Some(kind),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter. Binding the same id twice returns the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Var<'_> {
        if let Some(&node) = self.bound.borrow().get(&id) {
            return Var {
                tape: self,
                id: node,
            };
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.bound.borrow_mut().insert(id, v.id);
        v
    }

    pub fn param_named(&self, store: &ParamStore, name: &str) -> Result<Var<'_>> {
        Ok(self.param(store, store.expect_id(name)?))
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat(&refs, axis)?;
        Ok(self.push(out, Op::Concat(parts.iter().map(|p| p.id).collect(), axis)))
    }

    /// Dense `shape` tensor that is zero except `out[positions[k]] = values[k]`.
    /// Positions must be distinct.
    pub fn scatter_dense<'t>(
        &'t self,
        values: Var<'t>,
        positions: Vec<(usize, usize)>,
        shape: [usize; 2],
    ) -> Result<Var<'t>> {
        let v = values.value();
        if v.numel() != positions.len() {
            return Err(Error::Shape {
                op: "scatter_dense",
                lhs: v.shape().to_vec(),
                rhs: vec![positions.len()],
            });
        }
        let mut out = Tensor::zeros(&shape);
        for (k, &(r, c)) in positions.iter().enumerate() {
            if r >= shape[0] || c >= shape[1] {
                return Err(Error::Tensor(format!(
                    "scatter position ({r},{c}) outside {shape:?}"
                )));
            }
            out.data_mut()[r * shape[1] + c] = v.data()[k];
        }
        Ok(self.push(out, Op::ScatterDense(values.id, positions)))
    }

    /// Reverse pass from a scalar `loss`; parameter gradients are added to
    /// whatever `store` already holds.
    pub fn backward(&self, loss: Var<'_>, store: &mut ParamStore) -> Result<()> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                lhs: root.value.shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
            match &mut grads[id] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for id in (0..=loss.id).rev() {
            let Some(mut g) = grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if self.fault == Some(node.op.kind()) {
                g = g.map(|v| v * 1.5);
            }
            let val = |i: usize| -> &Tensor { nodes[i].value.as_ref() };
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => store.accumulate_grad(*pid, &g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&val(*b).transpose()?)?;
                    let gb = val(*a).transpose()?.matmul(&g)?;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip_map(val(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(0)?.reshaped(val(*b).shape())?;
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::MulCol(x, s) => {
                    let xv = val(*x);
                    let sv = val(*s);
                    let cols = xv.cols();
                    let mut gx = g.clone();
                    let mut gs = vec![0.0; xv.rows()];
                    for r in 0..xv.rows() {
                        let scale = sv.data()[r];
                        for c in 0..cols {
                            let k = r * cols + c;
                            gs[r] += g.data()[k] * xv.data()[k];
                            gx.data_mut()[k] *= scale;
                        }
                    }
                    acc(&mut grads, *s, Tensor::from_parts(sv.shape().to_vec(), gs));
                    acc(&mut grads, *x, gx);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|v| v * c)),
                Op::Unary(a, u) => {
                    let x = val(*a);
                    let y = node.value.as_ref();
                    let local = match u {
                        Unary::Act(Activation::Tanh) => y.map(|t| 1.0 - t * t),
                        Unary::Act(Activation::Sigmoid) => y.map(|s| s * (1.0 - s)),
                        Unary::Act(Activation::Relu) => x.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                        Unary::Act(Activation::LeakyRelu(slope)) => {
                            x.map(|v| if v >= 0.0 { 1.0 } else { *slope })
                        }
                        Unary::Exp => y.clone(),
                        Unary::Recip => y.map(|r| -r * r),
                        Unary::Square => x.map(|v| 2.0 * v),
                        Unary::LnClamped => x.map(|v| if v > LOG_CLAMP { 1.0 / v } else { 0.0 }),
                    };
                    acc(&mut grads, *a, g.zip_map(&local, |p, q| p * q));
                }
                Op::Softmax(a, axis) => {
                    let y = node.value.as_ref();
                    let (outer, ext, inner) = Tensor::axis_split(y.shape(), *axis);
                    let mut ga = vec![0.0; y.numel()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |k: usize| (o * ext + k) * inner + i;
                            let dot: f64 =
                                (0..ext).map(|k| g.data()[idx(k)] * y.data()[idx(k)]).sum();
                            for k in 0..ext {
                                ga[idx(k)] = y.data()[idx(k)] * (g.data()[idx(k)] - dot);
                            }
                        }
                    }
                    acc(&mut grads, *a, Tensor::from_parts(y.shape().to_vec(), ga));
                }
                Op::Concat(parts, axis) => {
                    let sizes: Vec<usize> = parts.iter().map(|&p| val(p).shape()[*axis]).collect();
                    for (&p, piece) in parts.iter().zip(g.split(*axis, &sizes)?) {
                        acc(&mut grads, p, piece);
                    }
                }
                Op::Slice { src, axis, start } => {
                    let sv = val(*src);
                    let (outer, ext, inner) = Tensor::axis_split(sv.shape(), *axis);
                    let len = g.shape()[*axis];
                    let mut gs = Tensor::zeros(sv.shape());
                    for o in 0..outer {
                        let dst = (o * ext + start) * inner;
                        let from = o * len * inner;
                        gs.data_mut()[dst..dst + len * inner]
                            .copy_from_slice(&g.data()[from..from + len * inner]);
                    }
                    acc(&mut grads, *src, gs);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()?),
                Op::Sum(a) => acc(&mut grads, *a, Tensor::full(val(*a).shape(), g.item())),
                Op::SumAxis(a, axis) => {
                    let shape = val(*a).shape();
                    let (outer, ext, inner) = Tensor::axis_split(shape, *axis);
                    let mut ga = vec![0.0; outer * ext * inner];
                    for o in 0..outer {
                        for k in 0..ext {
                            for i in 0..inner {
                                ga[(o * ext + k) * inner + i] = g.data()[o * inner + i];
                            }
                        }
                    }
                    acc(&mut grads, *a, Tensor::from_parts(shape.to_vec(), ga));
                }
                Op::Reshape(a) => acc(&mut grads, *a, g.reshaped(val(*a).shape())?),
                Op::GatherRows(a, idx) => {
                    let shape = val(*a).shape();
                    let cols = shape[1];
                    let mut ga = Tensor::zeros(shape);
                    for (k, &r) in idx.iter().enumerate() {
                        for c in 0..cols {
                            ga.data_mut()[r * cols + c] += g.data()[k * cols + c];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAddRows(a, idx) => {
                    let cols = g.cols();
                    let mut ga = Vec::with_capacity(idx.len() * cols);
                    for &r in idx {
                        ga.extend_from_slice(g.row(r));
                    }
                    acc(
                        &mut grads,
                        *a,
                        Tensor::from_parts(val(*a).shape().to_vec(), ga),
                    );
                }
                Op::GatherElems(a, pos) => {
                    let shape = val(*a).shape();
                    let cols = shape[1];
                    let mut ga = Tensor::zeros(shape);
                    for (k, &(r, c)) in pos.iter().enumerate() {
                        ga.data_mut()[r * cols + c] += g.data()[k];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterDense(a, pos) => {
                    let cols = g.cols();
                    let ga = pos.iter().map(|&(r, c)| g.data()[r * cols + c]).collect();
                    acc(
                        &mut grads,
                        *a,
                        Tensor::from_parts(val(*a).shape().to_vec(), ga),
                    );
                }
                Op::Dropout(a, mask) => acc(&mut grads, *a, g.zip_map(mask, |p, q| p * q)),
            }
        }
        Ok(())
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    fn unary(self, u: Unary, f: impl Fn(f64) -> f64) -> Var<'t> {
        let out = self.value().map(f);
        self.tape.push(out, Op::Unary(self.id, u))
    }

    fn same_shape(self, other: Var<'t>, op: &'static str) -> Result<(Rc<Tensor>, Rc<Tensor>)> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::Shape {
                op,
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        Ok((a, b))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.same_shape(other, "add")?;
        Ok(self
            .tape
            .push(a.zip_map(&b, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.same_shape(other, "sub")?;
        Ok(self
            .tape
            .push(a.zip_map(&b, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = self.same_shape(other, "mul")?;
        Ok(self
            .tape
            .push(a.zip_map(&b, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    /// Adds a row vector (`[n]` or `[1, n]`) to every row of an `m×n` matrix.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        if x.rank() != 2 || b.numel() != x.cols() {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let cols = x.cols();
        let mut out = x.as_ref().clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v += b.data()[k % cols];
        }
        Ok(self.tape.push(out, Op::AddBias(self.id, bias.id)))
    }

    /// Scales row `i` of an `m×n` matrix by `scale[i]` (`scale` is `[m]` or `[m, 1]`).
    pub fn mul_col(self, scale: Var<'t>) -> Result<Var<'t>> {
        let (x, s) = (self.value(), scale.value());
        if x.rank() != 2 || s.numel() != x.rows() {
            return Err(Error::Shape {
                op: "mul_col",
                lhs: x.shape().to_vec(),
                rhs: s.shape().to_vec(),
            });
        }
        let cols = x.cols();
        let mut out = x.as_ref().clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v *= s.data()[k / cols];
        }
        Ok(self.tape.push(out, Op::MulCol(self.id, scale.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let out = self.value().map(|v| v * c);
        self.tape.push(out, Op::Scale(self.id, c))
    }

    pub fn activate(self, act: Activation) -> Var<'t> {
        match act {
            Activation::Tanh => self.unary(Unary::Act(act), f64::tanh),
            Activation::Relu => self.unary(Unary::Act(act), |v| v.max(0.0)),
            Activation::LeakyRelu(slope) => {
                self.unary(
                    Unary::Act(act),
                    move |v| if v >= 0.0 { v } else { slope * v },
                )
            }
            Activation::Sigmoid => self.unary(Unary::Act(act), |v| 1.0 / (1.0 + (-v).exp())),
        }
    }

    pub fn tanh(self) -> Var<'t> {
        self.activate(Activation::Tanh)
    }

    pub fn relu(self) -> Var<'t> {
        self.activate(Activation::Relu)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.activate(Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.activate(Activation::Sigmoid)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Unary::Exp, f64::exp)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary(Unary::Recip, |v| 1.0 / v)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Unary::Square, |v| v * v)
    }

    /// `ln(max(x, LOG_CLAMP))`.
    pub fn ln_clamped(self) -> Var<'t> {
        self.unary(Unary::LnClamped, |v| v.max(LOG_CLAMP).ln())
    }

    pub fn softmax(self, axis: usize) -> Result<Var<'t>> {
        let out = self.value().softmax(axis)?;
        Ok(self.tape.push(out, Op::Softmax(self.id, axis)))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let out = self.value().transpose()?;
        Ok(self.tape.push(out, Op::Transpose(self.id)))
    }

    pub fn sum(self) -> Var<'t> {
        let out = Tensor::scalar(self.value().sum());
        self.tape.push(out, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        let out = self.value().sum_axis(axis)?;
        Ok(self.tape.push(out, Op::SumAxis(self.id, axis)))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshaped(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let out = self.value().slice(axis, start, len)?;
        Ok(self.tape.push(
            out,
            Op::Slice {
                src: self.id,
                axis,
                start,
            },
        ))
    }

    /// Rows `idx[k]` of a matrix, in order (repeats allowed).
    pub fn gather_rows(self, idx: Vec<usize>) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 || idx.is_empty() || idx.iter().any(|&r| r >= x.rows()) {
            return Err(Error::Tensor(format!(
                "gather_rows indices invalid for {:?}",
                x.shape()
            )));
        }
        let mut out = Vec::with_capacity(idx.len() * x.cols());
        for &r in &idx {
            out.extend_from_slice(x.row(r));
        }
        let shape = vec![idx.len(), x.cols()];
        Ok(self
            .tape
            .push(Tensor::from_parts(shape, out), Op::GatherRows(self.id, idx)))
    }

    /// Output row `idx[k]` receives the sum of input rows `k`; `rows` output rows.
    pub fn scatter_add_rows(self, idx: Vec<usize>, rows: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 || idx.len() != x.rows() || idx.iter().any(|&r| r >= rows) {
            return Err(Error::Tensor(format!(
                "scatter_add_rows indices invalid for {:?}",
                x.shape()
            )));
        }
        let cols = x.cols();
        let mut out = Tensor::zeros(&[rows, cols]);
        for (k, &r) in idx.iter().enumerate() {
            for c in 0..cols {
                out.data_mut()[r * cols + c] += x.data()[k * cols + c];
            }
        }
        Ok(self.tape.push(out, Op::ScatterAddRows(self.id, idx)))
    }

    /// Matrix entries at `positions`, as a `[k, 1]` column.
    pub fn gather_elems(self, positions: Vec<(usize, usize)>) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2
            || positions.is_empty()
            || positions
                .iter()
                .any(|&(r, c)| r >= x.rows() || c >= x.cols())
        {
            return Err(Error::Tensor(format!(
                "gather_elems positions invalid for {:?}",
                x.shape()
            )));
        }
        let data = positions.iter().map(|&(r, c)| x.get2(r, c)).collect();
        let shape = vec![positions.len(), 1];
        Ok(self.tape.push(
            Tensor::from_parts(shape, data),
            Op::GatherElems(self.id, positions),
        ))
    }

    /// Inverted dropout. Identity when not training or when `p == 0`.
    pub fn dropout<R: Rng>(self, p: f64, training: bool, rng: &mut R) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(self);
        }
        let x = self.value();
        let keep = 1.0 / (1.0 - p);
        let mask_data = (0..x.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mask = Tensor::from_parts(x.shape().to_vec(), mask_data);
        let out = x.zip_map(&mask, |v, m| v * m);
        Ok(self.tape.push(out, Op::Dropout(self.id, mask)))
    }
}
