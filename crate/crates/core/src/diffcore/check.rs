//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward pass, so it stays
//! independent of the backward rules it is checking.

use super::{OpKind, ParamId, ParamStore, Tape, Var};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Pass threshold on the max relative error.
    pub tolerance: f64,
    /// Denominator floor so that near-zero gradients are compared absolutely.
    pub floor: f64,
    /// Corrupts the analytic backward pass of this op kind (negative control).
    pub fault: Option<OpKind>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            fault: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Pins a closure to the higher-ranked signature [`check_gradients`] needs;
/// `let` bindings otherwise infer a single concrete lifetime.
pub fn objective<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    f
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backward-pass gradients of `objective` against central
/// differences for every parameter in `only` (all when `None`).
pub fn check_gradients<F>(
    store: &ParamStore,
    objective: F,
    only: Option<&[ParamId]>,
    cfg: &GradCheckConfig,
) -> Result<Vec<ParamCheck>>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    {
        let tape = match cfg.fault {
            Some(kind) => Tape::with_fault(kind),
            None => Tape::new(),
        };
        let loss = objective(&tape, &analytic_store)?;
        tape.backward(loss, &mut analytic_store)?;
    }

    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        Ok(objective(&tape, s)?.value().item())
    };

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.iter().map(|(id, _)| id).collect(),
    };
    let mut probe = store.clone();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let analytic = analytic_store.get(id).grad();
        let mut worst = ParamCheck {
            name: store.get(id).name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..analytic.numel() {
            let orig = probe.value(id).data()[k];
            probe.get_mut(id).value.data_mut()[k] = orig + cfg.eps;
            let up = eval(&probe)?;
            probe.get_mut(id).value.data_mut()[k] = orig - cfg.eps;
            let down = eval(&probe)?;
            probe.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = analytic.data()[k];
            let err = relative_error(a, numeric, cfg.floor);
            if err > worst.max_rel_err || k == 0 {
                worst.max_rel_err = err;
                worst.worst_index = k;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        out.push(worst);
    }
    Ok(out)
}
