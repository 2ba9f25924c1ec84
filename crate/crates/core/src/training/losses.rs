use super::{RecScope, TrainConfig};
use crate::data::{Conversation, NUM_MODALITIES};
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::ForwardOutput;

/// Mean negative log-probability of the true class, with the log clamped.
pub fn loss_ce<'t>(probs: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let shape = probs.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::Shape {
            op: "loss_ce",
            lhs: shape,
            rhs: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= shape[1]) {
        return Err(Error::Data(format!(
            "label {bad} outside {} classes",
            shape[1]
        )));
    }
    let picks = labels.iter().copied().enumerate().collect();
    Ok(probs.gather_elems(picks)?.ln_clamped().mean().scale(-1.0))
}

/// `Σ_m (1 / (d_m n_m)) Σ_i ‖f̂_i^m − f_i^m‖²`, where `n_m` counts the
/// supervised rows of modality `m` under `scope`.
pub fn loss_rec<'t>(
    tape: &'t Tape,
    recon: &[Var<'t>; NUM_MODALITIES],
    conv: &Conversation,
    scope: RecScope,
) -> Result<Var<'t>> {
    let mut total: Option<Var<'t>> = None;
    for (m, &pred) in recon.iter().enumerate() {
        let rows: Vec<usize> = match scope {
            RecScope::AllSlots => (0..conv.len()).collect(),
            RecScope::MaskedOnly => (0..conv.len())
                .filter(|&i| !conv.utterances[i].mask[m])
                .collect(),
        };
        if rows.is_empty() {
            continue;
        }
        let truth = Tensor::from_rows(
            &rows
                .iter()
                .map(|&i| conv.utterances[i].features[m].clone())
                .collect::<Vec<_>>(),
        )?;
        let pred = if rows.len() == conv.len() {
            pred
        } else {
            pred.gather_rows(rows)?
        };
        let term = pred.sub(tape.constant(truth))?.square().mean();
        total = Some(match total {
            Some(t) => t.add(term)?,
            None => term,
        });
    }
    Ok(total.unwrap_or_else(|| tape.constant(Tensor::scalar(0.0))))
}

/// `(1 − e) ce + e rec`.
pub fn loss_total<'t>(ce: Var<'t>, rec: Var<'t>, e: f64) -> Result<Var<'t>> {
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::Config(format!("loss weight {e} outside [0, 1]")));
    }
    ce.scale(1.0 - e).add(rec.scale(e))
}

pub struct LossParts<'t> {
    pub ce: Var<'t>,
    pub rec: Var<'t>,
    pub total: Var<'t>,
}

/// Joint objective of one forward pass.
pub fn conversation_loss<'t>(
    tape: &'t Tape,
    out: &ForwardOutput<'t>,
    conv: &Conversation,
    cfg: &TrainConfig,
) -> Result<LossParts<'t>> {
    let ce = loss_ce(out.probs, &conv.labels())?;
    let rec = loss_rec(tape, &out.recon, conv, cfg.rec_scope)?;
    let total = loss_total(ce, rec, cfg.loss_weight)?;
    Ok(LossParts { ce, rec, total })
}
