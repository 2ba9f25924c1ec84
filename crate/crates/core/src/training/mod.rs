//! Losses, the per-conversation training loop and validation-based model
//! selection.

mod losses;
mod record;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::{Adam, AdamConfig, Tape};
use crate::error::{Error, Result};
use crate::eval::{confusion, predict_dataset};
use crate::model::{dropout_rng, forward, ConvGraphs, Model, ModelConfig};

pub use losses::{conversation_loss, loss_ce, loss_rec, loss_total, LossParts};
pub use record::{EpochRecord, RunRecord};

/// Which reconstruction slots are supervised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecScope {
    /// Every (utterance, modality) slot, observed or not.
    #[default]
    AllSlots,
    /// Only the slots hidden by the mask.
    MaskedOnly,
}

impl std::str::FromStr for RecScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_slots" | "all-slots" | "all" => Ok(RecScope::AllSlots),
            "masked_only" | "masked-only" | "masked" => Ok(RecScope::MaskedOnly),
            other => Err(Error::Config(format!(
                "unknown reconstruction scope {other:?} (all_slots or masked_only)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Weight of the reconstruction term; classification gets `1 - e`.
    pub loss_weight: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub rec_scope: RecScope,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm cap; off by default.
    pub clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            loss_weight: 0.5,
            adam: AdamConfig::default(),
            seed: 0,
            rec_scope: RecScope::AllSlots,
            patience: 20,
            clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_weight) {
            return Err(Error::Config(format!(
                "loss weight {} outside [0, 1]",
                self.loss_weight
            )));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Prebuilt graphs for every conversation of `ds`.
pub fn build_graphs(ds: &Dataset, window: usize) -> Result<Vec<ConvGraphs>> {
    ds.conversations
        .iter()
        .map(|c| ConvGraphs::build(c, window))
        .collect()
}

/// Mean conversation loss of `model` on `ds` in evaluation mode.
pub fn dataset_loss(
    model: &Model,
    ds: &Dataset,
    graphs: &[ConvGraphs],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (conv, g) in ds.conversations.iter().zip(graphs) {
        let tape = Tape::new();
        let out = model.forward(&tape, conv, g, None)?;
        total += conversation_loss(&tape, &out, conv, cfg)?
            .total
            .value()
            .item();
    }
    Ok(total / ds.conversations.len() as f64)
}

/// Trains a fresh model and returns the parameters with the best
/// validation weighted F1 along with the per-epoch record.
pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Model, RunRecord)> {
    cfg.validate()?;
    if train_ds.conversations.is_empty() || val_ds.conversations.is_empty() {
        return Err(Error::Data(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
    let train_graphs = build_graphs(train_ds, model_cfg.window)?;
    let val_graphs = build_graphs(val_ds, model_cfg.window)?;
    for (conv, g) in train_ds.conversations.iter().zip(&train_graphs) {
        model.register_hypergraph(&conv.id, &g.hypergraph)?;
    }

    let mut record = RunRecord::default();
    let mut best = model.clone();
    let mut best_waf1 = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut adam = Adam::new(cfg.adam.clone());
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut drop_rng = dropout_rng(cfg.seed);
    let mut order: Vec<usize> = (0..train_ds.conversations.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut order_rng);
        let mut train_loss = 0.0;
        for &k in &order {
            let conv = &train_ds.conversations[k];
            let tape = Tape::new();
            let out = forward(
                &tape,
                &model.config,
                &model.params,
                conv,
                &train_graphs[k],
                Some(&mut drop_rng),
            )?;
            let loss = conversation_loss(&tape, &out, conv, cfg)?.total;
            let value = loss.value().item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {value} at epoch {epoch}"
                )));
            }
            train_loss += value;
            tape.backward(loss, &mut model.params)?;
            if let Some(c) = cfg.clip {
                let norm = model.params.grad_norm();
                if norm > c {
                    model.params.scale_grads(c / norm);
                }
            }
            adam.step(&mut model.params);
        }
        train_loss /= order.len() as f64;

        let val_loss = dataset_loss(&model, val_ds, &val_graphs, cfg)?;
        let preds = predict_dataset(&model, val_ds, Some(&val_graphs))?;
        let val_waf1 = confusion(val_ds, &preds)?.waf1()?;
        record.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_waf1,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: train {train_loss:.4} val {val_loss:.4} waf1 {val_waf1:.4}");
        if val_waf1 > best_waf1 {
            best_waf1 = val_waf1;
            best = model.clone();
            record.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log::info!(
                    "stopping after epoch {epoch}: no validation gain for {} epochs",
                    cfg.patience
                );
                break;
            }
        }
    }
    Ok((best, record))
}
