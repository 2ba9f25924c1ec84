//! Missing-modality simulation.
//!
//! The missing rate of a dataset with `n` utterances is
//! `1 - (available slots) / (n * 3)`. Because every utterance keeps at least
//! one modality the rate is capped at `2/3`. The conventional evaluation grid
//! tops out at `0.7`, which stands for that cap: requests in `(2/3, 0.7]` are
//! realised at exactly `2/3`, and anything above `0.7` is an error.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Modality, NUM_MODALITIES};
use crate::error::{Error, Result};

/// `(modalities - 1) / modalities`.
pub const RATE_CAP: f64 = (NUM_MODALITIES as f64 - 1.0) / NUM_MODALITIES as f64;

/// Nominal grid value denoting [`RATE_CAP`].
const NOMINAL_CAP: f64 = 0.7;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSlot(pub String, pub usize, pub Modality);

/// Record of one masking realisation; enough to replay it bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub seed: u64,
    pub requested: f64,
    /// Rate actually targeted after snapping the nominal grid cap.
    pub effective: f64,
    /// (conversation id, zero-based utterance index, modality).
    pub dropped: Vec<DroppedSlot>,
}

impl MaskPlan {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Validates a requested missing rate and returns the rate to realise.
pub fn effective_rate(requested: f64) -> Result<f64> {
    if !(requested >= 0.0) {
        return Err(Error::Protocol(format!(
            "missing rate {requested} must be >= 0"
        )));
    }
    if requested <= RATE_CAP {
        Ok(requested)
    } else if (requested - NOMINAL_CAP).abs() <= 1e-9 {
        Ok(RATE_CAP)
    } else {
        Err(Error::Protocol(format!(
            "missing rate {requested} exceeds the (Mods-1)/Mods = {RATE_CAP:.4} cap \
             (at least one modality must survive per utterance; 0.7 denotes the cap)"
        )))
    }
}

pub fn missing_rate(ds: &Dataset) -> Result<f64> {
    let n = ds.num_utterances();
    if n == 0 {
        return Err(Error::Data("missing rate of an empty dataset".into()));
    }
    let available: usize = ds.utterances().map(|u| u.available()).sum();
    Ok(1.0 - available as f64 / (n * NUM_MODALITIES) as f64)
}

/// Masks modality slots so that exactly `round(M * n * 3)` slots are
/// unavailable, choosing uniformly among slots whose removal keeps at least
/// one modality in their utterance. Features are never altered.
pub fn apply_missing(ds: &Dataset, requested: f64, seed: u64) -> Result<(Dataset, MaskPlan)> {
    let effective = effective_rate(requested)?;
    let n = ds.num_utterances();
    let target = (effective * (n * NUM_MODALITIES) as f64).round() as usize;
    let already: usize = ds
        .utterances()
        .map(|u| NUM_MODALITIES - u.available())
        .sum();

    let mut slots: Vec<(usize, usize, usize)> = Vec::new();
    for (c, conv) in ds.conversations.iter().enumerate() {
        for (i, u) in conv.utterances.iter().enumerate() {
            for m in 0..NUM_MODALITIES {
                if u.mask[m] {
                    slots.push((c, i, m));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    slots.shuffle(&mut rng);

    let mut out = ds.clone();
    let mut need = target.saturating_sub(already);
    let mut dropped = Vec::with_capacity(need);
    for (c, i, m) in slots {
        if need == 0 {
            break;
        }
        let utt = &mut out.conversations[c].utterances[i];
        if utt.available() > 1 {
            utt.mask[m] = false;
            dropped.push(DroppedSlot(
                out.conversations[c].id.clone(),
                i,
                Modality::ALL[m],
            ));
            need -= 1;
        }
    }
    if need > 0 {
        return Err(Error::Protocol(format!(
            "could not drop {target} slots while keeping one modality per utterance"
        )));
    }
    // Canonical order so sidecars compare equal regardless of shuffle.
    let order: std::collections::HashMap<&str, usize> = ds
        .conversations
        .iter()
        .enumerate()
        .map(|(k, c)| (c.id.as_str(), k))
        .collect();
    dropped.sort_by_key(|DroppedSlot(c, i, m)| (order[c.as_str()], *i, *m));
    let plan = MaskPlan {
        seed,
        requested,
        effective,
        dropped,
    };
    Ok((out, plan))
}

/// Replays a saved plan on an unmasked copy of the same dataset.
pub fn apply_mask_plan(ds: &Dataset, plan: &MaskPlan) -> Result<Dataset> {
    let mut out = ds.clone();
    for DroppedSlot(conv_id, i, m) in &plan.dropped {
        let conv = out
            .conversations
            .iter_mut()
            .find(|c| &c.id == conv_id)
            .ok_or_else(|| {
                Error::Data(format!("mask plan names unknown conversation {conv_id}"))
            })?;
        let utt = conv.utterances.get_mut(*i).ok_or_else(|| {
            Error::Data(format!(
                "mask plan names utterance {i} beyond conversation {conv_id}"
            ))
        })?;
        utt.mask[m.index()] = false;
    }
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, Split, SynthConfig};

    fn with_masks(masks: &[[bool; 3]]) -> Dataset {
        let cfg = SynthConfig {
            num_conversations: 1,
            utterances_per_conversation: masks.len(),
            dims: [2, 2, 2],
            ..SynthConfig::default()
        };
        let mut ds = synth_generate(&cfg, Split::Train).unwrap();
        for (u, m) in ds.conversations[0].utterances.iter_mut().zip(masks) {
            u.mask = *m;
        }
        ds
    }

    #[test]
    fn missing_rate_hand_cases() {
        assert_eq!(missing_rate(&with_masks(&[[true; 3]])).unwrap(), 0.0);
        let r = missing_rate(&with_masks(&[[true, false, false], [true, false, false]])).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        let r = missing_rate(&with_masks(&[[true, true, false], [true, false, true]])).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_rate_of_empty_dataset_errors() {
        let mut ds = with_masks(&[[true; 3]]);
        ds.conversations.clear();
        assert!(missing_rate(&ds).is_err());
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let ds = with_masks(&[[true; 3]; 5]);
        let (masked, plan) = apply_missing(&ds, 0.0, 1).unwrap();
        assert_eq!(masked, ds);
        assert!(plan.dropped.is_empty());
    }

    #[test]
    fn cap_rate_leaves_one_modality_each() {
        let ds = with_masks(&[[true; 3]; 7]);
        for rate in [2.0 / 3.0, 0.7] {
            let (masked, plan) = apply_missing(&ds, rate, 5).unwrap();
            assert!(masked.utterances().all(|u| u.available() == 1));
            assert_eq!(plan.dropped.len(), 14);
            assert_eq!(plan.effective, RATE_CAP);
        }
    }

    #[test]
    fn rates_above_nominal_cap_error() {
        let ds = with_masks(&[[true; 3]; 3]);
        for rate in [0.8, 0.71, 1.0, -0.1, f64::NAN] {
            match apply_missing(&ds, rate, 0) {
                Err(Error::Protocol(msg)) => {
                    assert!(rate.is_nan() || rate < 0.0 || msg.contains("cap"))
                }
                other => panic!("rate {rate}: {other:?}"),
            }
        }
    }

    #[test]
    fn plan_replay_is_exact_and_features_untouched() {
        let cfg = SynthConfig::default();
        let ds = synth_generate(&cfg, Split::Train).unwrap();
        let (masked, plan) = apply_missing(&ds, 0.4, 77).unwrap();
        assert_eq!(apply_mask_plan(&ds, &plan).unwrap(), masked);
        for (a, b) in ds.utterances().zip(masked.utterances()) {
            assert_eq!(a.features, b.features);
        }
        let again = apply_missing(&ds, 0.4, 77).unwrap();
        assert_eq!(again.1, plan);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.json");
        plan.save(&path).unwrap();
        assert_eq!(MaskPlan::load(&path).unwrap(), plan);
    }
}
