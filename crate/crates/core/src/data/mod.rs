//! Conversations, the on-disk formats, the synthetic generator and the
//! missing-modality masking protocol.

mod io;
mod masking;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, parse_dataset, write_dataset, DatasetHeader};
pub use masking::{
    apply_mask_plan, apply_missing, effective_rate, missing_rate, DroppedSlot, MaskPlan, RATE_CAP,
};
pub use synth::{synth_generate, SynthConfig};

pub const NUM_MODALITIES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "a")]
    Audio,
    #[serde(rename = "v")]
    Visual,
    #[serde(rename = "t")]
    Text,
}

impl Modality {
    pub const ALL: [Modality; NUM_MODALITIES] = [Modality::Audio, Modality::Visual, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Audio => "a",
            Modality::Visual => "v",
            Modality::Text => "t",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One turn. Features are always present for every modality; `mask` only
/// hides them.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub speaker: usize,
    /// Zero-based class id.
    pub label: usize,
    pub mask: [bool; NUM_MODALITIES],
    pub features: [Vec<f64>; NUM_MODALITIES],
}

impl Utterance {
    pub fn available(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.available() == NUM_MODALITIES
    }

    pub fn feature(&self, m: Modality) -> &[f64] {
        &self.features[m.index()]
    }

    /// Encoder input: available modalities pass through, masked ones become
    /// zero vectors of the same extent.
    pub fn impute_input(&self) -> [Vec<f64>; NUM_MODALITIES] {
        std::array::from_fn(|m| {
            if self.mask[m] {
                self.features[m].clone()
            } else {
                vec![0.0; self.features[m].len()]
            }
        })
    }

    /// [`Self::impute_input`] flattened in a, v, t order.
    pub fn imputed_row(&self) -> Vec<f64> {
        self.impute_input().concat()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conversation {
    pub id: String,
    /// Speaker ids allowed in this conversation.
    pub speakers: Vec<usize>,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.label).collect()
    }

    pub fn speaker_seq(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.speaker).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub num_classes: usize,
    pub dims: [usize; NUM_MODALITIES],
    pub conversations: Vec<Conversation>,
}

impl Dataset {
    pub fn num_utterances(&self) -> usize {
        self.conversations.iter().map(Conversation::len).sum()
    }

    pub fn feature_extent(&self) -> usize {
        self.dims.iter().sum()
    }

    /// One past the largest speaker id in any roster.
    pub fn speaker_space(&self) -> usize {
        self.conversations
            .iter()
            .flat_map(|c| c.speakers.iter())
            .max()
            .map_or(0, |&s| s + 1)
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.conversations.iter().flat_map(|c| c.utterances.iter())
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 {
            return Err(Error::Data("dataset needs at least one class".into()));
        }
        for conv in &self.conversations {
            if conv.is_empty() {
                return Err(Error::Data(format!(
                    "conversation {} has no utterances",
                    conv.id
                )));
            }
            for (i, u) in conv.utterances.iter().enumerate() {
                let at = || format!("conversation {} utterance {}", conv.id, i + 1);
                if u.available() == 0 {
                    return Err(Error::Data(format!("{}: every modality is masked", at())));
                }
                if u.label >= self.num_classes {
                    return Err(Error::Data(format!(
                        "{}: label {} out of range for {} classes",
                        at(),
                        u.label,
                        self.num_classes
                    )));
                }
                if !conv.speakers.contains(&u.speaker) {
                    return Err(Error::Data(format!(
                        "{}: speaker {} not in roster {:?}",
                        at(),
                        u.speaker,
                        conv.speakers
                    )));
                }
                for m in Modality::ALL {
                    let got = u.features[m.index()].len();
                    if got != self.dims[m.index()] {
                        return Err(Error::Data(format!(
                            "{}: modality {} has extent {got}, expected {}",
                            at(),
                            m.tag(),
                            self.dims[m.index()]
                        )));
                    }
                    if u.features[m.index()].iter().any(|v| !v.is_finite()) {
                        return Err(Error::Data(format!(
                            "{}: non-finite feature in modality {}",
                            at(),
                            m.tag()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Lower-bound view: drops every utterance missing any modality, and any
    /// conversation left empty.
    pub fn complete_only(&self) -> Dataset {
        let conversations = self
            .conversations
            .iter()
            .filter_map(|c| {
                let utterances: Vec<Utterance> = c
                    .utterances
                    .iter()
                    .filter(|u| u.is_complete())
                    .cloned()
                    .collect();
                (!utterances.is_empty()).then(|| Conversation {
                    id: c.id.clone(),
                    speakers: c.speakers.clone(),
                    utterances,
                })
            })
            .collect();
        Dataset {
            conversations,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(mask: [bool; 3]) -> Utterance {
        Utterance {
            speaker: 0,
            label: 0,
            mask,
            features: [vec![1.0, 2.0], vec![3.0, 4.0, 5.0], vec![6.0]],
        }
    }

    #[test]
    fn impute_full_mask_is_passthrough() {
        let u = utt([true; 3]);
        assert_eq!(u.impute_input(), u.features);
    }

    #[test]
    fn impute_zero_fills_masked_slot() {
        let u = utt([true, false, true]);
        let x = u.impute_input();
        assert_eq!(x[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(x[0], u.features[0]);
        assert_eq!(u.imputed_row().len(), 2 + 3 + 1);
        assert_eq!(utt([false, false, true]).imputed_row().len(), 6);
    }

    #[test]
    fn complete_only_drops_partial_utterances() {
        let ds = Dataset {
            split: Split::Test,
            num_classes: 1,
            dims: [2, 3, 1],
            conversations: vec![
                Conversation {
                    id: "x".into(),
                    speakers: vec![0],
                    utterances: vec![utt([true; 3]), utt([true, false, true])],
                },
                Conversation {
                    id: "y".into(),
                    speakers: vec![0],
                    utterances: vec![utt([false, true, true])],
                },
            ],
        };
        let lb = ds.complete_only();
        assert_eq!(lb.conversations.len(), 1);
        assert_eq!(lb.num_utterances(), 1);
    }
}
