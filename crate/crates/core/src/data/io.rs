//! Line-delimited JSON conversation files.
//!
//! The first line may be a header object (`{"split": .., "num_classes": ..}`);
//! every other non-blank line is one conversation:
//!
//! ```text
//! {"id":"c0","speakers":[0,1],"utterances":[{"speaker":0,"label":2,"mask":[1,1,0],"a":[..],"v":[..],"t":[..]}]}
//! ```
//!
//! Labels are zero-based. Without a header the class count is inferred as
//! the largest label plus one and the split defaults to `train`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Conversation, Dataset, Split, Utterance, NUM_MODALITIES};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub split: Split,
    pub num_classes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceRecord {
    speaker: usize,
    label: usize,
    mask: [u8; NUM_MODALITIES],
    a: Vec<f64>,
    v: Vec<f64>,
    t: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConversationRecord {
    id: String,
    speakers: Vec<usize>,
    utterances: Vec<UtteranceRecord>,
}

impl From<&Utterance> for UtteranceRecord {
    fn from(u: &Utterance) -> Self {
        let [a, v, t] = u.features.clone();
        Self {
            speaker: u.speaker,
            label: u.label,
            mask: u.mask.map(u8::from),
            a,
            v,
            t,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

/// Parses the line format; `origin` only labels error messages.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut header: Option<DatasetHeader> = None;
    let mut conversations = Vec::new();
    let mut dims: Option<[usize; NUM_MODALITIES]> = None;

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() {
            continue;
        }
        if header.is_none() && conversations.is_empty() {
            if let Ok(h) = serde_json::from_str::<DatasetHeader>(line) {
                header = Some(h);
                continue;
            }
        }
        let rec: ConversationRecord =
            serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let mut utterances = Vec::with_capacity(rec.utterances.len());
        for (i, u) in rec.utterances.into_iter().enumerate() {
            if u.mask.iter().any(|&b| b > 1) {
                return Err(parse_err(
                    lineno,
                    format!("utterance {}: mask entries must be 0 or 1", i + 1),
                ));
            }
            let extents = [u.a.len(), u.v.len(), u.t.len()];
            let expected = *dims.get_or_insert(extents);
            if extents != expected {
                return Err(Error::Data(format!(
                    "conversation {} utterance {}: extents {extents:?} differ from {expected:?}",
                    rec.id,
                    i + 1
                )));
            }
            utterances.push(Utterance {
                speaker: u.speaker,
                label: u.label,
                mask: u.mask.map(|b| b == 1),
                features: [u.a, u.v, u.t],
            });
        }
        conversations.push(Conversation {
            id: rec.id,
            speakers: rec.speakers,
            utterances,
        });
    }

    let dims = dims.ok_or_else(|| Error::Data(format!("{origin}: no utterances")))?;
    let (split, num_classes) = match header {
        Some(h) => (h.split, h.num_classes),
        None => {
            let max_label = conversations
                .iter()
                .flat_map(|c| c.utterances.iter())
                .map(|u| u.label)
                .max();
            (Split::Train, max_label.map_or(0, |l| l + 1))
        }
    };
    let ds = Dataset {
        split,
        num_classes,
        dims,
        conversations,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = serde_json::to_string(&DatasetHeader {
        split: ds.split,
        num_classes: ds.num_classes,
    })?;
    out.push('\n');
    for c in &ds.conversations {
        let rec = ConversationRecord {
            id: c.id.clone(),
            speakers: c.speakers.clone(),
            utterances: c.utterances.iter().map(UtteranceRecord::from).collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
