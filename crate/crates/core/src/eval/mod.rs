//! Classification and reconstruction metrics.

mod report;

use rayon::prelude::*;

use crate::data::{Conversation, Dataset, NUM_MODALITIES};
use crate::diffcore::ParamStore;
use crate::error::{Error, Result};
use crate::model::{ConvGraphs, Model, Prediction};

pub use report::{confusion_grid, ClassMetrics, MetricsReport};

/// Rows are true labels, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape {
                op: "confusion matrix",
                lhs: vec![truth.len()],
                rhs: vec![pred.len()],
            });
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(pred) {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::Tensor("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        let c = self.classes();
        if truth >= c || pred >= c {
            return Err(Error::Data(format!(
                "label pair ({truth}, {pred}) outside {c} classes"
            )));
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::Shape {
                op: "confusion merge",
                lhs: vec![self.classes()],
                rhs: vec![other.classes()],
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// True count per class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `2PR / (P + R)` per class, 0 when both vanish.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.classes())
            .map(|j| {
                let tp = self.counts[j][j] as f64;
                let predicted: u64 = self.counts.iter().map(|r| r[j]).sum();
                let actual: u64 = self.counts[j].iter().sum();
                let p = if predicted > 0 {
                    tp / predicted as f64
                } else {
                    0.0
                };
                let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
                if p + r > 0.0 {
                    2.0 * p * r / (p + r)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Support-weighted mean of per-class F1.
    pub fn waf1(&self) -> Result<f64> {
        weighted_f1(&self.support(), &self.per_class_f1())
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Data("accuracy of an empty confusion matrix".into()));
        }
        let trace: u64 = (0..self.classes()).map(|j| self.counts[j][j]).sum();
        Ok(trace as f64 / total as f64)
    }
}

/// `Σ N_j F1_j / Σ N_j`.
pub fn weighted_f1(support: &[u64], f1: &[f64]) -> Result<f64> {
    if support.len() != f1.len() {
        return Err(Error::Shape {
            op: "weighted_f1",
            lhs: vec![support.len()],
            rhs: vec![f1.len()],
        });
    }
    let total: u64 = support.iter().sum();
    if total == 0 {
        return Err(Error::Data("weighted F1 over zero support".into()));
    }
    let weighted: f64 = support.iter().zip(f1).map(|(&n, f)| n as f64 * f).sum();
    Ok(weighted / total as f64)
}

/// Masked-slot mean squared error per modality and pooled over all masked
/// elements. `None` where nothing was masked.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReconMse {
    pub per_modality: [Option<f64>; NUM_MODALITIES],
    pub pooled: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
struct SqErr {
    sum: [f64; NUM_MODALITIES],
    count: [usize; NUM_MODALITIES],
}

impl SqErr {
    fn add(&mut self, conv: &Conversation, recon: &dyn Fn(usize, usize) -> Vec<f64>) {
        for (i, u) in conv.utterances.iter().enumerate() {
            for m in 0..NUM_MODALITIES {
                if u.mask[m] {
                    continue;
                }
                let r = recon(m, i);
                self.sum[m] += u.features[m]
                    .iter()
                    .zip(&r)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                self.count[m] += u.features[m].len();
            }
        }
    }

    fn finish(&self) -> ReconMse {
        let per_modality = std::array::from_fn(|m| {
            (self.count[m] > 0).then(|| self.sum[m] / self.count[m] as f64)
        });
        let total: usize = self.count.iter().sum();
        ReconMse {
            per_modality,
            pooled: (total > 0).then(|| self.sum.iter().sum::<f64>() / total as f64),
        }
    }
}

/// Error of `preds[k]` against the hidden ground truth of `convs[k]`, over
/// masked slots only.
pub fn reconstruction_mse<'a>(
    pairs: impl IntoIterator<Item = (&'a Conversation, &'a Prediction)>,
) -> ReconMse {
    let mut acc = SqErr::default();
    for (conv, pred) in pairs {
        acc.add(conv, &|m, i| pred.recon[m].row(i).to_vec());
    }
    acc.finish()
}

/// The same metric for a predictor that fills every masked slot with zeros.
pub fn zero_fill_mse(ds: &Dataset) -> ReconMse {
    let mut acc = SqErr::default();
    for conv in &ds.conversations {
        acc.add(conv, &|m, _| vec![0.0; ds.dims[m]]);
    }
    acc.finish()
}

/// Element count of all trainable tensors.
pub fn count_params(store: &ParamStore) -> usize {
    store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(_, p)| p.value.numel())
        .sum()
}

/// Maps signed sentiment scores to two classes: negative 0, positive 1.
/// Exact zeros have no class.
pub fn binarize_scores(scores: &[f64]) -> Vec<Option<usize>> {
    scores
        .iter()
        .map(|&s| {
            if s < 0.0 {
                Some(0)
            } else if s > 0.0 {
                Some(1)
            } else {
                None
            }
        })
        .collect()
}

/// Two-class view of a dataset given one sentiment score per utterance
/// (`scores[c][i]`). Zero-score utterances are removed, as are conversations
/// left empty.
pub fn binarize_dataset(ds: &Dataset, scores: &[Vec<f64>]) -> Result<Dataset> {
    if scores.len() != ds.conversations.len() {
        return Err(Error::Data(format!(
            "{} score lists for {} conversations",
            scores.len(),
            ds.conversations.len()
        )));
    }
    let mut conversations = Vec::new();
    for (conv, s) in ds.conversations.iter().zip(scores) {
        if s.len() != conv.len() {
            return Err(Error::Data(format!(
                "conversation {}: {} scores for {} utterances",
                conv.id,
                s.len(),
                conv.len()
            )));
        }
        let utterances: Vec<_> = conv
            .utterances
            .iter()
            .zip(binarize_scores(s))
            .filter_map(|(u, b)| b.map(|label| crate::data::Utterance { label, ..u.clone() }))
            .collect();
        if !utterances.is_empty() {
            conversations.push(Conversation {
                utterances,
                ..conv.clone()
            });
        }
    }
    Ok(Dataset {
        num_classes: 2,
        conversations,
        ..ds.clone()
    })
}

/// Builds graphs and runs the model in evaluation mode, one task per
/// conversation. Results are in dataset order.
pub fn predict_dataset(
    model: &Model,
    ds: &Dataset,
    graphs: Option<&[ConvGraphs]>,
) -> Result<Vec<Prediction>> {
    ds.conversations
        .par_iter()
        .enumerate()
        .map(|(k, conv)| match graphs {
            Some(g) => model.predict(conv, &g[k]),
            None => model.predict(conv, &ConvGraphs::build(conv, model.config.window)?),
        })
        .collect()
}

pub fn confusion(ds: &Dataset, preds: &[Prediction]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(ds.num_classes);
    for (conv, p) in ds.conversations.iter().zip(preds) {
        for (u, pred) in conv.utterances.iter().zip(p.labels()) {
            cm.add(u.label, pred)?;
        }
    }
    Ok(cm)
}

/// Full report for `model` on `ds`.
pub fn evaluate(
    model: &Model,
    ds: &Dataset,
    graphs: Option<&[ConvGraphs]>,
) -> Result<MetricsReport> {
    let preds = predict_dataset(model, ds, graphs)?;
    let cm = confusion(ds, &preds)?;
    let recon = reconstruction_mse(ds.conversations.iter().zip(&preds));
    MetricsReport::new(
        cm,
        recon,
        crate::data::missing_rate(ds)?,
        count_params(&model.params),
    )
}
