use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Conversation, Dataset, Split, Utterance, NUM_MODALITIES};
use crate::error::{Error, Result};

/// Probability that an utterance repeats the previous label.
const LABEL_PERSISTENCE: f64 = 0.7;
const MAX_TURN: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_conversations: usize,
    pub utterances_per_conversation: usize,
    pub num_speakers: usize,
    pub num_classes: usize,
    pub dims: [usize; NUM_MODALITIES],
    /// Class-signal strength: features are `signal * prototype + N(0, I)`.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_conversations: 8,
            utterances_per_conversation: 10,
            num_speakers: 2,
            num_classes: 4,
            dims: [8, 8, 8],
            signal: 5.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synthetic generator: {msg}")));
        if self.num_speakers < 2 {
            return bad("needs at least 2 speakers");
        }
        if self.num_classes < 2 {
            return bad("needs at least 2 classes");
        }
        if !(self.signal >= 0.0) || !self.signal.is_finite() {
            return bad("signal strength must be finite and >= 0");
        }
        if self.num_conversations == 0 || self.utterances_per_conversation == 0 {
            return bad("conversation and utterance counts must be positive");
        }
        if self.dims.contains(&0) {
            return bad("modality extents must be positive");
        }
        Ok(())
    }

    /// Unit-norm class prototypes, `[modality][class]`. Shared by all splits.
    pub fn prototypes(&self) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.dims
            .iter()
            .map(|&d| {
                (0..self.num_classes)
                    .map(|_| {
                        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                        v.into_iter().map(|x| x / norm).collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Generates one split. All splits of the same config share prototypes;
/// each split draws from its own random stream.
pub fn synth_generate(cfg: &SynthConfig, split: Split) -> Result<Dataset> {
    cfg.validate()?;
    let protos = cfg.prototypes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1 + split as u64);

    let conversations = (0..cfg.num_conversations)
        .map(|c| {
            let mut speaker = rng.random_range(0..cfg.num_speakers);
            let mut turn_left = rng.random_range(1..=MAX_TURN);
            let mut label = rng.random_range(0..cfg.num_classes);
            let utterances = (0..cfg.utterances_per_conversation)
                .map(|i| {
                    if i > 0 {
                        if turn_left == 0 {
                            let other = rng.random_range(0..cfg.num_speakers - 1);
                            speaker = if other >= speaker { other + 1 } else { other };
                            turn_left = rng.random_range(1..=MAX_TURN);
                        }
                        if rng.random::<f64>() >= LABEL_PERSISTENCE {
                            label = rng.random_range(0..cfg.num_classes);
                        }
                    }
                    turn_left -= 1;
                    let features = std::array::from_fn(|m| {
                        protos[m][label]
                            .iter()
                            .map(|p| {
                                let noise: f64 = StandardNormal.sample(&mut rng);
                                cfg.signal * p + noise
                            })
                            .collect()
                    });
                    Utterance {
                        speaker,
                        label,
                        mask: [true; NUM_MODALITIES],
                        features,
                    }
                })
                .collect();
            Conversation {
                id: format!("{}-{c:04}", split.name()),
                speakers: (0..cfg.num_speakers).collect(),
                utterances,
            }
        })
        .collect();

    let ds = Dataset {
        split,
        num_classes: cfg.num_classes,
        dims: cfg.dims,
        conversations,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Assigns each utterance the class whose scaled prototypes are nearest
    /// over all modalities.
    fn nearest_prototype_accuracy(cfg: &SynthConfig, ds: &Dataset) -> f64 {
        let protos = cfg.prototypes();
        let mut correct = 0;
        for u in ds.utterances() {
            let pred = (0..cfg.num_classes)
                .min_by(|&a, &b| {
                    let dist = |c: usize| -> f64 {
                        (0..3)
                            .map(|m| {
                                u.features[m]
                                    .iter()
                                    .zip(&protos[m][c])
                                    .map(|(x, p)| (x - cfg.signal * p).powi(2))
                                    .sum::<f64>()
                            })
                            .sum()
                    };
                    dist(a).total_cmp(&dist(b))
                })
                .unwrap();
            correct += usize::from(pred == u.label);
        }
        correct as f64 / ds.num_utterances() as f64
    }

    /// Nearest-centroid classifier fitted on `train`, scored on `test`.
    fn centroid_accuracy(train: &Dataset, test: &Dataset) -> f64 {
        let ext = train.feature_extent();
        let c = train.num_classes;
        let mut sums = vec![vec![0.0; ext]; c];
        let mut counts = vec![0usize; c];
        for u in train.utterances() {
            for (s, x) in sums[u.label].iter_mut().zip(u.features.concat()) {
                *s += x;
            }
            counts[u.label] += 1;
        }
        for (s, &k) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v /= k.max(1) as f64);
        }
        let mut correct = 0;
        for u in test.utterances() {
            let x = u.features.concat();
            let pred = (0..c)
                .min_by(|&a, &b| {
                    let d = |k: usize| {
                        sums[k]
                            .iter()
                            .zip(&x)
                            .map(|(p, q)| (p - q).powi(2))
                            .sum::<f64>()
                    };
                    d(a).total_cmp(&d(b))
                })
                .unwrap();
            correct += usize::from(pred == u.label);
        }
        correct as f64 / test.num_utterances() as f64
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SynthConfig::default();
        assert_eq!(
            synth_generate(&cfg, Split::Train).unwrap(),
            synth_generate(&cfg, Split::Train).unwrap()
        );
        assert_ne!(
            synth_generate(&cfg, Split::Train).unwrap(),
            synth_generate(&cfg, Split::Test).unwrap()
        );
    }

    #[test]
    fn strong_signal_is_prototype_separable() {
        let cfg = SynthConfig {
            num_conversations: 20,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, Split::Test).unwrap();
        let acc = nearest_prototype_accuracy(&cfg, &ds);
        assert!(acc > 0.95, "accuracy {acc}");
    }

    #[test]
    fn zero_signal_is_chance_level() {
        let mut accs = Vec::new();
        for seed in 0..5 {
            let cfg = SynthConfig {
                num_conversations: 40,
                utterances_per_conversation: 25,
                signal: 0.0,
                seed,
                ..SynthConfig::default()
            };
            let train = synth_generate(&cfg, Split::Train).unwrap();
            let test = synth_generate(&cfg, Split::Test).unwrap();
            accs.push(centroid_accuracy(&train, &test));
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!(
            (mean - 0.25).abs() < 0.05,
            "mean accuracy {mean} ({accs:?})"
        );
    }

    #[test]
    fn speakers_alternate_and_labels_persist() {
        let cfg = SynthConfig {
            num_conversations: 50,
            utterances_per_conversation: 20,
            num_speakers: 3,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, Split::Train).unwrap();
        let (mut same, mut total) = (0, 0);
        for conv in &ds.conversations {
            let speakers = conv.speaker_seq();
            // turns never exceed MAX_TURN consecutive utterances
            let mut run = 1;
            for w in speakers.windows(2) {
                run = if w[0] == w[1] { run + 1 } else { 1 };
                assert!(run <= MAX_TURN);
            }
            for w in conv.labels().windows(2) {
                same += usize::from(w[0] == w[1]);
                total += 1;
            }
        }
        // P(repeat) = 0.7 + 0.3 / c
        let rate = same as f64 / total as f64;
        assert!((rate - 0.775).abs() < 0.05, "repeat rate {rate}");
    }

    #[test]
    fn degenerate_configs_error() {
        for cfg in [
            SynthConfig {
                num_speakers: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                num_classes: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                signal: -1.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                utterances_per_conversation: 0,
                ..SynthConfig::default()
            },
        ] {
            assert!(matches!(
                synth_generate(&cfg, Split::Train),
                Err(Error::Config(_))
            ));
        }
    }
}
