//! Reproducible runs: dataset generation, training with repeats, missing-rate
//! sweeps, gradient verification and checkpoint evaluation.
//!
//! Every command writes into a single run directory. Training runs leave the
//! resolved configuration, the seed, one mask sidecar per split, the
//! checkpoint, the epoch history and the metrics there, and
//! [`RunConfig::replay`] rebuilds an identical run from those files.

mod gradcheck;
mod run;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, synth_generate, write_dataset, Dataset, Split, SynthConfig};
use crate::error::{Error, Result};
use crate::model::{Ablation, ModelConfig};
use crate::training::TrainConfig;

pub use gradcheck::{gradient_suite, GradSuiteReport, GroupCheck};
pub use run::{
    cmd_eval, cmd_train, mask_seed, prepare_splits, Aggregate, RunResult, Splits, TrainOutcome,
};
pub use sweep::{cmd_sweep, format_rate, SweepGrid, SweepRow};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CONVRECON_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Synth,
    Train,
    Sweep,
    Gradcheck,
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Gradcheck => "gradcheck",
            Command::Eval => "eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generated in memory.
    Synth(SynthConfig),
    /// A directory holding `train.jsonl`, `val.jsonl` and `test.jsonl`.
    Files(PathBuf),
}

impl DataSource {
    pub fn load(&self, split: Split) -> Result<Dataset> {
        match self {
            DataSource::Synth(cfg) => synth_generate(cfg, split),
            DataSource::Files(dir) => {
                let ds = load_dataset(split_path(dir, split))?;
                Ok(Dataset { split, ..ds })
            }
        }
    }
}

pub fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.name()))
}

/// Everything a run depends on. Written as `config.json` into the run
/// directory with data-dependent model fields filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub data: DataSource,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Requested missing rate for `train` and `eval`.
    pub missing_rate: f64,
    /// Missing rates of a sweep.
    pub sweep: Vec<f64>,
    /// Extra model variants; sweeps add one grid row per entry.
    pub ablations: Vec<Ablation>,
    /// Number of consecutive seeds starting at `seed`.
    pub repeats: usize,
    /// Drop every incomplete utterance before training and evaluation.
    pub lower_bound: bool,
    pub seed: u64,
    pub out: PathBuf,
    /// Model to evaluate (`eval` only).
    pub checkpoint: Option<PathBuf>,
    /// Directory of mask sidecars to replay instead of drawing new masks.
    pub masks: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command, data: DataSource, out: PathBuf) -> Self {
        Self {
            command,
            data,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            missing_rate: 0.0,
            sweep: Vec::new(),
            ablations: Vec::new(),
            repeats: 1,
            lower_bound: false,
            seed: 0,
            out,
            checkpoint: None,
            masks: None,
        }
    }

    /// Range checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !self.missing_rate.is_finite() {
            return bad(format!("missing rate {} is not finite", self.missing_rate));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.model.window == 0 || self.model.hidden == 0 || self.model.heads == 0 {
            return bad("window, hidden extent and heads must be positive".into());
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.model.dropout));
        }
        if self.command == Command::Sweep && self.sweep.is_empty() {
            return bad("sweep needs at least one missing rate".into());
        }
        if self.command == Command::Eval && self.checkpoint.is_none() {
            return bad("eval needs a checkpoint".into());
        }
        self.train.validate()
    }

    /// Seeds of all repeats.
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let start = self.seed;
        (0..self.repeats as u64).map(move |k| start + k)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Configuration that re-executes the run stored in `run_dir`, using its
    /// mask sidecars, with output going to `out`.
    pub fn replay(run_dir: &Path, out: PathBuf) -> Result<Self> {
        let cfg = Self::load(run_dir.join("config.json"))?;
        if cfg.command != Command::Train || cfg.repeats != 1 {
            return Err(Error::Config(format!(
                "{} does not hold a single training run",
                run_dir.display()
            )));
        }
        Ok(Self {
            masks: Some(run_dir.join("masks")),
            out,
            ..cfg
        })
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Written next to the generated splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub files: Vec<String>,
}

/// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` and `manifest.json` into
/// `out`. Output is a pure function of `cfg`.
pub fn cmd_synth(cfg: &SynthConfig, out: &Path) -> Result<SynthManifest> {
    let splits = Split::ALL.map(|s| synth_generate(cfg, s));
    create_dir(out)?;
    let mut files = Vec::new();
    for (split, ds) in Split::ALL.into_iter().zip(splits) {
        let path = split_path(out, split);
        write_dataset(&path, &ds?)?;
        files.push(
            path.file_name()
                .expect("split file name")
                .to_string_lossy()
                .into_owned(),
        );
    }
    let manifest = SynthManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        files,
    };
    write_text(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests;
