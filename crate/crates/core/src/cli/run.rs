use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{create_dir, write_text, RunConfig};
use crate::data::{apply_mask_plan, apply_missing, Dataset, MaskPlan, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::model::{load_checkpoint, save_checkpoint, Model, ModelConfig};
use crate::training::{train, RunRecord, TrainConfig};

/// Masking seed of one split; distinct for every (run seed, split) pair.
pub fn mask_seed(seed: u64, split: Split) -> u64 {
    let k = match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    };
    seed.wrapping_mul(3).wrapping_add(k)
}

/// Masked (and optionally reduced) splits with the plans that produced them.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub plans: [MaskPlan; 3],
}

fn mask_split(cfg: &RunConfig, seed: u64, split: Split) -> Result<(Dataset, MaskPlan)> {
    let ds = cfg.data.load(split)?;
    let (masked, plan) = match &cfg.masks {
        Some(dir) => {
            let plan = MaskPlan::load(dir.join(format!("{}.json", split.name())))?;
            (apply_mask_plan(&ds, &plan)?, plan)
        }
        None => apply_missing(&ds, cfg.missing_rate, mask_seed(seed, split))?,
    };
    Ok((
        if cfg.lower_bound {
            masked.complete_only()
        } else {
            masked
        },
        plan,
    ))
}

/// Loads all splits and masks them at the configured rate for `seed`.
pub fn prepare_splits(cfg: &RunConfig, seed: u64) -> Result<Splits> {
    let (train, p0) = mask_split(cfg, seed, Split::Train)?;
    let (val, p1) = mask_split(cfg, seed, Split::Val)?;
    let (test, p2) = mask_split(cfg, seed, Split::Test)?;
    Ok(Splits {
        train,
        val,
        test,
        plans: [p0, p1, p2],
    })
}

/// Model configuration with data-dependent fields taken from all splits.
pub(crate) fn resolve_model(base: &ModelConfig, s: &Splits) -> ModelConfig {
    base.clone()
        .for_dataset(&s.train)
        .for_dataset(&s.val)
        .for_dataset(&s.test)
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: MetricsReport,
    pub record: RunRecord,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean_waf1: f64,
    pub std_waf1: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn of(runs: &[RunResult]) -> Self {
        let (mean_waf1, std_waf1) =
            mean_std(&runs.iter().map(|r| r.metrics.waf1).collect::<Vec<_>>());
        let (mean_accuracy, std_accuracy) =
            mean_std(&runs.iter().map(|r| r.metrics.accuracy).collect::<Vec<_>>());
        Self {
            mean_waf1,
            std_waf1,
            mean_accuracy,
            std_accuracy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub runs: Vec<RunResult>,
    /// Present when more than one seed ran.
    pub aggregate: Option<Aggregate>,
}

impl TrainOutcome {
    /// `seed,waf1,accuracy` per run plus `mean` and `std` rows.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("seed,waf1,accuracy\n");
        for r in &self.runs {
            let _ = writeln!(out, "{},{},{}", r.seed, r.metrics.waf1, r.metrics.accuracy);
        }
        if let Some(a) = self.aggregate {
            let _ = writeln!(out, "mean,{},{}", a.mean_waf1, a.mean_accuracy);
            let _ = writeln!(out, "std,{},{}", a.std_waf1, a.std_accuracy);
        }
        out
    }
}

/// One seed end to end; artifacts go to `dir`.
fn train_once(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunResult> {
    create_dir(&dir.join("masks"))?;
    let splits = prepare_splits(cfg, seed)?;
    for (split, plan) in Split::ALL.iter().zip(&splits.plans) {
        plan.save(dir.join("masks").join(format!("{}.json", split.name())))?;
    }
    let model_cfg = resolve_model(&cfg.model, &splits);
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let resolved = RunConfig {
        model: model_cfg.clone(),
        train: train_cfg.clone(),
        seed,
        repeats: 1,
        out: dir.to_path_buf(),
        masks: None,
        ..cfg.clone()
    };
    resolved.save(dir.join("config.json"))?;
    write_text(&dir.join("seed.txt"), &format!("{seed}\n"))?;

    let (model, record) = train(&splits.train, &splits.val, &model_cfg, &train_cfg)?;
    save_checkpoint(dir.join("checkpoint.json"), &model)?;
    record.write_csv(&dir.join("history.csv"))?;
    let metrics = evaluate(&model, &splits.test, None)?;
    metrics.write(dir)?;
    log::info!(
        "seed {seed}: test WAF1 {:.4}, accuracy {:.4}",
        metrics.waf1,
        metrics.accuracy
    );
    Ok(RunResult {
        seed,
        dir: dir.to_path_buf(),
        metrics,
        record,
    })
}

/// Trains and evaluates one model per seed. With several seeds each run gets
/// a `seed-<n>` subdirectory and `summary.csv` holds mean and std.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        let dir = if cfg.repeats == 1 {
            cfg.out.clone()
        } else {
            cfg.out.join(format!("seed-{seed}"))
        };
        runs.push(train_once(cfg, seed, &dir)?);
    }
    let outcome = TrainOutcome {
        aggregate: (runs.len() > 1).then(|| Aggregate::of(&runs)),
        runs,
    };
    if cfg.repeats > 1 {
        cfg.save(cfg.out.join("config.json"))?;
        write_text(&cfg.out.join("summary.csv"), &outcome.summary_csv())?;
    }
    Ok(outcome)
}

fn check_compatible(model: &ModelConfig, ds: &Dataset) -> Result<()> {
    if model.num_classes != ds.num_classes {
        return Err(Error::Checkpoint(format!(
            "class count: expected {} (checkpoint), found {} (dataset)",
            model.num_classes, ds.num_classes
        )));
    }
    if model.dims != ds.dims {
        return Err(Error::Checkpoint(format!(
            "modality extents: expected {:?} (checkpoint), found {:?} (dataset)",
            model.dims, ds.dims
        )));
    }
    if ds.speaker_space() > model.num_speakers {
        return Err(Error::Checkpoint(format!(
            "speaker count: expected at most {} (checkpoint), found {} (dataset)",
            model.num_speakers,
            ds.speaker_space()
        )));
    }
    Ok(())
}

/// Evaluates the checkpoint on the masked test split.
pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs a checkpoint".into()))?;
    let model: Model = load_checkpoint(path)?;
    let (test, plan) = mask_split(cfg, cfg.seed, Split::Test)?;
    check_compatible(&model.config, &test)?;
    create_dir(&cfg.out.join("masks"))?;
    plan.save(cfg.out.join("masks").join("test.json"))?;
    RunConfig {
        model: model.config.clone(),
        ..cfg.clone()
    }
    .save(cfg.out.join("config.json"))?;
    let report = evaluate(&model, &test, None)?;
    report.write(&cfg.out)?;
    Ok(report)
}
