use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use convrecon::cli::{
    cmd_eval, cmd_sweep, cmd_synth, cmd_train, gradient_suite, Command, DataSource, RunConfig,
    OUT_ENV,
};
use convrecon::data::SynthConfig;
use convrecon::diffcore::{GradCheckConfig, OpKind};
use convrecon::model::Ablation;
use convrecon::training::RecScope;
use convrecon::{Error, Result};

#[derive(Parser)]
#[command(
    name = "convrecon",
    version,
    about = "Missing-modality reconstruction and emotion classification over conversation graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Worker threads for evaluation and sweeps (1 = single-thread mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write synthetic train/val/test splits and a manifest.
    Synth(SynthArgs),
    /// Train, evaluate on test and write all run artifacts.
    Train(RunArgs),
    /// Grid of test WAF1 over missing rates and ablations.
    Sweep(RunArgs),
    /// Finite-difference check of every layer and the composed model.
    Gradcheck(GradArgs),
    /// Evaluate a saved checkpoint.
    Eval(RunArgs),
}

#[derive(Args, Clone)]
struct SynthParams {
    #[arg(long = "conversations", default_value_t = 8)]
    conversations: usize,
    #[arg(long = "utterances", default_value_t = 10)]
    utterances: usize,
    #[arg(long = "speakers", default_value_t = 2)]
    speakers: usize,
    #[arg(long = "classes", default_value_t = 4)]
    classes: usize,
    /// Modality extents, audio,visual,text.
    #[arg(long = "dims", value_delimiter = ',', num_args = 3, default_values_t = [8, 8, 8])]
    dims: Vec<usize>,
    #[arg(long = "signal", default_value_t = 5.0)]
    signal: f64,
    /// Seed of the generator; defaults to --seed.
    #[arg(long = "synth-seed")]
    synth_seed: Option<u64>,
}

impl SynthParams {
    fn config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            num_conversations: self.conversations,
            utterances_per_conversation: self.utterances,
            num_speakers: self.speakers,
            num_classes: self.classes,
            dims: [self.dims[0], self.dims[1], self.dims[2]],
            signal: self.signal,
            seed: self.synth_seed.unwrap_or(seed),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    synth: SynthParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory [default: $CONVRECON_OUT/<command>-seed<n>, or runs/...]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Directory with train.jsonl, val.jsonl and test.jsonl.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Generate the data in memory instead.
    #[arg(long)]
    synth: bool,
    #[command(flatten)]
    synth_params: SynthParams,
    #[arg(long = "missing-rate", default_value_t = 0.0)]
    missing_rate: f64,
    /// Comma-separated missing rates.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    window: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long = "hyper-layers", default_value_t = 2)]
    hyper_layers: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long = "loss-weight", default_value_t = 0.5)]
    loss_weight: f64,
    #[arg(long = "rec-scope", default_value = "all_slots")]
    rec_scope: RecScope,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Model variants: sp, co, fre, op. Repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<Ablation>,
    /// Drop incomplete utterances before training and evaluation.
    #[arg(long = "lower-bound")]
    lower_bound: bool,
    /// Checkpoint to evaluate (eval).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Re-run the training run stored in this directory.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Run directory [default: $CONVRECON_OUT/<command>-seed<n>, or runs/...]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    /// Pass threshold on the max relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupts the backward rule of one op (negative control), e.g. tanh.
    #[arg(long)]
    corrupt: Option<OpKind>,
}

/// `--out`, else `$CONVRECON_OUT/<command>-seed<n>`, else `runs/...`.
fn out_dir(out: Option<PathBuf>, command: Command, seed: u64) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(format!("{}-seed{seed}", command.name()))
    })
}

fn run_config(command: Command, a: RunArgs) -> Result<RunConfig> {
    if let Some(dir) = &a.replay {
        if command != Command::Train {
            return Err(Error::Config("--replay only applies to train".into()));
        }
        let out = out_dir(a.out, command, a.seed).join("replay");
        return RunConfig::replay(dir, out);
    }
    let data = match (a.data, a.synth) {
        (Some(dir), _) => DataSource::Files(dir),
        (None, true) => DataSource::Synth(a.synth_params.config(a.seed)),
        (None, false) => return Err(Error::Config("pass --data DIR or --synth".into())),
    };
    let out = out_dir(a.out, command, a.seed);
    let mut cfg = RunConfig::new(command, data, out);
    cfg.model.window = a.window;
    cfg.model.hidden = a.hidden;
    cfg.model.heads = a.heads;
    cfg.model.hyper_layers = a.hyper_layers;
    cfg.model.dropout = a.dropout;
    cfg.train.loss_weight = a.loss_weight;
    cfg.train.rec_scope = a.rec_scope;
    cfg.train.epochs = a.epochs;
    cfg.train.patience = a.patience;
    cfg.missing_rate = a.missing_rate;
    cfg.sweep = a.sweep;
    cfg.ablations = a.ablate;
    cfg.repeats = a.repeats;
    cfg.lower_bound = a.lower_bound;
    cfg.seed = a.seed;
    cfg.checkpoint = a.checkpoint;
    // a single run trains the ablated model; sweeps add rows instead
    if command != Command::Sweep {
        for &ab in &cfg.ablations {
            cfg.model = cfg.model.clone().with_ablation(ab);
        }
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Cmd::Synth(a) => {
            let out = out_dir(a.out, Command::Synth, a.seed);
            let manifest = cmd_synth(&a.synth.config(a.seed), &out)?;
            println!("wrote {} to {}", manifest.files.join(", "), out.display());
        }
        Cmd::Train(a) => {
            let cfg = run_config(Command::Train, a)?;
            let outcome = cmd_train(&cfg)?;
            for r in &outcome.runs {
                println!(
                    "seed {}: WAF1 {:.4}  ACC {:.4}  ({})",
                    r.seed,
                    r.metrics.waf1,
                    r.metrics.accuracy,
                    r.dir.display()
                );
            }
            match outcome.aggregate {
                Some(agg) => println!(
                    "mean WAF1 {:.4} ± {:.4}  ACC {:.4} ± {:.4}",
                    agg.mean_waf1, agg.std_waf1, agg.mean_accuracy, agg.std_accuracy
                ),
                None => print!("{}", outcome.runs[0].metrics.to_table()),
            }
        }
        Cmd::Sweep(a) => {
            let cfg = run_config(Command::Sweep, a)?;
            let grid = cmd_sweep(&cfg)?;
            print!("{}", grid.to_table());
            for (label, m, err) in grid.errors() {
                eprintln!("{label} at M={m}: {err}");
            }
        }
        Cmd::Gradcheck(a) => {
            let cfg = GradCheckConfig {
                eps: a.eps,
                tolerance: a.tolerance,
                fault: a.corrupt,
                ..GradCheckConfig::default()
            };
            let report = gradient_suite(&cfg, a.seed)?;
            print!("{}", report.to_text());
            report.into_result()?;
        }
        Cmd::Eval(a) => {
            let cfg = run_config(Command::Eval, a)?;
            print!("{}", cmd_eval(&cfg)?.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
