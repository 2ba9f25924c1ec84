//! Compare the full model with each single-component ablation at one missing
//! rate.
//!
//! cargo run --release --example ablations -- 0.4

use convrecon::cli::{cmd_sweep, Command, DataSource, RunConfig};
use convrecon::data::SynthConfig;
use convrecon::model::Ablation;

fn main() -> convrecon::Result<()> {
    let rate: f64 = std::env::args()
        .nth(1)
        .map_or(0.4, |s| s.parse().expect("missing rate"));
    let data = DataSource::Synth(SynthConfig {
        num_conversations: 6,
        ..SynthConfig::default()
    });
    let mut cfg = RunConfig::new(
        Command::Sweep,
        data,
        std::env::temp_dir().join("convrecon-example-ablations"),
    );
    cfg.sweep = vec![rate];
    cfg.ablations = Ablation::ALL.to_vec();
    cfg.train.epochs = 40;
    cfg.repeats = 2;

    let grid = cmd_sweep(&cfg)?;
    let full = grid
        .row("full")
        .and_then(|r| r.average())
        .unwrap_or(f64::NAN);
    for row in &grid.rows {
        let waf1 = row.average().unwrap_or(f64::NAN);
        println!(
            "{:<8} {:.4}  ({:+.4} vs full)",
            row.label,
            waf1,
            waf1 - full
        );
    }
    Ok(())
}
