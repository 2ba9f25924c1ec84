//! Test WAF1 across missing rates, written as a grid with a row average.
//!
//! cargo run --release --example missing_rate_sweep

use convrecon::cli::{cmd_sweep, Command, DataSource, RunConfig};
use convrecon::data::SynthConfig;

fn main() -> convrecon::Result<()> {
    let data = DataSource::Synth(SynthConfig {
        num_conversations: 6,
        ..SynthConfig::default()
    });
    let out = std::env::temp_dir().join("convrecon-example-sweep");
    let mut cfg = RunConfig::new(Command::Sweep, data, out.clone());
    cfg.sweep = vec![0.0, 0.3, 0.5, 0.7];
    cfg.train.epochs = 40;

    let grid = cmd_sweep(&cfg)?;
    print!("{}", grid.to_table());
    println!("\nwritten to {}", out.join("sweep.csv").display());
    Ok(())
}
