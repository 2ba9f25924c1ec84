//! Train on a synthetic corpus with missing modalities and report test metrics.
//!
//! cargo run --release --example train_toy -- 0.3 60

use convrecon::data::{apply_missing, synth_generate, Split, SynthConfig};
use convrecon::eval::evaluate;
use convrecon::model::ModelConfig;
use convrecon::training::{train, TrainConfig};

fn main() -> convrecon::Result<()> {
    let mut args = std::env::args().skip(1);
    let rate: f64 = args
        .next()
        .map_or(0.3, |s| s.parse().expect("missing rate"));
    let epochs: usize = args.next().map_or(60, |s| s.parse().expect("epochs"));

    let synth = SynthConfig::default();
    let (train_ds, _) = apply_missing(&synth_generate(&synth, Split::Train)?, rate, 0)?;
    let (val_ds, _) = apply_missing(&synth_generate(&synth, Split::Val)?, rate, 1)?;
    let (test_ds, _) = apply_missing(&synth_generate(&synth, Split::Test)?, rate, 2)?;

    let model_cfg = ModelConfig::default().for_dataset(&train_ds);
    let train_cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let (model, record) = train(&train_ds, &val_ds, &model_cfg, &train_cfg)?;

    for r in record.epochs.iter().step_by(10) {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}  val WAF1 {:.4}",
            r.epoch, r.train_loss, r.val_loss, r.val_waf1
        );
    }
    println!("kept epoch {:?}\n", record.best_epoch);
    print!("{}", evaluate(&model, &test_ds, None)?.to_table());
    Ok(())
}
