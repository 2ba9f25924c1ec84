//! Masked-slot reconstruction error of a trained model against filling the
//! dropped slots with zeros.
//!
//! cargo run --release --example reconstruction_quality

use convrecon::data::{apply_missing, synth_generate, Modality, Split, SynthConfig};
use convrecon::eval::{evaluate, zero_fill_mse};
use convrecon::model::ModelConfig;
use convrecon::training::{train, TrainConfig};

fn main() -> convrecon::Result<()> {
    let rate = 0.5;
    let synth = SynthConfig::default();
    let (train_ds, _) = apply_missing(&synth_generate(&synth, Split::Train)?, rate, 10)?;
    let (val_ds, _) = apply_missing(&synth_generate(&synth, Split::Val)?, rate, 11)?;
    let (test_ds, _) = apply_missing(&synth_generate(&synth, Split::Test)?, rate, 12)?;

    let model_cfg = ModelConfig::default().for_dataset(&train_ds);
    let (model, _) = train(
        &train_ds,
        &val_ds,
        &model_cfg,
        &TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        },
    )?;
    let learned = evaluate(&model, &test_ds, None)?.recon_mse;
    let zeros = zero_fill_mse(&test_ds);

    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!("{:<8} {:>10} {:>10}", "", "model", "zero fill");
    for m in Modality::ALL {
        println!(
            "{:<8} {:>10} {:>10}",
            m.tag(),
            show(learned.per_modality[m.index()]),
            show(zeros.per_modality[m.index()])
        );
    }
    println!(
        "{:<8} {:>10} {:>10}",
        "pooled",
        show(learned.pooled),
        show(zeros.pooled)
    );
    Ok(())
}
