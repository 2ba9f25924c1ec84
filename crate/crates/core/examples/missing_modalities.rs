//! Drop modality slots at a requested rate, inspect the plan and replay it.
//!
//! cargo run --example missing_modalities -- 0.5

use convrecon::data::{
    apply_mask_plan, apply_missing, missing_rate, synth_generate, Modality, Split, SynthConfig,
};

fn main() -> convrecon::Result<()> {
    let rate: f64 = std::env::args()
        .nth(1)
        .map_or(0.5, |s| s.parse().expect("missing rate"));
    let ds = synth_generate(&SynthConfig::default(), Split::Train)?;

    let (masked, plan) = apply_missing(&ds, rate, 7)?;
    println!(
        "requested {:.3}, targeted {:.3}, realised {:.3}",
        plan.requested,
        plan.effective,
        missing_rate(&masked)?
    );
    println!("{} slots dropped", plan.dropped.len());

    let conv = &masked.conversations[0];
    println!("\n{}", conv.id);
    for (i, u) in conv.utterances.iter().enumerate() {
        let row: String = Modality::ALL
            .iter()
            .map(|&m| if u.mask[m.index()] { m.tag() } else { "-" })
            .collect::<Vec<_>>()
            .join(" ");
        println!("  {i:>2}  speaker {}  [{row}]", u.speaker);
    }

    let replayed = apply_mask_plan(&ds, &plan)?;
    assert_eq!(replayed, masked);
    println!("\nreplaying the plan reproduces the masked split");

    match apply_missing(&ds, 0.8, 7) {
        Err(e) => println!("rate 0.8: {e}"),
        Ok(_) => unreachable!("at least one modality must survive"),
    }
    Ok(())
}
