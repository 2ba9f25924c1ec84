//! Generate a small synthetic corpus, write it as JSON lines and read it back.
//!
//! cargo run --example synthetic_dataset

use convrecon::data::{load_dataset, synth_generate, write_dataset, Split, SynthConfig};

fn main() -> convrecon::Result<()> {
    let cfg = SynthConfig {
        num_conversations: 4,
        utterances_per_conversation: 6,
        ..SynthConfig::default()
    };
    let dir = std::env::temp_dir().join("convrecon-example-synth");
    std::fs::create_dir_all(&dir).expect("temp dir");

    for split in [Split::Train, Split::Val, Split::Test] {
        let ds = synth_generate(&cfg, split)?;
        let path = dir.join(format!("{}.jsonl", split.name()));
        write_dataset(&path, &ds)?;
        let back = load_dataset(&path)?;
        assert_eq!(back, ds);
        println!(
            "{:<5} {} conversations, {} utterances, dims {:?}, {} classes -> {}",
            split.name(),
            ds.conversations.len(),
            ds.num_utterances(),
            ds.dims,
            ds.num_classes,
            path.display()
        );
    }

    let first = &synth_generate(&cfg, Split::Train)?.conversations[0];
    println!("\n{}: speakers {:?}", first.id, first.speaker_seq());
    println!("labels {:?}", first.labels());
    Ok(())
}
