use super::*;
use crate::data::Split;

#[test]
fn rate_headings() {
    assert_eq!(format_rate(0.0), "0.0");
    assert_eq!(format_rate(0.7), "0.7");
    assert_eq!(format_rate(0.25), "0.25");
}

#[test]
fn mask_seeds_are_distinct_across_runs_and_splits() {
    let mut seen = std::collections::HashSet::new();
    for seed in 0..50 {
        for split in Split::ALL {
            assert!(seen.insert(mask_seed(seed, split)));
        }
    }
}

fn grid() -> SweepGrid {
    SweepGrid {
        rates: vec![0.0, 0.7],
        rows: vec![
            SweepRow {
                label: "full".into(),
                cells: vec![Ok(0.5), Ok(0.25)],
            },
            SweepRow {
                label: "w/o Sp".into(),
                cells: vec![Ok(0.5), Err("boom".into())],
            },
        ],
    }
}

#[test]
fn grid_average_skips_failed_cells() {
    let g = grid();
    assert_eq!(g.row("full").unwrap().average(), Some(0.375));
    assert_eq!(g.row("w/o Sp").unwrap().average(), Some(0.5));
    assert_eq!(
        g.errors(),
        vec![("w/o Sp".to_string(), 0.7, "boom".to_string())]
    );
}

#[test]
fn grid_csv_layout() {
    let csv = grid().to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,0.0,0.7,Average");
    assert_eq!(lines[1], "full,0.5,0.25,0.375");
    assert_eq!(lines[2], "w/o Sp,0.5,ERR,0.5");
    assert!(grid().to_table().contains("Average"));
}

#[test]
fn run_config_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(
        Command::Train,
        DataSource::Synth(SynthConfig::default()),
        dir.path().into(),
    );
    cfg.ablations = vec![Ablation::Fre];
    cfg.missing_rate = 0.3;
    let path = dir.path().join("config.json");
    cfg.save(&path).unwrap();
    assert_eq!(RunConfig::load(&path).unwrap(), cfg);
}

#[test]
fn validation_rejects_bad_ranges() {
    let base = RunConfig::new(
        Command::Train,
        DataSource::Synth(SynthConfig::default()),
        "x".into(),
    );
    for bad in [
        RunConfig {
            repeats: 0,
            ..base.clone()
        },
        RunConfig {
            missing_rate: f64::NAN,
            ..base.clone()
        },
        RunConfig {
            command: Command::Sweep,
            ..base.clone()
        },
        RunConfig {
            command: Command::Eval,
            ..base.clone()
        },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
    }
    let mut hot = base.clone();
    hot.model.dropout = 1.0;
    assert!(hot.validate().is_err());
    assert!(base.validate().is_ok());
}
