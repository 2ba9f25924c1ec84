use std::fmt::Write as _;

use rayon::prelude::*;

use super::run::{prepare_splits, resolve_model};
use super::{create_dir, write_text, RunConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::Ablation;
use crate::training::{train, TrainConfig};

/// One method row; a cell is the mean test WAF1 over seeds or the error
/// that stopped it.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub cells: Vec<std::result::Result<f64, String>>,
}

impl SweepRow {
    /// Mean over the cells that succeeded.
    pub fn average(&self) -> Option<f64> {
        let ok: Vec<f64> = self
            .cells
            .iter()
            .filter_map(|c| c.as_ref().ok().copied())
            .collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }
}

/// Methods by missing rate, plus a row average.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub rates: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

/// `0.3` style column heading.
pub fn format_rate(m: f64) -> String {
    if (m * 10.0 - (m * 10.0).round()).abs() < 1e-9 {
        format!("{m:.1}")
    } else {
        format!("{m}")
    }
}

impl SweepGrid {
    pub fn row(&self, label: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Failed cells are written as `ERR`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for &m in &self.rates {
            let _ = write!(out, ",{}", format_rate(m));
        }
        out.push_str(",Average\n");
        for row in &self.rows {
            out.push_str(&row.label);
            for c in &row.cells {
                match c {
                    Ok(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    Err(_) => out.push_str(",ERR"),
                }
            }
            match row.average() {
                Some(a) => {
                    let _ = writeln!(out, ",{a}");
                }
                None => out.push_str(",ERR\n"),
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10}", "method");
        for &m in &self.rates {
            let _ = write!(out, "{:>8}", format_rate(m));
        }
        let _ = writeln!(out, "{:>9}", "Average");
        let pct =
            |v: Option<f64>| v.map_or_else(|| "ERR".to_string(), |x| format!("{:.2}", 100.0 * x));
        for row in &self.rows {
            let _ = write!(out, "{:<10}", row.label);
            for c in &row.cells {
                let _ = write!(out, "{:>8}", pct(c.as_ref().ok().copied()));
            }
            let _ = writeln!(out, "{:>9}", pct(row.average()));
        }
        out
    }

    /// `(method, rate, message)` of every failed cell.
    pub fn errors(&self) -> Vec<(String, f64, String)> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.cells
                    .iter()
                    .zip(&self.rates)
                    .filter_map(|(c, &m)| c.as_ref().err().map(|e| (r.label.clone(), m, e.clone())))
            })
            .collect()
    }
}

fn cell(cfg: &RunConfig, ablation: Option<Ablation>, rate: f64) -> Result<f64> {
    let cfg = RunConfig {
        missing_rate: rate,
        ..cfg.clone()
    };
    let mut total = 0.0;
    for seed in cfg.seeds() {
        let splits = prepare_splits(&cfg, seed)?;
        let mut model_cfg = resolve_model(&cfg.model, &splits);
        if let Some(ab) = ablation {
            model_cfg = model_cfg.with_ablation(ab);
        }
        let train_cfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let (model, _) = train(&splits.train, &splits.val, &model_cfg, &train_cfg)?;
        total += evaluate(&model, &splits.test, None)?.waf1;
    }
    Ok(total / cfg.repeats as f64)
}

/// Trains every (method, rate) cell over `repeats` seeds. Cells run in
/// parallel; a failing cell is recorded and the rest continue. Writes
/// `sweep.csv`, `sweep.txt`, `config.json` and, if needed, `errors.txt`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepGrid> {
    if cfg.sweep.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one missing rate".into(),
        ));
    }
    cfg.validate()?;
    create_dir(&cfg.out)?;
    cfg.save(cfg.out.join("config.json"))?;

    let methods: Vec<Option<Ablation>> = std::iter::once(None)
        .chain(cfg.ablations.iter().copied().map(Some))
        .collect();
    let jobs: Vec<(usize, f64)> = (0..methods.len())
        .flat_map(|r| cfg.sweep.iter().map(move |&m| (r, m)))
        .collect();
    let results: Vec<std::result::Result<f64, String>> = jobs
        .par_iter()
        .map(|&(r, m)| {
            cell(cfg, methods[r], m).map_err(|e| {
                log::warn!("cell {:?} at M={m} failed: {e}", methods[r]);
                e.to_string()
            })
        })
        .collect();

    let n = cfg.sweep.len();
    let rows = methods
        .iter()
        .zip(results.chunks(n))
        .map(|(ab, cells)| SweepRow {
            label: ab.map_or("full", Ablation::label).to_string(),
            cells: cells.to_vec(),
        })
        .collect();
    let grid = SweepGrid {
        rates: cfg.sweep.clone(),
        rows,
    };
    write_text(&cfg.out.join("sweep.csv"), &grid.to_csv())?;
    write_text(&cfg.out.join("sweep.txt"), &grid.to_table())?;
    let errors = grid.errors();
    if !errors.is_empty() {
        let text: String = errors
            .iter()
            .map(|(l, m, e)| format!("{l}\t{}\t{e}\n", format_rate(*m)))
            .collect();
        write_text(&cfg.out.join("errors.txt"), &text)?;
    }
    Ok(grid)
}
