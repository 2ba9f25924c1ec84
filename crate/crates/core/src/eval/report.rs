use std::fmt::Write as _;
use std::path::Path;

use super::{ConfusionMatrix, ReconMse};
use crate::data::Modality;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub waf1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub recon_mse: ReconMse,
    pub missing_rate: f64,
    pub param_count: usize,
    pub confusion: ConfusionMatrix,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

impl MetricsReport {
    pub fn new(
        confusion: ConfusionMatrix,
        recon_mse: ReconMse,
        missing_rate: f64,
        param_count: usize,
    ) -> Result<Self> {
        let per_class = confusion
            .per_class_f1()
            .into_iter()
            .zip(confusion.support())
            .map(|(f1, support)| ClassMetrics { f1, support })
            .collect();
        Ok(Self {
            waf1: confusion.waf1()?,
            accuracy: confusion.accuracy()?,
            per_class,
            recon_mse,
            missing_rate,
            param_count,
            confusion,
        })
    }

    /// `metric,value` rows. Absent values are written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "waf1,{}", self.waf1);
        let _ = writeln!(out, "accuracy,{}", self.accuracy);
        let _ = writeln!(out, "missing_rate,{}", self.missing_rate);
        let _ = writeln!(out, "param_count,{}", self.param_count);
        for m in Modality::ALL {
            let _ = writeln!(
                out,
                "mse_{},{}",
                m.tag(),
                opt(self.recon_mse.per_modality[m.index()])
            );
        }
        let _ = writeln!(out, "mse_pooled,{}", opt(self.recon_mse.pooled));
        for (j, c) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "f1_class{j},{}", c.f1);
            let _ = writeln!(out, "support_class{j},{}", c.support);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "WAF1          {:.4}", self.waf1);
        let _ = writeln!(out, "ACC           {:.4}", self.accuracy);
        let _ = writeln!(out, "missing rate  {:.4}", self.missing_rate);
        let _ = writeln!(out, "parameters    {}", self.param_count);
        let mse = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            out,
            "recon MSE     a {}  v {}  t {}  pooled {}",
            mse(self.recon_mse.per_modality[0]),
            mse(self.recon_mse.per_modality[1]),
            mse(self.recon_mse.per_modality[2]),
            mse(self.recon_mse.pooled)
        );
        let _ = writeln!(out, "\nclass  F1      support");
        for (j, c) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "{j:<6} {:.4}  {}", c.f1, c.support);
        }
        out
    }

    /// Writes `metrics.txt`, `metrics.csv` and `confusion.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, text) in [
            ("metrics.txt", self.to_table()),
            ("metrics.csv", self.to_csv()),
            ("confusion.csv", confusion_grid(&self.confusion)),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Plot-ready grid: header of predicted classes, one row per true class.
pub fn confusion_grid(cm: &ConfusionMatrix) -> String {
    let c = cm.classes();
    let mut out = String::from("true\\pred");
    for j in 0..c {
        let _ = write!(out, ",{j}");
    }
    out.push('\n');
    for (i, row) in cm.counts().iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
