//! Experiment report and CSV artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::fmt_f64;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub crate_name: String,
    pub version: String,
}

/// One shaped codebook on one channel (or OFDM subcarrier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DminRow {
    pub method: String,
    pub channel_id: usize,
    pub carrier: Option<usize>,
    /// On the design channel.
    pub d_min: f64,
    /// On the evaluation channel after any DAC quantization.
    pub d_min_eval: f64,
    pub allocation: Vec<usize>,
    pub iterations: usize,
    pub best_candidate_d_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub method: String,
    pub channel_id: usize,
    pub message: String,
}

/// SER at one SNR, pooled over channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerRow {
    pub method: String,
    pub snr_db: f64,
    pub trials: usize,
    pub errors: usize,
    pub ser: f64,
    /// Mean of the per-channel union bounds.
    pub union_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub channels: usize,
    pub failures: usize,
    pub median_d_min: Option<f64>,
    pub mean_d_min: Option<f64>,
    pub mean_iterations: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub methods: Vec<MethodSummary>,
    pub dmin: Vec<DminRow>,
    pub failures: Vec<FailureRow>,
    pub ser: Vec<SerRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Ser,
    Cdf,
    DminBar,
}

impl PlotKind {
    pub fn file_name(&self) -> &'static str {
        match self {
            PlotKind::Ser => "ser.csv",
            PlotKind::Cdf => "cdf.csv",
            PlotKind::DminBar => "dmin_bar.csv",
        }
    }
}

impl ExperimentReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn ser_csv(&self) -> Result<String> {
        if self.ser.is_empty() {
            return Err(Error::NotComputed("no SER table in report".into()));
        }
        let mut s = String::from("method,snr_db,trials,errors,ser,union_bound\n");
        for r in &self.ser {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method,
                fmt_f64(r.snr_db),
                r.trials,
                r.errors,
                fmt_f64(r.ser),
                fmt_f64(r.union_bound)
            );
        }
        Ok(s)
    }

    /// Rows grouped by method (report order), each group sorted by d_min.
    pub fn cdf_csv(&self) -> Result<String> {
        if self.dmin.is_empty() {
            return Err(Error::NotComputed("no d_min table in report".into()));
        }
        let mut s = String::from("method,channel_id,d_min\n");
        for m in &self.methods {
            let mut rows: Vec<&DminRow> = self.dmin.iter().filter(|r| r.method == m.method).collect();
            rows.sort_by(|a, b| a.d_min.total_cmp(&b.d_min).then(a.channel_id.cmp(&b.channel_id)));
            for r in rows {
                let _ = writeln!(s, "{},{},{}", r.method, r.channel_id, fmt_f64(r.d_min));
            }
        }
        Ok(s)
    }

    pub fn dmin_bar_csv(&self) -> Result<String> {
        if self.dmin.is_empty() {
            return Err(Error::NotComputed("no d_min table in report".into()));
        }
        let mut s = String::from("method,channels,failures,median_d_min,mean_d_min\n");
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                m.method,
                m.channels,
                m.failures,
                f(m.median_d_min),
                f(m.mean_d_min)
            );
        }
        Ok(s)
    }
}

/// Write one CSV of the requested kind into `out_dir`.
pub fn emit_plotdata(report: &ExperimentReport, kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = match kind {
        PlotKind::Ser => report.ser_csv()?,
        PlotKind::Cdf => report.cdf_csv()?,
        PlotKind::DminBar => report.dmin_bar_csv()?,
    };
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(kind.file_name());
    std::fs::write(&path, text)?;
    Ok(vec![path])
}
