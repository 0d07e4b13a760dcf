use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, SimMetrics};
use crate::engine::Scheme;
use crate::error::{Error, Result};

pub const CSV_NAME: &str = "cycles.csv";
pub const SUMMARY_NAME: &str = "summary.json";
pub const MANIFEST_NAME: &str = "manifest.json";

/// Fixed 9-significant-digit scientific formatting used for every exported float.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn round9(x: f64) -> f64 {
    fmt9(x).parse().expect("formatted float parses")
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub trials: usize,
    pub samples: usize,
    /// SE quantiles at probabilities 0.00, 0.01, …, 1.00.
    pub se_quantiles_nats: Vec<f64>,
    pub se_adj_quantiles_nats: Vec<f64>,
    pub p10_se_nats: Option<f64>,
    pub mean_total_ho: f64,
    /// Mean cumulative handoffs at each cycle, averaged over trials.
    pub mean_cum_ho_by_cycle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schemes: Vec<SchemeSummary>,
}

impl Summary {
    pub fn from_metrics(m: &SimMetrics) -> Self {
        let schemes = m
            .schemes()
            .into_iter()
            .map(|scheme| {
                let recs: Vec<_> = m.records.iter().filter(|r| r.scheme == scheme).collect();
                let trials = m.trials.iter().filter(|t| t.scheme == scheme).count();
                let sorted = |f: &dyn Fn(&super::CycleRecord) -> f64| {
                    let mut v: Vec<f64> = recs.iter().map(|r| f(r)).collect();
                    v.sort_by(f64::total_cmp);
                    v
                };
                let se = sorted(&|r| r.se_nats);
                let adj = sorted(&|r| r.se_adj);
                let grid = |v: &[f64]| -> Vec<f64> {
                    if v.is_empty() {
                        return Vec::new();
                    }
                    (0..=100)
                        .map(|i| round9(quantile(v, i as f64 / 100.0).expect("nonempty")))
                        .collect()
                };
                let cycles = recs.iter().map(|r| r.t + 1).max().unwrap_or(0);
                let mut cum = vec![0.0; cycles];
                for r in &recs {
                    cum[r.t] += r.cum_ho as f64;
                }
                let total: usize = m.trials.iter().filter(|t| t.scheme == scheme).map(|t| t.total_ho).sum();
                SchemeSummary {
                    scheme,
                    trials,
                    samples: recs.len(),
                    se_quantiles_nats: grid(&se),
                    se_adj_quantiles_nats: grid(&adj),
                    p10_se_nats: quantile(&se, 0.1).map(round9),
                    mean_total_ho: if trials > 0 {
                        round9(total as f64 / trials as f64)
                    } else {
                        0.0
                    },
                    mean_cum_ho_by_cycle: cum.iter().map(|c| round9(c / trials.max(1) as f64)).collect(),
                }
            })
            .collect();
        Summary { schemes }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    master_seed: u64,
    trials: usize,
    files: [&'static str; 2],
    config: &'a ExperimentConfig,
}

pub fn csv_string(m: &SimMetrics) -> String {
    let mut out = String::from("trial,t,scheme,se_nats,n_ho,cum_ho,se_adj\n");
    for r in &m.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial,
            r.t,
            r.scheme.name(),
            fmt9(r.se_nats),
            r.n_ho,
            r.cum_ho,
            fmt9(r.se_adj)
        )
        .expect("writing to a String cannot fail");
    }
    out
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the per-cycle CSV, the summary and the manifest into `dir`.
pub fn export(metrics: &SimMetrics, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = serde_json::to_string_pretty(&Summary::from_metrics(metrics))?;
    let manifest = serde_json::to_string_pretty(&Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: cfg.seeds.master_seed,
        trials: cfg.seeds.trials,
        files: [CSV_NAME, SUMMARY_NAME],
        config: cfg,
    })?;
    Ok(vec![
        write(dir.join(CSV_NAME), &csv_string(metrics))?,
        write(dir.join(SUMMARY_NAME), &(summary + "\n"))?,
        write(dir.join(MANIFEST_NAME), &(manifest + "\n"))?,
    ])
}
