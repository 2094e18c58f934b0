//! Run artifacts: `results.json` and `summary.csv` depend only on the seed
//! and the config; wall-clock data goes to `metadata.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::suite::{Record, SuiteResult};

pub const RESULTS: &str = "results.json";
pub const SUMMARY: &str = "summary.csv";
pub const METADATA: &str = "metadata.json";
pub const C1_FILE: &str = "c1.json";

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub parallel: bool,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_row(r: &Record) -> Result<Vec<String>> {
    let (lo, hi) = r.ci.map_or((None, None), |c| (Some(c[0]), Some(c[1])));
    Ok(vec![
        r.check.clone(),
        r.label.clone(),
        r.record.clone(),
        r.domain.clone(),
        num(r.estimate),
        opt(lo),
        opt(hi),
        opt(r.bound),
        opt(r.slack),
        r.pass.map(|p| p.to_string()).unwrap_or_default(),
        serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string(),
        r.mandatory.to_string(),
        serde_json::to_string(&r.params)?,
    ])
}

/// Writes the deterministic artifacts and the metadata file into `dir`.
pub fn write_artifacts(dir: &Path, result: &SuiteResult, meta: &Metadata) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut body = serde_json::to_string_pretty(result)?;
    body.push('\n');
    fs::write(dir.join(RESULTS), body)?;

    let mut w = csv::Writer::from_path(dir.join(SUMMARY))?;
    w.write_record([
        "check", "label", "record", "domain", "estimate", "ci_lo", "ci_hi", "bound", "slack", "pass", "status",
        "mandatory", "params",
    ])?;
    for r in result.records() {
        w.write_record(csv_row(r)?)?;
    }
    w.flush()?;

    if let Some(cal) = &result.calibration {
        let mut c1 = serde_json::to_string_pretty(&json!({
            "c1": cal.c1, "c2": cal.c2, "r": cal.r, "depths": cal.depths, "domains": cal.domains,
            "reports": cal.reports,
        }))?;
        c1.push('\n');
        fs::write(dir.join(C1_FILE), c1)?;
    }
    let mut m = serde_json::to_string_pretty(meta)?;
    m.push('\n');
    fs::write(dir.join(METADATA), m)?;
    Ok(())
}
