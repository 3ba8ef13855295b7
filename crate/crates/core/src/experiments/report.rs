use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::write_file;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Labels,
    Mismatch,
    Ablation,
    Transfer,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::Labels => "labels",
            ExperimentKind::Mismatch => "mismatch",
            ExperimentKind::Ablation => "ablation",
            ExperimentKind::Transfer => "transfer",
        })
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(ExperimentKind::Labels),
            "mismatch" => Ok(ExperimentKind::Mismatch),
            "ablation" => Ok(ExperimentKind::Ablation),
            "transfer" => Ok(ExperimentKind::Transfer),
            other => Err(Error::validation(
                "kind",
                format!("unknown experiment `{other}` (labels, mismatch, ablation, transfer)"),
            )),
        }
    }
}

/// Error rates of one arm under one condition, one entry per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub arm: String,
    pub condition: String,
    /// Position on the plot axis (label count, mismatch percent), if any.
    pub x: Option<f64>,
    pub seeds: Vec<u64>,
    pub errors: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; present only with two or more seeds.
    pub std: Option<f64>,
}

impl ConditionResult {
    pub fn new(arm: &str, condition: &str, x: Option<f64>, seeds: Vec<u64>, errors: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&errors);
        ConditionResult {
            arm: arm.to_string(),
            condition: condition.to_string(),
            x,
            seeds,
            errors,
            mean,
            std,
        }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (f64::NAN, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() >= 2).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (mean, std)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub conditions: Vec<ConditionResult>,
    /// Mean error of the labeled-only baseline arm, when the experiment has one.
    pub baseline_error: Option<f64>,
    pub config_hash: String,
    pub dataset_checksum: String,
    pub seeds: Vec<u64>,
    /// Free-form settings of the experiment (label counts, class sets, ...).
    pub settings: BTreeMap<String, serde_json::Value>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn condition(&self, arm: &str, condition: &str) -> Option<&ConditionResult> {
        self.conditions
            .iter()
            .find(|c| c.arm == arm && c.condition == condition)
    }

    pub fn arm(&self, arm: &str) -> Vec<&ConditionResult> {
        self.conditions.iter().filter(|c| c.arm == arm).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("experiment report", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `arm,condition,x,n_seeds,mean,std,errors` with one row per condition;
/// per-seed errors are `;`-separated.
pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("arm,condition,x,n_seeds,mean,std,errors\n");
    for c in &report.conditions {
        let errors: Vec<String> = c.errors.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.arm,
            c.condition,
            opt(c.x),
            c.errors.len(),
            c.mean,
            opt(c.std),
            errors.join(";")
        );
    }
    out
}

/// `arm,x,mean,std` for every condition placed on the plot axis.
pub fn series_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("arm,x,mean,std\n");
    for c in &report.conditions {
        if let Some(x) = c.x {
            let _ = writeln!(out, "{},{},{},{}", c.arm, x, c.mean, opt(c.std));
        }
    }
    out
}

/// Writes `report.json`, `summary.csv` and `series.csv` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        (dir.join("report.json"), report.to_json()),
        (dir.join("summary.csv"), summary_csv(report)),
        (dir.join("series.csv"), series_csv(report)),
    ];
    let mut written = Vec::new();
    for (path, text) in files {
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: ExperimentKind::Mismatch,
            conditions: [0.0, 25.0, 50.0, 75.0, 100.0]
                .iter()
                .map(|&x| {
                    ConditionResult::new("realmix", &format!("mismatch={x}"), Some(x), vec![1, 2], vec![0.2, 0.3])
                })
                .chain(std::iter::once(ConditionResult::new(
                    "baseline",
                    "labeled_only",
                    None,
                    vec![1],
                    vec![0.25],
                )))
                .collect(),
            baseline_error: Some(0.25),
            config_hash: "h".into(),
            dataset_checksum: "d".into(),
            seeds: vec![1, 2],
            settings: BTreeMap::new(),
            wall_clock_secs: 1.5,
        }
    }

    #[test]
    fn std_only_with_two_seeds() {
        assert_eq!(mean_std(&[0.5]), (0.5, None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn emitted_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample();
        emit_report(&report, dir.path()).unwrap();
        assert_eq!(ExperimentReport::load(&dir.path().join("report.json")).unwrap(), report);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), report.conditions.len() + 1);
        let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
        let xs: Vec<&str> = series
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(xs, vec!["0", "25", "50", "75", "100"]);
    }

    #[test]
    fn kinds_parse() {
        for k in ["labels", "mismatch", "ablation", "transfer"] {
            assert_eq!(k.parse::<ExperimentKind>().unwrap().to_string(), k);
        }
        assert!("bogus".parse::<ExperimentKind>().is_err());
    }
}
