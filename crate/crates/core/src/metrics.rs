//! Distances to reference contribution values and CSV/JSON comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str =
    "estimator,cosine_distance,euclidean_distance,max_difference,eval_count,wall_time_s,log10_time";

/// Wall times are clamped here before taking the logarithm, so a zero
/// reading (no clock available) still gives a finite value.
pub const MIN_WALL_TIME_S: f64 = 1e-9;

fn same_len(truth: &[f64], est: &[f64]) -> Result<()> {
    if truth.len() == est.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: est.len(),
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 - cos(truth, est)`; a zero estimate counts as orthogonal (distance 1).
pub fn cosine_distance(truth: &[f64], est: &[f64]) -> Result<f64> {
    same_len(truth, est)?;
    let nt = norm(truth);
    if nt == 0.0 {
        return Err(Error::InvalidConfig(
            "cosine distance is undefined for a zero reference vector".into(),
        ));
    }
    let ne = norm(est);
    if ne == 0.0 {
        return Ok(1.0);
    }
    let dot: f64 = truth.iter().zip(est).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot / (nt * ne)).clamp(0.0, 2.0))
}

pub fn euclidean_distance(truth: &[f64], est: &[f64]) -> Result<f64> {
    same_len(truth, est)?;
    Ok(truth.iter().zip(est).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

pub fn max_difference(truth: &[f64], est: &[f64]) -> Result<f64> {
    same_len(truth, est)?;
    Ok(truth.iter().zip(est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimator: String,
    pub cosine_distance: f64,
    pub euclidean_distance: f64,
    pub max_difference: f64,
    pub eval_count: u64,
    pub wall_time_s: f64,
    pub log10_time: f64,
}

impl ComparisonRow {
    /// Compares `report.total` against the reference values `truth`.
    pub fn compare(truth: &[f64], report: &EstimatorReport) -> Result<Self> {
        let est = &report.total.values;
        Ok(Self {
            estimator: report.estimator.clone(),
            cosine_distance: cosine_distance(truth, est)?,
            euclidean_distance: euclidean_distance(truth, est)?,
            max_difference: max_difference(truth, est)?,
            eval_count: report.eval_count,
            wall_time_s: report.wall_time_s,
            log10_time: report.wall_time_s.max(MIN_WALL_TIME_S).log10(),
        })
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.estimator,
            self.cosine_distance,
            self.euclidean_distance,
            self.max_difference,
            self.eval_count,
            self.wall_time_s,
            self.log10_time
        )
    }
}

/// Run context stored alongside the comparison rows.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub scenario_id: String,
    /// Estimator whose totals served as the reference.
    pub reference: String,
    pub seeds: BTreeMap<String, u64>,
    pub scenario: serde_json::Value,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub rows: Vec<ComparisonRow>,
    /// Full estimator outputs: per-round trajectories and convergence traces.
    pub estimates: Vec<EstimatorReport>,
}

pub fn build_report(
    rows: Vec<ComparisonRow>,
    metadata: ReportMetadata,
    estimates: Vec<EstimatorReport>,
) -> Result<ReportDocument> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("a report needs at least one row".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.estimator.contains([',', '"', '\n'])) {
        return Err(Error::InvalidConfig(format!(
            "estimator name {:?} cannot be written to CSV",
            r.estimator
        )));
    }
    Ok(ReportDocument {
        schema_version: REPORT_SCHEMA_VERSION,
        metadata,
        rows,
        estimates,
    })
}

impl ReportDocument {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(REPORT_SCHEMA_VERSION as u64) {
            return Err(Error::Format(format!(
                "report schema_version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                version.map_or_else(|| "missing".to_string(), |v| v.to_string())
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv())?;
        fs::write(&json, self.to_json()?)?;
        Ok((csv, json))
    }
}

/// Rows of several reports, ordered by (scenario, estimator). All reports
/// must share one schema version.
pub fn merge_reports(docs: &[ReportDocument]) -> Result<Vec<(String, ComparisonRow)>> {
    let first = docs
        .first()
        .ok_or_else(|| Error::InvalidConfig("no reports to merge".into()))?;
    if let Some(other) = docs.iter().find(|d| d.schema_version != first.schema_version) {
        return Err(Error::Format(format!(
            "schema versions differ: {} and {}",
            first.schema_version, other.schema_version
        )));
    }
    let mut rows: Vec<(String, ComparisonRow)> = docs
        .iter()
        .flat_map(|d| d.rows.iter().map(|r| (d.metadata.scenario_id.clone(), r.clone())))
        .collect();
    rows.sort_by(|a, b| (&a.0, &a.1.estimator).cmp(&(&b.0, &b.1.estimator)));
    Ok(rows)
}

/// Fixed-width text table of merged rows.
pub fn format_table(rows: &[(String, ComparisonRow)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<10} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "scenario", "estimator", "cosine", "euclidean", "max_diff", "evals", "time_s"
    );
    for (scenario, r) in rows {
        let _ = writeln!(
            out,
            "{:<28} {:<10} {:>12.6} {:>12.6} {:>12.6} {:>10} {:>10.3}",
            scenario, r.estimator, r.cosine_distance, r.euclidean_distance, r.max_difference, r.eval_count, r.wall_time_s
        );
    }
    out
}
