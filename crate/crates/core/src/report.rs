//! Report files: one JSON document plus tidy CSV tables for plotting.
//!
//! Output is deterministic: keys are sorted and every float is written
//! with 6 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{CorpusReport, ProjectStatus};
use crate::sensitivity::SensitivityReport;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// `%g`-style rendering with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if !(-5..6).contains(&exp) {
        let s = format!("{:.5e}", x);
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{e}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x))
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => {
            if let Some(x) = n.as_f64() {
                let rounded: f64 = format_sig6(x).parse().unwrap_or(x);
                if let Some(num) = serde_json::Number::from_f64(rounded) {
                    *n = num;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and 6-significant-digit floats.
pub fn to_stable_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn write(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn histogram<K: ToString>(header: [&'static str; 2], counts: &BTreeMap<K, usize>) -> Self {
        let mut t = Table::new(&header);
        for (k, v) in counts {
            t.push(vec![k.to_string(), v.to_string()]);
        }
        t
    }

    fn render(&self) -> Result<Vec<u8>, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| ReportError::Io {
            path: "<csv buffer>".into(),
            source: e.into_error(),
        })
    }
}

fn opt_f(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

fn status_name(s: ProjectStatus) -> &'static str {
    match s {
        ProjectStatus::Analyzed => "analyzed",
        ProjectStatus::Excluded => "excluded",
        ProjectStatus::Failed => "failed",
    }
}

fn csv_tables(report: &CorpusReport) -> Vec<(&'static str, Table)> {
    let agg = &report.aggregates;
    let mut projects = Table::new(&[
        "repo_id",
        "status",
        "excluded_by",
        "error",
        "alias_percentage",
        "head_tf",
        "tfdd_events",
        "survived",
        "new_tf_developers",
        "commits_after",
        "pct_commits_after",
        "new_tf_file_share",
    ]);
    let mut commits_after =
        Table::new(&["repo_id", "cohort", "commits_after", "pct_commits_after"]);
    for p in &report.per_project {
        let m = p.post_tfdd_metrics.as_ref();
        projects.push(vec![
            p.repo_id.clone(),
            status_name(p.status).into(),
            p.excluded_by.clone().unwrap_or_default(),
            p.error.clone().unwrap_or_default(),
            opt_f(p.alias_percentage),
            p.head_tf.map(|t| t.to_string()).unwrap_or_default(),
            p.events.len().to_string(),
            p.survived.map(|s| s.to_string()).unwrap_or_default(),
            p.new_tf_developers.len().to_string(),
            m.map(|m| m.commits_after.to_string()).unwrap_or_default(),
            opt_f(m.map(|m| m.pct_commits_after)),
            opt_f(m.map(|m| m.new_tf_file_share)),
        ]);
        if let (Some(m), Some(survived)) = (m, p.survived) {
            commits_after.push(vec![
                p.repo_id.clone(),
                if survived {
                    "surviving"
                } else {
                    "non_surviving"
                }
                .into(),
                m.commits_after.to_string(),
                format_sig6(m.pct_commits_after),
            ]);
        }
    }

    let mut cohorts = Table::new(&[
        "metric",
        "sided",
        "n_surviving",
        "n_non_surviving",
        "median_surviving",
        "median_non_surviving",
        "u_statistic",
        "p_value",
        "p_adjusted",
        "p_method",
        "cliffs_delta",
        "magnitude",
    ]);
    for c in &agg.cohort_comparisons {
        cohorts.push(vec![
            c.metric.clone(),
            format!("{:?}", c.test.sided),
            c.n_surviving.to_string(),
            c.n_non_surviving.to_string(),
            format_sig6(c.median_surviving),
            format_sig6(c.median_non_surviving),
            format_sig6(c.test.statistic),
            format_sig6(c.test.p_value),
            format_sig6(c.p_adjusted),
            format!("{:?}", c.test.method),
            format_sig6(c.effect.delta),
            format!("{:?}", c.effect.magnitude),
        ]);
    }

    let mut summary = Table::new(&["key", "value"]);
    let mut kv = |k: &str, v: String| summary.push(vec![k.to_string(), v]);
    kv("schema_version", report.schema_version.to_string());
    kv("projects", agg.projects.to_string());
    kv("analyzed", agg.analyzed.to_string());
    kv("excluded", agg.excluded.to_string());
    kv("failed", agg.failed.to_string());
    kv("projects_with_tfdd", agg.projects_with_tfdd.to_string());
    kv("tfdd_rate", opt_f(agg.tfdd_rate));
    kv("surviving", agg.surviving.to_string());
    kv("survival_rate", opt_f(agg.survival_rate));

    vec![
        ("summary.csv", summary),
        ("projects.csv", projects),
        (
            "tf_histogram.csv",
            Table::histogram(["tf", "count"], &agg.tf_histogram),
        ),
        (
            "tfdd_by_tf.csv",
            Table::histogram(["tf", "count"], &agg.tfdd_by_tf),
        ),
        (
            "repo_age.csv",
            Table::histogram(["age_years", "count"], &agg.repo_age_years),
        ),
        (
            "tfdd_timing.csv",
            Table::histogram(["development_year", "count"], &agg.first_tfdd_year),
        ),
        ("commits_after.csv", commits_after),
        ("cohort_comparison.csv", cohorts),
        (
            "attraction_delay.csv",
            Table::histogram(["year_after_tfdd", "count"], &agg.attraction_delay),
        ),
        (
            "newcomers.csv",
            Table::histogram(["category", "count"], &agg.newcomer_shares),
        ),
        (
            "new_tf_developer_counts.csv",
            Table::histogram(["new_tf_developers", "count"], &agg.new_tf_developer_counts),
        ),
    ]
}

/// Writes the report into `out_dir` and returns the files written.
pub fn emit_report(
    report: &CorpusReport,
    formats: &[ReportFormat],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Json) {
        let path = out_dir.join("report.json");
        write(&path, to_stable_json(report)?.as_bytes())?;
        written.push(path);
    }
    if formats.contains(&ReportFormat::Csv) {
        for (name, table) in csv_tables(report) {
            let path = out_dir.join(name);
            write(&path, &table.render()?)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn sensitivity_csv(report: &SensitivityReport) -> Result<Vec<u8>, ReportError> {
    let mut t = Table::new(&["threshold", "precision", "improvement", "harmonic_mean"]);
    for r in &report.rows {
        t.push(vec![
            r.threshold.to_string(),
            format_sig6(r.precision),
            opt_f(r.improvement),
            opt_f(r.harmonic_mean),
        ]);
    }
    t.render()
}
