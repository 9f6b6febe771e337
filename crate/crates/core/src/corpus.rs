//! Batch pipeline over a list of repositories.
//!
//! Each project goes through ingest → filters → alias resolution → yearly
//! snapshots → TFDD detection → survival → post-TFDD metrics. A failing
//! project is recorded and never aborts the run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::duration::{DAYS_PER_YEAR, SECONDS_PER_DAY};
use crate::history::{
    filter_corrupted_migration_with, filter_longevity, format_timestamp, ingest_repository,
    snapshot_files, DevId, Instant, RepositoryHistory,
};
use crate::identity::{resolve_aliases, AliasMapping, RemoteContext};
use crate::lifecycle::{
    build_timeline, Contributor, LifecycleTimeline, PostTFDDMetrics, TFDDEvent,
};
use crate::lookup::AccountLookup;
use crate::rules::select_source_files;
use crate::sensitivity::{
    profile_developers, sensitivity_report, SensitivityError, SensitivityReport,
};
use crate::stats::{
    benjamini_hochberg, cliffs_delta_with, mann_whitney, EffectSize, Sample, Sided, TestResult,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read project list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectEntry {
    /// Label used in reports; the path as written in the list.
    pub repo_id: String,
    pub source: PathBuf,
    /// `owner/name` on the hosting platform, for account lookups.
    pub locator: Option<String>,
}

/// One entry per line: `<path> [<owner/name>]`. Blank lines and `#`
/// comments are skipped; relative paths resolve against `base_dir`.
pub fn parse_project_list(text: &str, base_dir: &Path) -> Vec<ProjectEntry> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|line| {
            let (path, locator) = match line.rsplit_once(char::is_whitespace) {
                Some((p, loc)) if loc.contains('/') && !base_dir.join(line).exists() => {
                    (p.trim_end(), Some(loc.to_string()))
                }
                _ => (line, None),
            };
            ProjectEntry {
                repo_id: path.to_string(),
                source: base_dir.join(path),
                locator,
            }
        })
        .collect()
}

pub fn load_project_list(path: &Path) -> Result<Vec<ProjectEntry>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_project_list(
        &text,
        path.parent().unwrap_or(Path::new(".")),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectStatus {
    Analyzed,
    Excluded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutcome {
    pub filter: String,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TfPoint {
    pub as_of: String,
    pub tf: Option<usize>,
    pub developers: Vec<DevId>,
}

/// Project facts at the time of its last TFDD.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtTfdd {
    pub developers: usize,
    pub commits: usize,
    pub files: usize,
    pub age_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectReport {
    pub repo_id: String,
    pub status: ProjectStatus,
    pub filters_applied: Vec<FilterOutcome>,
    pub excluded_by: Option<String>,
    pub error: Option<String>,
    pub commits: Option<usize>,
    pub created_at: Option<String>,
    pub head_at: Option<String>,
    pub alias_percentage: Option<f64>,
    pub head_tf: Option<usize>,
    pub tf_history: Vec<TfPoint>,
    pub events: Vec<TFDDEvent>,
    pub survived: Option<bool>,
    pub new_tf_developers: Vec<DevId>,
    pub newcomer_split: BTreeMap<DevId, Contributor>,
    pub attraction_year: Option<u32>,
    pub post_tfdd_metrics: Option<PostTFDDMetrics>,
    pub at_last_tfdd: Option<AtTfdd>,
}

impl ProjectReport {
    fn new(repo_id: &str, status: ProjectStatus) -> Self {
        ProjectReport {
            repo_id: repo_id.to_string(),
            status,
            filters_applied: Vec::new(),
            excluded_by: None,
            error: None,
            commits: None,
            created_at: None,
            head_at: None,
            alias_percentage: None,
            head_tf: None,
            tf_history: Vec::new(),
            events: Vec::new(),
            survived: None,
            new_tf_developers: Vec::new(),
            newcomer_split: BTreeMap::new(),
            attraction_year: None,
            post_tfdd_metrics: None,
            at_last_tfdd: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortComparison {
    pub metric: String,
    pub n_surviving: usize,
    pub n_non_surviving: usize,
    pub median_surviving: f64,
    pub median_non_surviving: f64,
    pub test: TestResult,
    pub effect: EffectSize,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Aggregates {
    pub projects: usize,
    pub analyzed: usize,
    pub excluded: usize,
    pub failed: usize,
    pub excluded_by_filter: BTreeMap<String, usize>,
    /// Truck factor at the head of every analyzed project.
    pub tf_histogram: BTreeMap<usize, usize>,
    pub projects_with_tfdd: usize,
    pub tfdd_rate: Option<f64>,
    pub events_per_project: BTreeMap<usize, usize>,
    pub tfdd_by_tf: BTreeMap<usize, usize>,
    pub surviving: usize,
    pub survival_rate: Option<f64>,
    pub new_tf_developer_counts: BTreeMap<usize, usize>,
    /// Year after the last TFDD (1 = first) in which recovery was found.
    pub attraction_delay: BTreeMap<u32, usize>,
    /// Surviving projects by who the new truck-factor developers were.
    pub newcomer_shares: BTreeMap<String, usize>,
    /// Whole years from creation to head, projects with a TFDD.
    pub repo_age_years: BTreeMap<u32, usize>,
    /// Development year (1 = first) of each project's first TFDD.
    pub first_tfdd_year: BTreeMap<u32, usize>,
    pub cohort_comparisons: Vec<CohortComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub schema_version: u32,
    pub per_project: Vec<ProjectReport>,
    pub aggregates: Aggregates,
}

/// Shared, read-only inputs of one corpus run.
pub struct RunContext<'a> {
    pub config: &'a Config,
    pub mapping: Option<&'a AliasMapping>,
    pub lookup: Option<&'a dyn AccountLookup>,
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run_corpus(
    list: &Path,
    config: &Config,
    lookup: Option<&dyn AccountLookup>,
    jobs: usize,
) -> Result<CorpusReport, CorpusError> {
    let entries = load_project_list(list)?;
    let mapping = config.alias_mapping()?;
    let ctx = RunContext {
        config,
        mapping: mapping.as_ref(),
        lookup,
    };
    run_entries(&entries, &ctx, jobs)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CorpusError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CorpusError::Pool(e.to_string()))
}

pub fn run_entries(
    entries: &[ProjectEntry],
    ctx: &RunContext<'_>,
    jobs: usize,
) -> Result<CorpusReport, CorpusError> {
    // Validate shared inputs once so a bad rules file is a run error, not
    // one failure per project.
    let settings = ctx.config.snapshot_settings()?;
    let mut per_project: Vec<ProjectReport> = pool(jobs)?.install(|| {
        entries
            .par_iter()
            .map(|entry| analyze_project(entry, ctx, &settings))
            .collect()
    });
    per_project.sort_by(|a, b| a.repo_id.cmp(&b.repo_id));
    let aggregates = aggregate(&per_project, ctx.config);
    Ok(CorpusReport {
        schema_version: SCHEMA_VERSION,
        per_project,
        aggregates,
    })
}

fn git_locator(source: &Path) -> Option<String> {
    if !source.is_dir() {
        return None;
    }
    let out = Command::new("git")
        .arg("-C")
        .arg(source)
        .args(["remote", "get-url", "origin"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    locator_from_url(String::from_utf8_lossy(&out.stdout).trim())
}

/// `owner/name` from an https or scp-style remote URL.
pub fn locator_from_url(url: &str) -> Option<String> {
    let path = url
        .strip_suffix(".git")
        .unwrap_or(url)
        .trim_end_matches('/');
    let mut parts = path.rsplit(['/', ':']);
    let name = parts.next()?;
    let owner = parts.next()?;
    (!name.is_empty() && !owner.is_empty()).then(|| format!("{owner}/{name}"))
}

fn analyze_project(
    entry: &ProjectEntry,
    ctx: &RunContext<'_>,
    settings: &crate::lifecycle::SnapshotSettings,
) -> ProjectReport {
    info!("analyzing {}", entry.repo_id);
    let history = match ingest_repository(&entry.source, &entry.repo_id) {
        Ok(h) => h,
        Err(e) => {
            warn!("{}: {e}", entry.repo_id);
            let mut r = ProjectReport::new(&entry.repo_id, ProjectStatus::Failed);
            r.error = Some(e.to_string());
            return r;
        }
    };
    let mut report = ProjectReport::new(&entry.repo_id, ProjectStatus::Analyzed);
    report.commits = Some(history.commits().len());
    report.created_at = Some(format_timestamp(history.created_at()));
    report.head_at = Some(format_timestamp(history.head_at()));

    let filters = &ctx.config.filters;
    let checks = [
        (
            "corrupted_migration",
            filter_corrupted_migration_with(
                &history,
                filters.migration_window,
                filters.migration_fraction,
            ),
        ),
        (
            "longevity",
            filter_longevity(&history, filters.min_longevity),
        ),
    ];
    for (name, excluded) in checks {
        report.filters_applied.push(FilterOutcome {
            filter: name.to_string(),
            excluded,
        });
        if excluded && report.excluded_by.is_none() {
            report.excluded_by = Some(name.to_string());
            report.status = ProjectStatus::Excluded;
        }
    }
    if report.status == ProjectStatus::Excluded {
        return report;
    }

    let locator = entry.locator.clone().or_else(|| git_locator(&entry.source));
    let remote = match (ctx.lookup, locator.as_deref()) {
        (Some(client), Some(repo_locator)) => Some(RemoteContext {
            client,
            repo_locator,
        }),
        _ => None,
    };
    let resolved = match resolve_aliases(&history, ctx.mapping, remote) {
        Ok(r) => r,
        Err(e) => return failed(report, e.to_string()),
    };
    report.alias_percentage = Some(resolved.report.alias_percentage);
    let history = resolved.history;

    let timeline = match build_timeline(&history, settings, &ctx.config.abandon) {
        Ok(t) => t,
        Err(e) => return failed(report, e.to_string()),
    };
    fill_from_timeline(&mut report, &timeline);
    if let Some(last) = timeline.events.last() {
        report.at_last_tfdd = Some(facts_at(&history, last.occurred_at, settings));
    }
    report
}

fn failed(mut report: ProjectReport, error: String) -> ProjectReport {
    warn!("{}: {error}", report.repo_id);
    report.status = ProjectStatus::Failed;
    report.error = Some(error);
    report
}

fn fill_from_timeline(report: &mut ProjectReport, timeline: &LifecycleTimeline) {
    report.head_tf = timeline.head.as_ref().map(|s| s.tf);
    report.tf_history = timeline
        .snapshots
        .iter()
        .map(|s| TfPoint {
            as_of: format_timestamp(s.as_of),
            tf: s.tf.as_ref().map(|t| t.tf),
            developers: s
                .tf
                .as_ref()
                .map(|t| t.tf_developers.iter().cloned().collect())
                .unwrap_or_default(),
        })
        .collect();
    report.events = timeline.events.clone();
    if !timeline.events.is_empty() {
        report.survived = Some(timeline.survived);
    }
    report.new_tf_developers = timeline.new_tf_developers.iter().cloned().collect();
    report.newcomer_split = timeline.newcomer_split.clone();
    report.attraction_year = timeline.attraction_year;
    report.post_tfdd_metrics = timeline.post_tfdd.clone();
}

fn facts_at(
    history: &RepositoryHistory,
    at: Instant,
    settings: &crate::lifecycle::SnapshotSettings,
) -> AtTfdd {
    let prefix = history.prefix(at);
    let developers: BTreeSet<&DevId> = prefix.iter().map(|c| &c.dev_id).collect();
    let files = snapshot_files(history, at)
        .map(|s| select_source_files(&s, &settings.rules).live_files.len())
        .unwrap_or(0);
    AtTfdd {
        developers: developers.len(),
        commits: prefix.len(),
        files,
        age_days: (at - history.created_at()).num_seconds() as f64 / SECONDS_PER_DAY,
    }
}

fn whole_years(from: Instant, to: Instant) -> u32 {
    ((to - from).num_seconds().max(0) as f64 / (DAYS_PER_YEAR * SECONDS_PER_DAY)).floor() as u32
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn aggregate(projects: &[ProjectReport], config: &Config) -> Aggregates {
    let mut agg = Aggregates {
        projects: projects.len(),
        ..Aggregates::default()
    };
    for p in projects {
        match p.status {
            ProjectStatus::Analyzed => agg.analyzed += 1,
            ProjectStatus::Excluded => {
                agg.excluded += 1;
                if let Some(f) = &p.excluded_by {
                    *agg.excluded_by_filter.entry(f.clone()).or_insert(0) += 1;
                }
            }
            ProjectStatus::Failed => agg.failed += 1,
        }
    }
    let analyzed: Vec<&ProjectReport> = projects
        .iter()
        .filter(|p| p.status == ProjectStatus::Analyzed)
        .collect();
    for p in &analyzed {
        if let Some(tf) = p.head_tf {
            *agg.tf_histogram.entry(tf).or_insert(0) += 1;
        }
        if p.events.is_empty() {
            continue;
        }
        agg.projects_with_tfdd += 1;
        *agg.events_per_project.entry(p.events.len()).or_insert(0) += 1;
        for e in &p.events {
            *agg.tfdd_by_tf.entry(e.tf_at_event).or_insert(0) += 1;
        }
        let created = p
            .created_at
            .as_deref()
            .and_then(crate::history::parse_timestamp);
        let head = p
            .head_at
            .as_deref()
            .and_then(crate::history::parse_timestamp);
        if let (Some(created), Some(head)) = (created, head) {
            *agg.repo_age_years
                .entry(whole_years(created, head))
                .or_insert(0) += 1;
            let first = p.events[0].occurred_at;
            *agg.first_tfdd_year
                .entry(whole_years(created, first) + 1)
                .or_insert(0) += 1;
        }
        if p.survived == Some(true) {
            agg.surviving += 1;
            *agg.new_tf_developer_counts
                .entry(p.new_tf_developers.len())
                .or_insert(0) += 1;
            if let Some(y) = p.attraction_year {
                *agg.attraction_delay.entry(y).or_insert(0) += 1;
            }
            let newcomers = p
                .newcomer_split
                .values()
                .filter(|c| **c == Contributor::Newcomer)
                .count();
            let key = match newcomers {
                0 => "old_contributors_only",
                n if n == p.newcomer_split.len() => "newcomers_only",
                _ => "mixed",
            };
            *agg.newcomer_shares.entry(key.to_string()).or_insert(0) += 1;
        }
    }
    if agg.analyzed > 0 {
        agg.tfdd_rate = Some(agg.projects_with_tfdd as f64 / agg.analyzed as f64);
    }
    if agg.projects_with_tfdd > 0 {
        agg.survival_rate = Some(agg.surviving as f64 / agg.projects_with_tfdd as f64);
    }
    agg.cohort_comparisons = compare_cohorts(&analyzed, config);
    agg
}

type Metric = (&'static str, Sided, fn(&ProjectReport) -> Option<f64>);

const COHORT_METRICS: [Metric; 6] = [
    ("commits_after_tfdd", Sided::OneSidedGreater, |p| {
        p.post_tfdd_metrics.as_ref().map(|m| m.commits_after as f64)
    }),
    ("pct_commits_after_tfdd", Sided::OneSidedGreater, |p| {
        p.post_tfdd_metrics.as_ref().map(|m| m.pct_commits_after)
    }),
    ("developers_at_tfdd", Sided::TwoSided, |p| {
        p.at_last_tfdd.as_ref().map(|f| f.developers as f64)
    }),
    ("commits_at_tfdd", Sided::TwoSided, |p| {
        p.at_last_tfdd.as_ref().map(|f| f.commits as f64)
    }),
    ("files_at_tfdd", Sided::TwoSided, |p| {
        p.at_last_tfdd.as_ref().map(|f| f.files as f64)
    }),
    ("age_days_at_tfdd", Sided::TwoSided, |p| {
        p.at_last_tfdd.as_ref().map(|f| f.age_days)
    }),
];

/// Surviving vs non-surviving projects; p-values are adjusted jointly.
fn compare_cohorts(analyzed: &[&ProjectReport], config: &Config) -> Vec<CohortComparison> {
    let mut out = Vec::new();
    for (name, sided, get) in COHORT_METRICS {
        let cohort = |survived: bool| -> Vec<f64> {
            analyzed
                .iter()
                .filter(|p| p.survived == Some(survived))
                .filter_map(|p| get(p))
                .collect()
        };
        let (yes, no) = (cohort(true), cohort(false));
        let (Ok(a), Ok(b)) = (Sample::new(yes.clone()), Sample::new(no.clone())) else {
            continue;
        };
        let test = mann_whitney(&a, &b, sided).expect("non-empty samples");
        out.push(CohortComparison {
            metric: name.to_string(),
            n_surviving: a.len(),
            n_non_surviving: b.len(),
            median_surviving: median(&yes),
            median_non_surviving: median(&no),
            test,
            effect: cliffs_delta_with(&a, &b, &config.stats),
            p_adjusted: test.p_value,
        });
    }
    let raw: Vec<f64> = out.iter().map(|c| c.test.p_value).collect();
    if let Ok(adjusted) = benjamini_hochberg(&raw) {
        for (c, p) in out.iter_mut().zip(adjusted) {
            c.p_adjusted = p;
        }
    }
    out
}

/// Threshold sensitivity over every developer that appears in a truck
/// factor of any analyzed project (yearly or at head).
pub fn run_sensitivity(
    entries: &[ProjectEntry],
    ctx: &RunContext<'_>,
    jobs: usize,
) -> Result<SensitivityReport, CorpusError> {
    let settings = ctx.config.snapshot_settings()?;
    let profiles: Vec<_> = pool(jobs)?.install(|| {
        entries
            .par_iter()
            .map(|entry| -> Vec<_> {
                let Ok(history) = ingest_repository(&entry.source, &entry.repo_id) else {
                    warn!("{}: cannot ingest, skipped", entry.repo_id);
                    return Vec::new();
                };
                let f = &ctx.config.filters;
                if filter_corrupted_migration_with(
                    &history,
                    f.migration_window,
                    f.migration_fraction,
                ) || filter_longevity(&history, f.min_longevity)
                {
                    return Vec::new();
                }
                let Ok(resolved) = resolve_aliases(&history, ctx.mapping, None) else {
                    return Vec::new();
                };
                let Ok(timeline) =
                    build_timeline(&resolved.history, &settings, &ctx.config.abandon)
                else {
                    return Vec::new();
                };
                let devs: BTreeSet<DevId> = timeline
                    .snapshots
                    .iter()
                    .filter_map(|s| s.tf.as_ref())
                    .chain(timeline.head.as_ref())
                    .flat_map(|t| t.tf_developers.iter().cloned())
                    .collect();
                profile_developers(&resolved.history, &devs)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    Ok(sensitivity_report(&ctx.config.sensitivity.grid, &profiles)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_list_parsing() {
        let text = "# corpus\nlogs/a.jsonl\n\n  repos/b   owner/b  # trailing\nrepos/c\n";
        let entries = parse_project_list(text, Path::new("/nonexistent"));
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].repo_id, "logs/a.jsonl");
        assert_eq!(entries[0].source, Path::new("/nonexistent/logs/a.jsonl"));
        assert_eq!(entries[1].repo_id, "repos/b");
        assert_eq!(entries[1].locator.as_deref(), Some("owner/b"));
        assert_eq!(entries[2].locator, None);
    }

    #[test]
    fn remote_urls() {
        assert_eq!(
            locator_from_url("https://github.com/composer/satis.git").as_deref(),
            Some("composer/satis")
        );
        assert_eq!(
            locator_from_url("git@github.com:composer/satis.git").as_deref(),
            Some("composer/satis")
        );
        assert_eq!(locator_from_url("satis"), None);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
