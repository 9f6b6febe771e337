//! Sensitivity of the abandonment threshold, measured on the gaps between
//! consecutive commits of truck-factor developers.
//!
//! Every gap is followed by another commit, so a threshold that flags any
//! gap as an abandonment is wrong for that developer. Precision is the
//! share of developers a threshold never misclassifies; improvement is the
//! share of the previous threshold's misclassified developers that the
//! next one gets right.

use std::collections::BTreeSet;

use chrono::TimeDelta;
use serde::Serialize;
use thiserror::Error;

use crate::duration::Span;
use crate::history::{DevId, RepositoryHistory};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SensitivityError {
    #[error("no developer profiles")]
    NoProfiles,
    #[error("thresholds must be strictly ascending")]
    NotAscending,
    #[error("harmonic mean undefined when precision and improvement are both zero")]
    BothZero,
    #[error("fraction {0} outside [0, 1]")]
    OutOfRange(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InterCommitProfile {
    pub repo_id: String,
    pub dev_id: DevId,
    /// Gaps between consecutive commits, ascending.
    #[serde(serialize_with = "serialize_deltas")]
    pub deltas: Vec<TimeDelta>,
}

fn serialize_deltas<S: serde::Serializer>(d: &[TimeDelta], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(d.iter().map(|x| x.num_seconds()))
}

impl InterCommitProfile {
    pub fn max_gap(&self) -> TimeDelta {
        self.deltas.iter().copied().max().unwrap_or_default()
    }

    /// Whether `threshold` would call this developer an abandoner between
    /// two of their commits.
    pub fn misclassified_by(&self, threshold: Span) -> bool {
        self.max_gap() >= threshold.as_delta()
    }
}

/// Profiles `developers` within one repository. Developers with fewer
/// than two commits have no gaps and are skipped.
pub fn profile_developers(
    history: &RepositoryHistory,
    developers: &BTreeSet<DevId>,
) -> Vec<InterCommitProfile> {
    developers
        .iter()
        .filter_map(|dev| {
            let times: Vec<_> = history
                .commits()
                .iter()
                .filter(|c| &c.dev_id == dev)
                .map(|c| c.timestamp)
                .collect();
            if times.len() < 2 {
                return None;
            }
            let mut deltas: Vec<TimeDelta> = times.windows(2).map(|w| w[1] - w[0]).collect();
            deltas.sort();
            Some(InterCommitProfile {
                repo_id: history.repo_id().to_string(),
                dev_id: dev.clone(),
                deltas,
            })
        })
        .collect()
}

pub fn precision_of(
    threshold: Span,
    profiles: &[InterCommitProfile],
) -> Result<f64, SensitivityError> {
    if profiles.is_empty() {
        return Err(SensitivityError::NoProfiles);
    }
    let correct = profiles
        .iter()
        .filter(|p| !p.misclassified_by(threshold))
        .count();
    Ok(correct as f64 / profiles.len() as f64)
}

/// `None` when the smaller threshold made no mistakes to correct.
pub fn improvement_of(
    larger: Span,
    smaller: Span,
    profiles: &[InterCommitProfile],
) -> Result<Option<f64>, SensitivityError> {
    if smaller >= larger {
        return Err(SensitivityError::NotAscending);
    }
    let wrong: Vec<_> = profiles
        .iter()
        .filter(|p| p.misclassified_by(smaller))
        .collect();
    if wrong.is_empty() {
        return Ok(None);
    }
    let fixed = wrong.iter().filter(|p| !p.misclassified_by(larger)).count();
    Ok(Some(fixed as f64 / wrong.len() as f64))
}

pub fn harmonic(p: f64, impr: f64) -> Result<f64, SensitivityError> {
    for v in [p, impr] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SensitivityError::OutOfRange(v.to_string()));
        }
    }
    if p == 0.0 && impr == 0.0 {
        return Err(SensitivityError::BothZero);
    }
    Ok(2.0 * p * impr / (p + impr))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub threshold: Span,
    pub precision: f64,
    pub improvement: Option<f64>,
    pub harmonic_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub profiles: usize,
    pub rows: Vec<SensitivityRow>,
}

pub fn default_grid() -> Vec<Span> {
    vec![
        Span::months(3.0),
        Span::months(6.0),
        Span::years(1.0),
        Span::years(1.5),
        Span::years(2.0),
    ]
}

/// One row per threshold; improvement compares each threshold with its
/// predecessor in the grid.
pub fn sensitivity_report(
    grid: &[Span],
    profiles: &[InterCommitProfile],
) -> Result<SensitivityReport, SensitivityError> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SensitivityError::NotAscending);
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (i, &threshold) in grid.iter().enumerate() {
        let precision = precision_of(threshold, profiles)?;
        let improvement = match i {
            0 => None,
            _ => improvement_of(threshold, grid[i - 1], profiles)?,
        };
        let harmonic_mean = improvement.and_then(|impr| harmonic(precision, impr).ok());
        rows.push(SensitivityRow {
            threshold,
            precision,
            improvement,
            harmonic_mean,
        });
    }
    Ok(SensitivityReport {
        profiles: profiles.len(),
        rows,
    })
}
