//! Greedy truck-factor estimation over an authorship table.
//!
//! Developers are removed one at a time, most-authored-files first, until
//! fewer than half of the authored files keep a main author. The coverage
//! denominator stays fixed at the number of authored files in the input.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::authorship::AuthorshipTable;
use crate::history::{DevId, Instant};

/// Coverage must drop strictly below this share to stop the loop.
pub const COVERAGE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TruckFactorError {
    #[error("truck factor undefined: no file has a main author")]
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TFSnapshot {
    pub as_of: Instant,
    pub tf: usize,
    pub tf_developers: BTreeSet<DevId>,
    pub coverage_at_stop: f64,
    pub removal_order: Vec<DevId>,
    /// Authored files forming the coverage denominator.
    pub file_count: usize,
}

/// Share of authored files that keep at least one main author outside
/// `removed`.
pub fn coverage(
    table: &AuthorshipTable,
    removed: &BTreeSet<DevId>,
) -> Result<f64, TruckFactorError> {
    let mut total = 0usize;
    let mut covered = 0usize;
    for (_, authors) in table.authored_files() {
        total += 1;
        if authors.iter().any(|a| !removed.contains(a)) {
            covered += 1;
        }
    }
    if total == 0 {
        return Err(TruckFactorError::Undefined);
    }
    Ok(covered as f64 / total as f64)
}

/// Removal priority: more authored files first, then larger DOA sum, then
/// the lexicographically smaller id.
fn priority(a: &(DevId, usize, f64), b: &(DevId, usize, f64)) -> Ordering {
    b.1.cmp(&a.1)
        .then_with(|| b.2.total_cmp(&a.2))
        .then_with(|| a.0.cmp(&b.0))
}

pub fn compute_tf(table: &AuthorshipTable) -> Result<TFSnapshot, TruckFactorError> {
    let mut authored: BTreeMap<&DevId, usize> = BTreeMap::new();
    let mut remaining: Vec<usize> = Vec::new();
    let mut files_of: BTreeMap<&DevId, Vec<usize>> = BTreeMap::new();
    for (idx, (_, authors)) in table.authored_files().enumerate() {
        remaining.push(authors.len());
        for a in authors {
            *authored.entry(a).or_insert(0) += 1;
            files_of.entry(a).or_default().push(idx);
        }
    }
    let total = remaining.len();
    if total == 0 {
        return Err(TruckFactorError::Undefined);
    }

    // A developer's authored-file count does not depend on who else was
    // removed, so the greedy order is a single sort.
    let mut candidates: Vec<(DevId, usize, f64)> = authored
        .iter()
        .map(|(dev, &n)| ((*dev).clone(), n, table.doa_sum(dev)))
        .collect();
    candidates.sort_by(priority);

    let mut covered = total;
    let mut removal_order = Vec::new();
    for (dev, _, _) in candidates {
        for &f in &files_of[&dev] {
            remaining[f] -= 1;
            if remaining[f] == 0 {
                covered -= 1;
            }
        }
        removal_order.push(dev);
        let cov = covered as f64 / total as f64;
        if cov < COVERAGE_THRESHOLD {
            return Ok(TFSnapshot {
                as_of: table.as_of,
                tf: removal_order.len(),
                tf_developers: removal_order.iter().cloned().collect(),
                coverage_at_stop: cov,
                removal_order,
                file_count: total,
            });
        }
    }
    unreachable!("removing every main author leaves zero coverage")
}
