//! Degree-of-authorship (DOA) scores and per-file main-author sets.
//!
//! DOA combines first authorship (FA), the developer's own deliveries
//! (DL) and changes accepted from everybody else (AC):
//!
//! ```text
//! DOA = base + fa·FA + dl·DL − ac·ln(1 + AC)
//! ```
//!
//! A developer is a main author of a file when their DOA reaches both a
//! fraction of the file's maximum DOA and an absolute floor.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{
    snapshot_files, ChangeKind, CommitRecord, DevId, HistoryError, Instant, RepositoryHistory,
};
use crate::rules::{select_source_files, PathRules};

#[derive(Debug, Error)]
pub enum AuthorshipError {
    #[error("`{path}` is not live at {as_of}")]
    NotLive { path: String, as_of: Instant },
    #[error("no DOA recorded for `{0}`")]
    NoData(String),
    #[error(transparent)]
    History(#[from] HistoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoaModel {
    pub base: f64,
    pub fa: f64,
    pub dl: f64,
    /// Magnitude of the (negative) acceptance coefficient.
    pub ac: f64,
    pub norm_threshold: f64,
    pub abs_threshold: f64,
    /// Drop files whose best DOA is below `abs_threshold` from the
    /// analysis instead of relaxing the absolute gate for them.
    pub drop_unauthored: bool,
}

impl Default for DoaModel {
    fn default() -> Self {
        DoaModel {
            base: 3.293,
            fa: 1.098,
            dl: 0.164,
            ac: 0.321,
            norm_threshold: 0.75,
            abs_threshold: 3.293,
            drop_unauthored: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct AuthorshipFactors {
    pub first_authorship: u8,
    pub deliveries: u64,
    pub acceptances: u64,
}

impl DoaModel {
    pub fn doa(&self, f: AuthorshipFactors) -> f64 {
        self.base + self.fa * f64::from(f.first_authorship) + self.dl * f.deliveries as f64
            - self.ac * (f.acceptances as f64).ln_1p()
    }

    /// Main authors among `scores` (developer → DOA for one file).
    pub fn main_authors<'a, I>(&self, scores: I) -> Result<BTreeSet<DevId>, AuthorshipError>
    where
        I: IntoIterator<Item = (&'a DevId, f64)>,
    {
        let scores: Vec<(&DevId, f64)> = scores.into_iter().collect();
        let max = scores
            .iter()
            .map(|&(_, d)| d)
            .fold(f64::NEG_INFINITY, f64::max);
        if scores.is_empty() {
            return Err(AuthorshipError::NoData(String::new()));
        }
        let passes_floor = max >= self.abs_threshold;
        if !passes_floor && self.drop_unauthored {
            return Ok(BTreeSet::new());
        }
        Ok(scores
            .into_iter()
            .filter(|&(_, d)| {
                let normalized = if max > 0.0 { d / max } else { 0.0 };
                normalized >= self.norm_threshold && (!passes_floor || d >= self.abs_threshold)
            })
            .map(|(dev, _)| dev.clone())
            .collect())
    }
}

pub fn compute_doa(factors: AuthorshipFactors) -> f64 {
    DoaModel::default().doa(factors)
}

/// Per-file change ledger following a file through renames.
///
/// `total` counts every change event including the creating add, so the
/// creation is an acceptance for everybody except the creator.
#[derive(Debug, Clone, Default)]
struct Lineage {
    creator: Option<DevId>,
    changes: BTreeMap<DevId, u64>,
    total: u64,
}

impl Lineage {
    fn created_by(dev: &DevId) -> Self {
        Lineage {
            creator: Some(dev.clone()),
            changes: BTreeMap::new(),
            total: 1,
        }
    }

    fn factors(&self, dev: &DevId) -> AuthorshipFactors {
        let deliveries = self.changes.get(dev).copied().unwrap_or(0);
        let created = self.creator.as_ref() == Some(dev);
        AuthorshipFactors {
            first_authorship: u8::from(created),
            deliveries,
            acceptances: self.total - deliveries - u64::from(created),
        }
    }

    /// Developers with a recorded stake in the file.
    fn contributors(&self) -> BTreeSet<&DevId> {
        self.creator.iter().chain(self.changes.keys()).collect()
    }

    fn deliver(&mut self, dev: &DevId) {
        *self.changes.entry(dev.clone()).or_insert(0) += 1;
        self.total += 1;
    }
}

/// Replays changes up to `as_of`. Adds start a fresh lineage credited to
/// the committer; modifies and renames count as one delivery each.
fn replay_lineages(commits: &[CommitRecord]) -> BTreeMap<String, Lineage> {
    let mut files: BTreeMap<String, Lineage> = BTreeMap::new();
    for commit in commits {
        let dev = &commit.dev_id;
        for change in &commit.changes {
            match change.kind {
                ChangeKind::Add => {
                    files.insert(change.path.clone(), Lineage::created_by(dev));
                }
                ChangeKind::Modify => files.entry(change.path.clone()).or_default().deliver(dev),
                ChangeKind::Delete => {
                    files.remove(&change.path);
                }
                ChangeKind::Rename => {
                    let mut lineage = change
                        .old_path
                        .as_ref()
                        .and_then(|old| files.remove(old))
                        .unwrap_or_default();
                    lineage.deliver(dev);
                    files.insert(change.path.clone(), lineage);
                }
            }
        }
    }
    files
}

pub fn compute_factors(
    history: &RepositoryHistory,
    dev: &DevId,
    path: &str,
    as_of: Instant,
) -> Result<AuthorshipFactors, AuthorshipError> {
    let lineages = replay_lineages(history.prefix(as_of));
    lineages
        .get(path)
        .map(|l| l.factors(dev))
        .ok_or_else(|| AuthorshipError::NotLive {
            path: path.to_string(),
            as_of,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuthorshipTable {
    pub as_of: Instant,
    /// Live files after source selection; keys of `main_authors`.
    pub doa: BTreeMap<String, BTreeMap<DevId, f64>>,
    /// Empty for files whose best DOA misses the absolute floor.
    pub main_authors: BTreeMap<String, BTreeSet<DevId>>,
}

impl AuthorshipTable {
    pub fn file_count(&self) -> usize {
        self.main_authors.len()
    }

    /// Files that have at least one main author.
    pub fn authored_files(&self) -> impl Iterator<Item = (&String, &BTreeSet<DevId>)> {
        self.main_authors.iter().filter(|(_, a)| !a.is_empty())
    }

    pub fn developers(&self) -> BTreeSet<&DevId> {
        self.doa.values().flat_map(|m| m.keys()).collect()
    }

    /// Sum of a developer's DOA over every file where it is recorded.
    pub fn doa_sum(&self, dev: &DevId) -> f64 {
        self.doa.values().filter_map(|m| m.get(dev)).sum()
    }
}

pub fn build_authorship_table(
    history: &RepositoryHistory,
    as_of: Instant,
    rules: &PathRules,
    model: &DoaModel,
) -> Result<AuthorshipTable, AuthorshipError> {
    let snapshot = select_source_files(&snapshot_files(history, as_of)?, rules);
    let lineages = replay_lineages(history.prefix(as_of));
    let mut doa = BTreeMap::new();
    let mut main_authors = BTreeMap::new();
    for path in &snapshot.live_files {
        let lineage = &lineages[path];
        let scores: BTreeMap<DevId, f64> = lineage
            .contributors()
            .into_iter()
            .map(|dev| (dev.clone(), model.doa(lineage.factors(dev))))
            .collect();
        let authors = match model.main_authors(scores.iter().map(|(d, s)| (d, *s))) {
            Ok(a) => a,
            Err(AuthorshipError::NoData(_)) => BTreeSet::new(),
            Err(e) => return Err(e),
        };
        doa.insert(path.clone(), scores);
        main_authors.insert(path.clone(), authors);
    }
    Ok(AuthorshipTable {
        as_of,
        doa,
        main_authors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::FileChange;
    use chrono::{TimeDelta, TimeZone, Utc};
    use proptest::prelude::*;

    fn at(day: i64) -> Instant {
        Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap() + TimeDelta::days(day)
    }

    fn by(dev: &str, id: &str, day: i64, changes: Vec<FileChange>) -> CommitRecord {
        CommitRecord::new(id, dev, format!("{dev}@x"), at(day), changes)
    }

    fn dev(d: &str) -> DevId {
        DevId(format!("{d}@x"))
    }

    fn f(fa: u8, dl: u64, ac: u64) -> AuthorshipFactors {
        AuthorshipFactors {
            first_authorship: fa,
            deliveries: dl,
            acceptances: ac,
        }
    }

    #[test]
    fn closed_form_values() {
        assert!((compute_doa(f(1, 0, 0)) - 4.391).abs() < 1e-9);
        assert!((compute_doa(f(0, 0, 0)) - 3.293).abs() < 1e-9);
        let expected = 3.293 + 1.098 + 1.640 - 0.321 * 11f64.ln();
        assert!((compute_doa(f(1, 10, 10)) - expected).abs() < 1e-9);
        assert!((compute_doa(f(1, 10, 10)) - 5.261).abs() < 5e-4);
    }

    #[test]
    fn factor_counting() {
        let h = RepositoryHistory::new(
            "r",
            vec![
                by("a", "1", 0, vec![FileChange::add("f")]),
                by("a", "2", 1, vec![FileChange::modify("f")]),
                by("b", "3", 2, vec![FileChange::modify("f")]),
                by("a", "4", 3, vec![FileChange::modify("f")]),
                by("b", "5", 4, vec![FileChange::modify("f")]),
                by("b", "6", 5, vec![FileChange::modify("f")]),
            ],
        )
        .unwrap();
        let t = h.head_at();
        assert_eq!(compute_factors(&h, &dev("a"), "f", t).unwrap(), f(1, 2, 3));
        assert_eq!(compute_factors(&h, &dev("b"), "f", t).unwrap(), f(0, 3, 3));
        assert!(matches!(
            compute_factors(&h, &dev("a"), "nope", t),
            Err(AuthorshipError::NotLive { .. })
        ));
    }

    #[test]
    fn untouched_developer_sees_only_acceptances() {
        let mut commits = vec![by("a", "1", 0, vec![FileChange::add("f")])];
        for i in 0..4 {
            commits.push(by(
                "b",
                &format!("m{i}"),
                1 + i,
                vec![FileChange::modify("f")],
            ));
        }
        let h = RepositoryHistory::new("r", commits).unwrap();
        assert_eq!(
            compute_factors(&h, &dev("c"), "f", h.head_at()).unwrap(),
            f(0, 0, 5)
        );
    }

    #[test]
    fn creator_without_later_changes() {
        let h =
            RepositoryHistory::new("r", vec![by("a", "1", 0, vec![FileChange::add("f")])]).unwrap();
        assert_eq!(
            compute_factors(&h, &dev("a"), "f", h.head_at()).unwrap(),
            f(1, 0, 0)
        );
    }

    #[test]
    fn rename_keeps_lineage_and_counts_a_delivery() {
        let h = RepositoryHistory::new(
            "r",
            vec![
                by("a", "1", 0, vec![FileChange::add("old")]),
                by("a", "2", 1, vec![FileChange::modify("old")]),
                by("b", "3", 2, vec![FileChange::rename("old", "new")]),
            ],
        )
        .unwrap();
        let t = h.head_at();
        assert_eq!(
            compute_factors(&h, &dev("a"), "new", t).unwrap(),
            f(1, 1, 1)
        );
        assert_eq!(
            compute_factors(&h, &dev("b"), "new", t).unwrap(),
            f(0, 1, 2)
        );
    }

    #[test]
    fn main_author_gates() {
        let model = DoaModel::default();
        let (a, b, c) = (DevId::from("A"), DevId::from("B"), DevId::from("C"));
        let got = model.main_authors([(&a, 4.391)]).unwrap();
        assert_eq!(got, BTreeSet::from([a.clone()]));
        let got = model
            .main_authors([(&a, 6.0), (&b, 4.6), (&c, 3.0)])
            .unwrap();
        assert_eq!(got, BTreeSet::from([a.clone(), b.clone()]));
        let got = model.main_authors([(&a, 5.0), (&b, 5.0)]).unwrap();
        assert_eq!(got, BTreeSet::from([a.clone(), b.clone()]));
        assert!(model.main_authors(std::iter::empty()).is_err());
        // Below the absolute floor: dropped by default, relaxed otherwise.
        assert!(model.main_authors([(&a, 3.0)]).unwrap().is_empty());
        let relaxed = DoaModel {
            drop_unauthored: false,
            ..model
        };
        assert_eq!(
            relaxed.main_authors([(&a, 3.0), (&b, 2.0)]).unwrap(),
            BTreeSet::from([a])
        );
    }

    #[test]
    fn single_developer_owns_everything() {
        let h = RepositoryHistory::new(
            "r",
            vec![
                by(
                    "a",
                    "1",
                    0,
                    vec![FileChange::add("x"), FileChange::add("y")],
                ),
                by("a", "2", 1, vec![FileChange::modify("x")]),
            ],
        )
        .unwrap();
        let table =
            build_authorship_table(&h, h.head_at(), &PathRules::default(), &DoaModel::default())
                .unwrap();
        assert_eq!(table.file_count(), 2);
        assert!(table
            .main_authors
            .values()
            .all(|a| a == &BTreeSet::from([dev("a")])));
    }

    #[test]
    fn filtered_away_files_give_empty_table() {
        let h = RepositoryHistory::new(
            "r",
            vec![by("a", "1", 0, vec![FileChange::add("README.md")])],
        )
        .unwrap();
        let rules = PathRules::parse("include:*.rb").unwrap();
        let table = build_authorship_table(&h, h.head_at(), &rules, &DoaModel::default()).unwrap();
        assert_eq!(table.file_count(), 0);
    }

    #[test]
    fn modify_only_file_has_no_creator() {
        let h = RepositoryHistory::new("r", vec![by("a", "1", 0, vec![FileChange::modify("x")])])
            .unwrap();
        let t = h.head_at();
        assert_eq!(compute_factors(&h, &dev("a"), "x", t).unwrap(), f(0, 1, 0));
    }

    proptest! {
        #[test]
        fn doa_monotone(fa in 0u8..=1, dl in 0u64..500, ac in 0u64..500) {
            prop_assert!(compute_doa(f(fa, dl + 1, ac)) > compute_doa(f(fa, dl, ac)));
            prop_assert!(compute_doa(f(fa, dl, ac + 1)) < compute_doa(f(fa, dl, ac)));
        }

        #[test]
        fn maximizer_is_main_author(scores in prop::collection::vec(3.3f64..12.0, 1..6)) {
            let devs: Vec<DevId> = (0..scores.len()).map(|i| DevId(format!("d{i}"))).collect();
            let best = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            let got = DoaModel::default()
                .main_authors(devs.iter().zip(scores.iter().copied()))
                .unwrap();
            prop_assert!(got.contains(&devs[best]));
        }

        #[test]
        fn table_ignores_the_future(
            plan in prop::collection::vec((0usize..3, 0usize..4, 0u8..4), 1..40),
            cut in 0i64..40,
        ) {
            let commits: Vec<CommitRecord> = plan
                .iter()
                .enumerate()
                .map(|(i, &(d, file, op))| {
                    let path = format!("f{file}");
                    let change = match op {
                        0 => FileChange::add(&path),
                        1 | 2 => FileChange::modify(&path),
                        _ => FileChange::rename(&path, &format!("f{}", (file + 1) % 4)),
                    };
                    by(&format!("d{d}"), &format!("c{i:02}"), i as i64, vec![change])
                })
                .collect();
            let h = RepositoryHistory::new("r", commits).unwrap();
            let t = at(cut.min(plan.len() as i64 - 1));
            let model = DoaModel::default();
            let full = build_authorship_table(&h, t, &PathRules::default(), &model).unwrap();
            let cut_hist = h.truncated(t).unwrap();
            let trunc = build_authorship_table(&cut_hist, t, &PathRules::default(), &model).unwrap();
            prop_assert_eq!(full, trunc);
        }

        #[test]
        fn doubling_keeps_a_clear_sole_author(
            plan in prop::collection::vec((0usize..3, 0u8..3), 1..30),
        ) {
            // Single file; every change doubled keeps the argmax author.
            let build = |times: usize| {
                let mut commits = vec![by("d0", "c000", 0, vec![FileChange::add("f")])];
                let mut n = 1;
                for &(d, _) in &plan {
                    for _ in 0..times {
                        commits.push(by(&format!("d{d}"), &format!("c{n:03}"), n as i64, vec![FileChange::modify("f")]));
                        n += 1;
                    }
                }
                let h = RepositoryHistory::new("r", commits).unwrap();
                build_authorship_table(&h, h.head_at(), &PathRules::default(), &DoaModel::default()).unwrap()
            };
            let once = build(1);
            let twice = build(2);
            let authors = &once.main_authors["f"];
            if authors.len() == 1 {
                let sole = authors.iter().next().unwrap();
                let max_dev = twice.doa["f"].iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
                if max_dev == sole {
                    prop_assert!(twice.main_authors["f"].contains(sole));
                }
            }
        }
    }
}
