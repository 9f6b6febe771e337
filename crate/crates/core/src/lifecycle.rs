//! Yearly truck-factor snapshots, developer detachment (TFDD) events and
//! project survival.
//!
//! A project is `Active` while at least one truck-factor developer is
//! active and becomes `Inactive` when all of them have abandoned it. It
//! moves back to `Active` when a later snapshot contains a truck-factor
//! developer who is not an abandoner. A project survived when that
//! happens after its last TFDD.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Months;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authorship::{build_authorship_table, AuthorshipError, AuthorshipTable, DoaModel};
use crate::duration::{Span, DAYS_PER_YEAR, SECONDS_PER_DAY};
use crate::history::{DevId, Instant, RepositoryHistory};
use crate::rules::PathRules;
use crate::truckfactor::{compute_tf, TFSnapshot};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LifecycleError {
    #[error("developer `{0}` has no commits in this history")]
    UnknownDeveloper(DevId),
    #[error("survival is only defined for projects with at least one TFDD")]
    NoEvents,
    #[error("abandonment threshold must be positive")]
    NonPositiveThreshold,
}

/// Reference instant against which inactivity is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbandonAnchor {
    /// The most recent commit of the repository.
    #[default]
    Head,
    /// The snapshot being evaluated.
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbandonmentPolicy {
    pub threshold: Span,
    pub anchor: AbandonAnchor,
}

impl Default for AbandonmentPolicy {
    fn default() -> Self {
        AbandonmentPolicy {
            threshold: Span::years(1.0),
            anchor: AbandonAnchor::Head,
        }
    }
}

impl AbandonmentPolicy {
    pub fn new(threshold: Span) -> Result<Self, LifecycleError> {
        if !threshold.is_positive() {
            return Err(LifecycleError::NonPositiveThreshold);
        }
        Ok(AbandonmentPolicy {
            threshold,
            ..Self::default()
        })
    }

    fn reference(&self, history: &RepositoryHistory, at: Instant) -> Instant {
        match self.anchor {
            AbandonAnchor::Head => history.head_at(),
            AbandonAnchor::Snapshot => at,
        }
    }
}

/// Whether `dev` stopped committing at least `threshold` before the
/// repository head.
pub fn is_abandoner(
    dev: &DevId,
    history: &RepositoryHistory,
    policy: &AbandonmentPolicy,
) -> Result<bool, LifecycleError> {
    abandoned_as_of(dev, history, policy, history.head_at())
}

fn abandoned_as_of(
    dev: &DevId,
    history: &RepositoryHistory,
    policy: &AbandonmentPolicy,
    at: Instant,
) -> Result<bool, LifecycleError> {
    let last = history
        .last_commit_of(dev)
        .ok_or_else(|| LifecycleError::UnknownDeveloper(dev.clone()))?;
    Ok(policy.reference(history, at) - last >= policy.threshold.as_delta())
}

/// Per-developer first and last commit, computed once per history.
struct Activity<'a> {
    history: &'a RepositoryHistory,
    policy: &'a AbandonmentPolicy,
    last: BTreeMap<&'a DevId, Instant>,
}

impl<'a> Activity<'a> {
    fn new(history: &'a RepositoryHistory, policy: &'a AbandonmentPolicy) -> Self {
        let mut last = BTreeMap::new();
        for c in history.commits() {
            last.insert(&c.dev_id, c.timestamp);
        }
        Activity {
            history,
            policy,
            last,
        }
    }

    fn last(&self, dev: &DevId) -> Instant {
        self.last[dev]
    }

    fn abandoner(&self, dev: &DevId, at: Instant) -> bool {
        self.policy.reference(self.history, at) - self.last(dev) >= self.policy.threshold.as_delta()
    }

    /// Left before `at` and counts as an abandoner.
    fn detached(&self, dev: &DevId, at: Instant) -> bool {
        self.last(dev) < at && self.abandoner(dev, at)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlySnapshot {
    pub as_of: Instant,
    /// `None` when no file had a main author at this instant.
    pub tf: Option<TFSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSettings {
    pub rules: PathRules,
    pub model: DoaModel,
    pub cadence_months: u32,
}

impl Default for SnapshotSettings {
    fn default() -> Self {
        SnapshotSettings {
            rules: PathRules::default(),
            model: DoaModel::default(),
            cadence_months: 12,
        }
    }
}

pub fn tf_at(
    history: &RepositoryHistory,
    as_of: Instant,
    settings: &SnapshotSettings,
) -> Result<(AuthorshipTable, Option<TFSnapshot>), AuthorshipError> {
    let table = build_authorship_table(history, as_of, &settings.rules, &settings.model)?;
    let tf = compute_tf(&table).ok();
    Ok((table, tf))
}

/// Snapshot instants `created_at + k·cadence` for k = 1, 2, … up to the head.
pub fn snapshot_instants(history: &RepositoryHistory, cadence_months: u32) -> Vec<Instant> {
    let mut out = Vec::new();
    let cadence = cadence_months.max(1);
    for k in 1u32.. {
        let Some(t) = history
            .created_at()
            .checked_add_months(Months::new(cadence * k))
        else {
            break;
        };
        if t > history.head_at() {
            break;
        }
        out.push(t);
    }
    out
}

pub fn yearly_snapshots(
    history: &RepositoryHistory,
    settings: &SnapshotSettings,
) -> Result<Vec<YearlySnapshot>, AuthorshipError> {
    snapshot_instants(history, settings.cadence_months)
        .into_iter()
        .map(|as_of| {
            let (_, tf) = tf_at(history, as_of, settings)?;
            Ok(YearlySnapshot { as_of, tf })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TFDDEvent {
    pub detected_at: Instant,
    pub occurred_at: Instant,
    pub detached: BTreeSet<DevId>,
    pub tf_at_event: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProjectState {
    Active,
    Inactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Contributor {
    Newcomer,
    OldContributor,
}

/// Output of one pass of the Active/Inactive state machine.
struct Walk {
    states: Vec<ProjectState>,
    events: Vec<TFDDEvent>,
}

fn walk(snapshots: &[YearlySnapshot], activity: &Activity<'_>) -> Walk {
    let mut state = ProjectState::Active;
    let mut states = Vec::with_capacity(snapshots.len());
    let mut events: Vec<TFDDEvent> = Vec::new();
    for snap in snapshots {
        if let Some(tf) = &snap.tf {
            let t = snap.as_of;
            match state {
                ProjectState::Active => {
                    if tf.tf_developers.iter().all(|d| activity.detached(d, t)) {
                        let occurred_at = tf
                            .tf_developers
                            .iter()
                            .map(|d| activity.last(d))
                            .max()
                            .expect("tf ≥ 1");
                        events.push(TFDDEvent {
                            detected_at: t,
                            occurred_at,
                            detached: tf.tf_developers.clone(),
                            tf_at_event: tf.tf,
                        });
                        state = ProjectState::Inactive;
                    }
                }
                ProjectState::Inactive => {
                    let last = events.last().expect("inactive implies an event");
                    if !recruits(tf, last, activity, t).is_empty() {
                        state = ProjectState::Active;
                    }
                }
            }
        }
        states.push(state);
    }
    Walk { states, events }
}

/// Truck-factor developers at `t` who are outside the event's detached set
/// and are not abandoners.
fn recruits(
    tf: &TFSnapshot,
    event: &TFDDEvent,
    activity: &Activity<'_>,
    t: Instant,
) -> BTreeSet<DevId> {
    tf.tf_developers
        .iter()
        .filter(|d| !event.detached.contains(*d) && !activity.abandoner(d, t))
        .cloned()
        .collect()
}

/// TFDD events in detection order. A snapshot whose truck-factor
/// developers have all left opens an event only while the project is
/// Active; further detached snapshots before a recovery belong to the same
/// episode.
pub fn detect_tfdd(
    snapshots: &[YearlySnapshot],
    history: &RepositoryHistory,
    policy: &AbandonmentPolicy,
) -> Vec<TFDDEvent> {
    walk(snapshots, &Activity::new(history, policy)).events
}

pub fn project_states(
    snapshots: &[YearlySnapshot],
    history: &RepositoryHistory,
    policy: &AbandonmentPolicy,
) -> Vec<ProjectState> {
    walk(snapshots, &Activity::new(history, policy)).states
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Survival {
    pub survived: bool,
    pub new_tf_developers: BTreeSet<DevId>,
    pub newcomer_split: BTreeMap<DevId, Contributor>,
    /// Snapshot at which the new truck-factor developers were found.
    pub recovered_at: Option<Instant>,
}

pub fn classify_survival(
    snapshots: &[YearlySnapshot],
    events: &[TFDDEvent],
    history: &RepositoryHistory,
    policy: &AbandonmentPolicy,
) -> Result<Survival, LifecycleError> {
    let last = events.last().ok_or(LifecycleError::NoEvents)?;
    let activity = Activity::new(history, policy);
    let found = snapshots
        .iter()
        .filter(|s| s.as_of > last.detected_at)
        .find_map(|s| {
            let tf = s.tf.as_ref()?;
            let devs = recruits(tf, last, &activity, s.as_of);
            (!devs.is_empty()).then_some((s.as_of, devs))
        });
    let Some((recovered_at, new_tf_developers)) = found else {
        return Ok(Survival {
            survived: false,
            new_tf_developers: BTreeSet::new(),
            newcomer_split: BTreeMap::new(),
            recovered_at: None,
        });
    };
    let newcomer_split = new_tf_developers
        .iter()
        .map(|d| {
            let first = history
                .first_commit_of(d)
                .expect("tf developer has commits");
            let kind = if first > last.occurred_at {
                Contributor::Newcomer
            } else {
                Contributor::OldContributor
            };
            (d.clone(), kind)
        })
        .collect();
    Ok(Survival {
        survived: true,
        new_tf_developers,
        newcomer_split,
        recovered_at: Some(recovered_at),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostTFDDMetrics {
    pub commits_after: usize,
    pub pct_commits_after: f64,
    pub new_tf_file_share: f64,
}

pub fn post_tfdd_metrics(
    history: &RepositoryHistory,
    last_event: &TFDDEvent,
    new_tf_developers: &BTreeSet<DevId>,
    head_table: &AuthorshipTable,
) -> PostTFDDMetrics {
    let total = history.commits().len();
    let commits_after = total - history.prefix(last_event.occurred_at).len();
    let files = head_table.file_count();
    let owned = head_table
        .main_authors
        .values()
        .filter(|authors| authors.iter().any(|a| new_tf_developers.contains(a)))
        .count();
    PostTFDDMetrics {
        commits_after,
        pct_commits_after: commits_after as f64 / total as f64,
        new_tf_file_share: if files == 0 {
            0.0
        } else {
            owned as f64 / files as f64
        },
    }
}

/// Whole-year bucket (1 = within the first year) between a TFDD and the
/// snapshot that found new truck-factor developers.
pub fn attraction_year(occurred_at: Instant, recovered_at: Instant) -> u32 {
    let secs = (recovered_at - occurred_at).num_seconds().max(0) as f64;
    (secs / (DAYS_PER_YEAR * SECONDS_PER_DAY)).floor() as u32 + 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifecycleTimeline {
    pub repo_id: String,
    pub snapshots: Vec<YearlySnapshot>,
    pub states: Vec<ProjectState>,
    pub events: Vec<TFDDEvent>,
    pub survived: bool,
    pub new_tf_developers: BTreeSet<DevId>,
    pub newcomer_split: BTreeMap<DevId, Contributor>,
    pub recovered_at: Option<Instant>,
    pub attraction_year: Option<u32>,
    /// Truck factor at the repository head.
    pub head: Option<TFSnapshot>,
    pub post_tfdd: Option<PostTFDDMetrics>,
}

pub fn build_timeline(
    history: &RepositoryHistory,
    settings: &SnapshotSettings,
    policy: &AbandonmentPolicy,
) -> Result<LifecycleTimeline, AuthorshipError> {
    let snapshots = yearly_snapshots(history, settings)?;
    let activity = Activity::new(history, policy);
    let Walk { states, events } = walk(&snapshots, &activity);
    let (head_table, head) = tf_at(history, history.head_at(), settings)?;

    let mut timeline = LifecycleTimeline {
        repo_id: history.repo_id().to_string(),
        snapshots,
        states,
        events,
        survived: false,
        new_tf_developers: BTreeSet::new(),
        newcomer_split: BTreeMap::new(),
        recovered_at: None,
        attraction_year: None,
        head,
        post_tfdd: None,
    };
    if let Some(last) = timeline.events.last() {
        let survival = classify_survival(&timeline.snapshots, &timeline.events, history, policy)
            .expect("events present");
        timeline.post_tfdd = Some(post_tfdd_metrics(
            history,
            last,
            &survival.new_tf_developers,
            &head_table,
        ));
        timeline.attraction_year = survival
            .recovered_at
            .map(|r| attraction_year(last.occurred_at, r));
        timeline.survived = survival.survived;
        timeline.new_tf_developers = survival.new_tf_developers;
        timeline.newcomer_split = survival.newcomer_split;
        timeline.recovered_at = survival.recovered_at;
    }
    Ok(timeline)
}
