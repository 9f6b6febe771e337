//! Truck-factor analysis of version-control histories.
//!
//! The pipeline ingests commit histories, resolves developer aliases,
//! computes degree-of-authorship and truck factors in yearly snapshots,
//! detects truck-factor developer detachments (TFDDs) and classifies
//! whether projects recovered from them. Cohort statistics and threshold
//! sensitivity analysis sit on top.

pub mod authorship;
pub mod config;
pub mod corpus;
pub mod duration;
pub mod history;
pub mod identity;
pub mod lifecycle;
pub mod lookup;
pub mod report;
pub mod rules;
pub mod sensitivity;
pub mod stats;
pub mod truckfactor;

pub use authorship::{build_authorship_table, compute_doa, AuthorshipTable, DoaModel};
pub use config::Config;
pub use corpus::{run_corpus, CorpusReport};
pub use duration::Span;
pub use history::{CommitRecord, DevId, FileChange, RepositoryHistory};
pub use lifecycle::{build_timeline, AbandonmentPolicy, LifecycleTimeline};
pub use truckfactor::{compute_tf, TFSnapshot};
