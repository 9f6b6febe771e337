//! Developer alias resolution.
//!
//! Every commit author e-mail is a raw identity. Identities are merged
//! when an explicit mapping file puts them under the same developer id, or
//! when the hosting platform binds their commits to the same account.
//! Everything else stays its own developer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::history::{DevId, RepositoryHistory};
use crate::lookup::AccountLookup;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("e-mail `{email}` is claimed by both `{first}` and `{second}`")]
    Conflict {
        email: String,
        first: String,
        second: String,
    },
    #[error("mapping file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read mapping file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("identity `{0}` resolved to more than one developer")]
    NotDisjoint(String),
}

/// A commit author as written in the log. Equality and ordering use the
/// lower-cased e-mail only.
#[derive(Debug, Clone, Serialize)]
pub struct RawIdentity {
    pub name: String,
    pub email: String,
}

impl RawIdentity {
    pub fn key(&self) -> String {
        self.email.to_lowercase()
    }
}

impl PartialEq for RawIdentity {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for RawIdentity {}

impl PartialOrd for RawIdentity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RawIdentity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum IdentitySource {
    MappingFile,
    RemoteLookup,
    Untouched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CanonicalDeveloper {
    pub dev_id: DevId,
    pub aliases: BTreeSet<RawIdentity>,
    pub source: IdentitySource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AliasReport {
    pub repo_id: String,
    pub raw_identities: usize,
    pub developers: usize,
    pub alias_percentage: f64,
}

/// Explicit e-mail → developer assignments, read from
/// `{ "<dev_id>": ["email1", "email2", ...] }`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMapping {
    by_email: BTreeMap<String, DevId>,
}

impl AliasMapping {
    pub fn parse(text: &str) -> Result<Self, IdentityError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut by_email: BTreeMap<String, DevId> = BTreeMap::new();
        for (dev, emails) in raw {
            for email in emails {
                let key = email.to_lowercase();
                if let Some(prev) = by_email.get(&key) {
                    if prev.as_str() != dev {
                        return Err(IdentityError::Conflict {
                            email,
                            first: prev.to_string(),
                            second: dev,
                        });
                    }
                }
                by_email.insert(key, DevId(dev.clone()));
            }
        }
        Ok(AliasMapping { by_email })
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        let text = std::fs::read_to_string(path).map_err(|source| IdentityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, email: &str) -> Option<&DevId> {
        self.by_email.get(&email.to_lowercase())
    }
}

/// Remote lookups for one repository.
pub struct RemoteContext<'a> {
    pub client: &'a dyn AccountLookup,
    pub repo_locator: &'a str,
}

#[derive(Debug, Clone)]
pub struct Resolution {
    pub history: RepositoryHistory,
    pub developers: Vec<CanonicalDeveloper>,
    pub report: AliasReport,
}

/// Assigns a canonical `dev_id` to every commit. A mapping-file entry wins
/// over a remote account, which wins over leaving the identity alone.
/// Remote lookups use each identity's earliest commit.
pub fn resolve_aliases(
    history: &RepositoryHistory,
    mapping: Option<&AliasMapping>,
    remote: Option<RemoteContext<'_>>,
) -> Result<Resolution, IdentityError> {
    // Earliest commit and first-seen spelling per identity.
    let mut identities: BTreeMap<String, (RawIdentity, &str)> = BTreeMap::new();
    for c in history.commits() {
        identities
            .entry(c.author_email.to_lowercase())
            .or_insert_with(|| {
                (
                    RawIdentity {
                        name: c.author_name.clone(),
                        email: c.author_email.clone(),
                    },
                    c.id.as_str(),
                )
            });
    }

    let mut assigned: BTreeMap<String, (DevId, IdentitySource)> = BTreeMap::new();
    for (key, (_, first_commit)) in &identities {
        let resolved = if let Some(dev) = mapping.and_then(|m| m.get(key)) {
            (dev.clone(), IdentitySource::MappingFile)
        } else if let Some(account) = remote
            .as_ref()
            .and_then(|r| r.client.lookup(r.repo_locator, first_commit))
        {
            (DevId(account), IdentitySource::RemoteLookup)
        } else {
            (DevId(key.clone()), IdentitySource::Untouched)
        };
        assigned.insert(key.clone(), resolved);
    }

    let mut grouped: BTreeMap<DevId, CanonicalDeveloper> = BTreeMap::new();
    for (key, (dev, source)) in &assigned {
        let entry = grouped
            .entry(dev.clone())
            .or_insert_with(|| CanonicalDeveloper {
                dev_id: dev.clone(),
                aliases: BTreeSet::new(),
                source: *source,
            });
        entry.source = entry.source.min(*source);
        entry.aliases.insert(identities[key].0.clone());
    }
    let developers: Vec<CanonicalDeveloper> = grouped.into_values().collect();
    check_disjoint(&developers)?;

    let commits = history
        .commits()
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.dev_id = assigned[&c.author_email.to_lowercase()].0.clone();
            c
        })
        .collect();
    let raw = identities.len();
    let report = AliasReport {
        repo_id: history.repo_id().to_string(),
        raw_identities: raw,
        developers: developers.len(),
        alias_percentage: if raw == 0 {
            0.0
        } else {
            1.0 - developers.len() as f64 / raw as f64
        },
    };
    Ok(Resolution {
        history: history.with_commits(commits),
        developers,
        report,
    })
}

fn check_disjoint(developers: &[CanonicalDeveloper]) -> Result<(), IdentityError> {
    let mut seen = BTreeSet::new();
    for d in developers {
        for alias in &d.aliases {
            if !seen.insert(alias.key()) {
                return Err(IdentityError::NotDisjoint(alias.email.clone()));
            }
        }
    }
    Ok(())
}
