//! Commit-history ingestion, point-in-time file snapshots and the
//! dataset-quality filters.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::Command;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duration::Span;

pub type Instant = DateTime<Utc>;

#[derive(Debug, Error)]
pub enum HistoryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("history is empty")]
    Empty,
    #[error("duplicate commit id `{0}`")]
    DuplicateId(String),
    #[error("invalid path `{0}`")]
    InvalidPath(String),
    #[error("rename of `{0}` has no old path")]
    MissingOldPath(String),
    #[error("only renames carry an old path (`{0}`)")]
    UnexpectedOldPath(String),
    #[error("git: {0}")]
    Git(String),
    #[error("instant {as_of} precedes repository creation at {created_at}")]
    BeforeCreation { as_of: Instant, created_at: Instant },
}

/// Canonical developer identifier. Before alias resolution this is the
/// lower-cased author e-mail.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DevId(pub String);

impl DevId {
    pub fn new(id: impl Into<String>) -> Self {
        DevId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DevId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DevId {
    fn from(s: &str) -> Self {
        DevId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChangeKind {
    #[serde(rename = "A")]
    Add,
    #[serde(rename = "M")]
    Modify,
    #[serde(rename = "D")]
    Delete,
    #[serde(rename = "R")]
    Rename,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub kind: ChangeKind,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_path: Option<String>,
}

impl FileChange {
    pub fn new(
        kind: ChangeKind,
        path: impl Into<String>,
        old_path: Option<String>,
    ) -> Result<Self, HistoryError> {
        let path = path.into();
        validate_path(&path)?;
        match (kind, &old_path) {
            (ChangeKind::Rename, None) => return Err(HistoryError::MissingOldPath(path)),
            (ChangeKind::Rename, Some(old)) => validate_path(old)?,
            (_, Some(_)) => return Err(HistoryError::UnexpectedOldPath(path)),
            (_, None) => {}
        }
        Ok(FileChange {
            kind,
            path,
            old_path,
        })
    }

    pub fn add(path: &str) -> Self {
        Self::new(ChangeKind::Add, path, None).expect("valid path")
    }

    pub fn modify(path: &str) -> Self {
        Self::new(ChangeKind::Modify, path, None).expect("valid path")
    }

    pub fn delete(path: &str) -> Self {
        Self::new(ChangeKind::Delete, path, None).expect("valid path")
    }

    pub fn rename(from: &str, to: &str) -> Self {
        Self::new(ChangeKind::Rename, to, Some(from.to_string())).expect("valid path")
    }
}

fn validate_path(path: &str) -> Result<(), HistoryError> {
    let escapes = path.split('/').any(|c| c == "..");
    if path.is_empty() || path.starts_with('/') || escapes {
        return Err(HistoryError::InvalidPath(path.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    pub author_name: String,
    pub author_email: String,
    /// Canonical developer this commit is attributed to.
    pub dev_id: DevId,
    pub timestamp: Instant,
    pub changes: Vec<FileChange>,
    pub is_merge: bool,
}

impl CommitRecord {
    pub fn new(
        id: impl Into<String>,
        author_name: impl Into<String>,
        author_email: impl Into<String>,
        timestamp: Instant,
        changes: Vec<FileChange>,
    ) -> Self {
        let author_email = author_email.into();
        CommitRecord {
            id: id.into(),
            author_name: author_name.into(),
            dev_id: DevId(author_email.to_lowercase()),
            author_email,
            timestamp,
            changes,
            is_merge: false,
        }
    }
}

/// An immutable, time-ordered commit stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepositoryHistory {
    repo_id: String,
    commits: Vec<CommitRecord>,
}

impl RepositoryHistory {
    /// Sorts commits by (timestamp, id) and checks id uniqueness.
    pub fn new(
        repo_id: impl Into<String>,
        mut commits: Vec<CommitRecord>,
    ) -> Result<Self, HistoryError> {
        if commits.is_empty() {
            return Err(HistoryError::Empty);
        }
        let mut seen = HashSet::with_capacity(commits.len());
        for c in &commits {
            if !seen.insert(c.id.as_str()) {
                return Err(HistoryError::DuplicateId(c.id.clone()));
            }
        }
        commits.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        Ok(RepositoryHistory {
            repo_id: repo_id.into(),
            commits,
        })
    }

    pub fn repo_id(&self) -> &str {
        &self.repo_id
    }

    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }

    pub fn created_at(&self) -> Instant {
        self.commits[0].timestamp
    }

    pub fn head_at(&self) -> Instant {
        self.commits[self.commits.len() - 1].timestamp
    }

    /// Commits with timestamp ≤ `as_of`.
    pub fn prefix(&self, as_of: Instant) -> &[CommitRecord] {
        let end = self.commits.partition_point(|c| c.timestamp <= as_of);
        &self.commits[..end]
    }

    /// Copy of the history restricted to commits at or before `as_of`.
    pub fn truncated(&self, as_of: Instant) -> Result<Self, HistoryError> {
        Self::new(self.repo_id.clone(), self.prefix(as_of).to_vec())
    }

    pub(crate) fn with_commits(&self, commits: Vec<CommitRecord>) -> Self {
        RepositoryHistory {
            repo_id: self.repo_id.clone(),
            commits,
        }
    }

    pub fn developers(&self) -> BTreeSet<DevId> {
        self.commits.iter().map(|c| c.dev_id.clone()).collect()
    }

    pub fn first_commit_of(&self, dev: &DevId) -> Option<Instant> {
        self.commits
            .iter()
            .find(|c| &c.dev_id == dev)
            .map(|c| c.timestamp)
    }

    pub fn last_commit_of(&self, dev: &DevId) -> Option<Instant> {
        self.commits
            .iter()
            .rev()
            .find(|c| &c.dev_id == dev)
            .map(|c| c.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileSnapshot {
    pub as_of: Instant,
    pub live_files: BTreeSet<String>,
}

/// Replays every change with timestamp ≤ `as_of`.
///
/// A modify of an unknown path inserts it (histories imported from a
/// shallow clone may lack the original add); a rename whose source is not
/// live still creates its target.
pub fn snapshot_files(
    history: &RepositoryHistory,
    as_of: Instant,
) -> Result<FileSnapshot, HistoryError> {
    if as_of < history.created_at() {
        return Err(HistoryError::BeforeCreation {
            as_of,
            created_at: history.created_at(),
        });
    }
    let mut live = BTreeSet::new();
    for commit in history.prefix(as_of) {
        for change in &commit.changes {
            match change.kind {
                ChangeKind::Add | ChangeKind::Modify => {
                    live.insert(change.path.clone());
                }
                ChangeKind::Delete => {
                    live.remove(&change.path);
                }
                ChangeKind::Rename => {
                    if let Some(old) = &change.old_path {
                        live.remove(old);
                    }
                    live.insert(change.path.clone());
                }
            }
        }
    }
    Ok(FileSnapshot {
        as_of,
        live_files: live,
    })
}

/// Number of leading commits inspected by the corrupted-migration filter.
pub const MIGRATION_WINDOW: usize = 19;
/// Share of all added files above which a project is excluded.
pub const MIGRATION_FRACTION: f64 = 0.5;

/// True when the first `MIGRATION_WINDOW` commits (fewer if the history is
/// shorter) add strictly more than half of all files ever added, which
/// points at history lost in a migration.
pub fn filter_corrupted_migration(history: &RepositoryHistory) -> bool {
    filter_corrupted_migration_with(history, MIGRATION_WINDOW, MIGRATION_FRACTION)
}

pub fn filter_corrupted_migration_with(
    history: &RepositoryHistory,
    window: usize,
    fraction: f64,
) -> bool {
    let mut all = HashSet::new();
    let mut early = 0usize;
    for (i, commit) in history.commits().iter().enumerate() {
        for change in &commit.changes {
            if change.kind == ChangeKind::Add && all.insert(change.path.as_str()) && i < window {
                early += 1;
            }
        }
    }
    // Added-file counts grow with the prefix, so the longest prefix decides.
    !all.is_empty() && early as f64 > fraction * all.len() as f64
}

pub const MINIMUM_LONGEVITY_YEARS: f64 = 2.0;

/// True when the history spans strictly less than `minimum`.
pub fn filter_longevity(history: &RepositoryHistory, minimum: Span) -> bool {
    history.head_at() - history.created_at() < minimum.as_delta()
}

// ---------------------------------------------------------------------------
// Normalized log format

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    id: String,
    author_name: String,
    author_email: String,
    ts: String,
    #[serde(default)]
    merge: bool,
    #[serde(default)]
    changes: Vec<FileChange>,
}

#[derive(Serialize)]
struct LogLineOut<'a> {
    id: &'a str,
    author_name: &'a str,
    author_email: &'a str,
    ts: String,
    merge: bool,
    changes: &'a [FileChange],
}

pub fn parse_timestamp(raw: &str) -> Option<Instant> {
    let parsed = DateTime::parse_from_rfc3339(raw.trim()).ok()?;
    Utc.timestamp_opt(parsed.timestamp(), 0).single()
}

pub fn format_timestamp(ts: Instant) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses the JSON-lines commit log. Blank lines are skipped.
pub fn parse_log<R: BufRead>(reader: R, repo_id: &str) -> Result<RepositoryHistory, HistoryError> {
    let mut commits = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| HistoryError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| HistoryError::Malformed {
            line: line_no,
            message,
        };
        let raw: LogLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let timestamp = parse_timestamp(&raw.ts)
            .ok_or_else(|| malformed(format!("bad timestamp `{}`", raw.ts)))?;
        let mut changes = Vec::with_capacity(raw.changes.len());
        for c in raw.changes {
            changes.push(
                FileChange::new(c.kind, c.path, c.old_path)
                    .map_err(|e| malformed(e.to_string()))?,
            );
        }
        let mut commit = CommitRecord::new(
            raw.id,
            raw.author_name,
            raw.author_email,
            timestamp,
            changes,
        );
        commit.is_merge = raw.merge;
        commits.push(commit);
    }
    RepositoryHistory::new(repo_id, commits)
}

pub fn write_log<W: Write>(history: &RepositoryHistory, mut out: W) -> std::io::Result<()> {
    for c in history.commits() {
        let line = LogLineOut {
            id: &c.id,
            author_name: &c.author_name,
            author_email: &c.author_email,
            ts: format_timestamp(c.timestamp),
            merge: c.is_merge,
            changes: &c.changes,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads either a git working copy (directory) or a normalized log file.
pub fn ingest_repository(source: &Path, repo_id: &str) -> Result<RepositoryHistory, HistoryError> {
    if source.is_dir() {
        ingest_git(source, repo_id)
    } else {
        let file = File::open(source).map_err(|e| HistoryError::Io {
            path: source.display().to_string(),
            source: e,
        })?;
        parse_log(BufReader::new(file), repo_id)
    }
}

const RECORD_SEP: char = '\u{1e}';
const FIELD_SEP: char = '\u{1f}';

/// Runs `git log` with rename detection and converts it to commit records.
/// Merge commits report only the files that differ from every parent.
pub fn ingest_git(repo: &Path, repo_id: &str) -> Result<RepositoryHistory, HistoryError> {
    let output = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args([
            "-c",
            "core.quotepath=off",
            "log",
            "--no-color",
            "-M",
            "--cc",
            "--name-status",
            "--format=%x1e%H%x1f%an%x1f%ae%x1f%at%x1f%P",
        ])
        .output()
        .map_err(|e| HistoryError::Io {
            path: repo.display().to_string(),
            source: e,
        })?;
    if !output.status.success() {
        return Err(HistoryError::Git(
            String::from_utf8_lossy(&output.stderr).trim().to_string(),
        ));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    parse_git_log(&text, repo_id)
}

fn parse_git_log(text: &str, repo_id: &str) -> Result<RepositoryHistory, HistoryError> {
    let mut commits = Vec::new();
    for (n, record) in text.split(RECORD_SEP).skip(1).enumerate() {
        let git_err = |msg: &str| HistoryError::Malformed {
            line: n + 1,
            message: msg.to_string(),
        };
        let mut lines = record.lines();
        let header = lines.next().ok_or_else(|| git_err("missing header"))?;
        let fields: Vec<&str> = header.split(FIELD_SEP).collect();
        if fields.len() != 5 {
            return Err(git_err("unexpected header layout"));
        }
        let secs: i64 = fields[3].parse().map_err(|_| git_err("bad author time"))?;
        let timestamp = Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| git_err("author time out of range"))?;
        let is_merge = fields[4].split_whitespace().count() > 1;
        let mut changes = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split('\t').collect();
            let status = parts[0];
            let change = match (status.as_bytes().first(), parts.len()) {
                (Some(b'R'), 3) => FileChange::new(
                    ChangeKind::Rename,
                    unquote(parts[2]),
                    Some(unquote(parts[1])),
                ),
                (Some(b'C'), 3) => FileChange::new(ChangeKind::Add, unquote(parts[2]), None),
                (Some(_), 2) => {
                    let kind = if status.bytes().all(|b| b == b'A') {
                        ChangeKind::Add
                    } else if status.bytes().all(|b| b == b'D') {
                        ChangeKind::Delete
                    } else {
                        ChangeKind::Modify
                    };
                    FileChange::new(kind, unquote(parts[1]), None)
                }
                _ => return Err(git_err(&format!("unparsable status line `{line}`"))),
            };
            changes.push(change.map_err(|e| git_err(&e.to_string()))?);
        }
        let mut commit = CommitRecord::new(fields[0], fields[1], fields[2], timestamp, changes);
        commit.is_merge = is_merge;
        commits.push(commit);
    }
    RepositoryHistory::new(repo_id, commits)
}

fn unquote(raw: &str) -> String {
    let Some(inner) = raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')) else {
        return raw.to_string();
    };
    let mut bytes = Vec::with_capacity(inner.len());
    let mut chars = inner.bytes().peekable();
    while let Some(b) = chars.next() {
        if b != b'\\' {
            bytes.push(b);
            continue;
        }
        match chars.next() {
            Some(b'n') => bytes.push(b'\n'),
            Some(b't') => bytes.push(b'\t'),
            Some(d @ b'0'..=b'7') => {
                let mut v = (d - b'0') as u32;
                for _ in 0..2 {
                    if let Some(&n @ b'0'..=b'7') = chars.peek() {
                        v = v * 8 + (n - b'0') as u32;
                        chars.next();
                    }
                }
                bytes.push(v as u8);
            }
            Some(other) => bytes.push(other),
            None => {}
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}
