//! Include/exclude glob rules restricting analysis to source files.

use std::path::Path;

use globset::{Glob, GlobSet, GlobSetBuilder};
use thiserror::Error;

use crate::history::FileSnapshot;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("line {line}: expected `include:<glob>` or `exclude:<glob>`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: bad pattern `{pattern}`: {source}")]
    Pattern {
        line: usize,
        pattern: String,
        #[source]
        source: globset::Error,
    },
    #[error("cannot read rules file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    Include(String),
    Exclude(String),
}

/// A file is selected when it matches at least one include pattern (or no
/// include patterns exist) and matches no exclude pattern.
#[derive(Debug, Clone)]
pub struct PathRules {
    rules: Vec<Rule>,
    include: GlobSet,
    exclude: GlobSet,
    has_include: bool,
}

impl Default for PathRules {
    fn default() -> Self {
        PathRules::new(Vec::new()).expect("empty rule set")
    }
}

impl PathRules {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RuleError> {
        let mut include = GlobSetBuilder::new();
        let mut exclude = GlobSetBuilder::new();
        let mut has_include = false;
        for (i, rule) in rules.iter().enumerate() {
            let (builder, pattern) = match rule {
                Rule::Include(p) => {
                    has_include = true;
                    (&mut include, p)
                }
                Rule::Exclude(p) => (&mut exclude, p),
            };
            let glob = Glob::new(pattern).map_err(|source| RuleError::Pattern {
                line: i + 1,
                pattern: pattern.clone(),
                source,
            })?;
            builder.add(glob);
        }
        let build = |b: GlobSetBuilder| b.build().expect("globs validated individually");
        Ok(PathRules {
            rules,
            include: build(include),
            exclude: build(exclude),
            has_include,
        })
    }

    /// Parses `include:<glob>` / `exclude:<glob>` lines; blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rule = if let Some(p) = line.strip_prefix("include:") {
                Rule::Include(p.trim().to_string())
            } else if let Some(p) = line.strip_prefix("exclude:") {
                Rule::Exclude(p.trim().to_string())
            } else {
                return Err(RuleError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            // Validate here to keep the original line number in the error.
            let pattern = match &rule {
                Rule::Include(p) | Rule::Exclude(p) => p,
            };
            Glob::new(pattern).map_err(|source| RuleError::Pattern {
                line: i + 1,
                pattern: pattern.clone(),
                source,
            })?;
            rules.push(rule);
        }
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self, RuleError> {
        let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn matches(&self, path: &str) -> bool {
        (!self.has_include || self.include.is_match(path)) && !self.exclude.is_match(path)
    }
}

impl PartialEq for PathRules {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules
    }
}

pub fn select_source_files(snapshot: &FileSnapshot, rules: &PathRules) -> FileSnapshot {
    if rules.is_empty() {
        return snapshot.clone();
    }
    FileSnapshot {
        as_of: snapshot.as_of,
        live_files: snapshot
            .live_files
            .iter()
            .filter(|p| rules.matches(p))
            .cloned()
            .collect(),
    }
}
