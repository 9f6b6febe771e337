//! Analysis configuration, read from a TOML file.
//!
//! ```toml
//! [doa]
//! base = 3.293
//! norm_threshold = 0.75
//!
//! [abandon]
//! threshold = "1y"
//! anchor = "head"          # or "snapshot"
//!
//! [snapshots]
//! cadence_months = 12
//!
//! [filters]
//! min_longevity = "2y"
//! migration_window = 19
//! migration_fraction = 0.5
//!
//! [sensitivity]
//! grid = ["3m", "6m", "1y", "1.5y", "2y"]
//!
//! [paths]
//! rules = "source-rules.txt"
//! mapping = "aliases.json"
//! lookup_cache = "lookup-cache.jsonl"
//!
//! [stats]
//! negligible = 0.147
//! small = 0.33
//! medium = 0.474
//! ```
//!
//! Every key is optional. Relative paths resolve against the directory of
//! the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authorship::DoaModel;
use crate::duration::Span;
use crate::history::{MIGRATION_FRACTION, MIGRATION_WINDOW};
use crate::identity::{AliasMapping, IdentityError};
use crate::lifecycle::{AbandonmentPolicy, SnapshotSettings};
use crate::rules::{PathRules, RuleError};
use crate::sensitivity::default_grid;
use crate::stats::CliffThresholds;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Mapping(#[from] IdentityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_longevity: Span,
    pub migration_window: usize,
    pub migration_fraction: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_longevity: Span::years(2.0),
            migration_window: MIGRATION_WINDOW,
            migration_fraction: MIGRATION_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub cadence_months: u32,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig { cadence_months: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub grid: Vec<Span>,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            grid: default_grid(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub rules: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub lookup_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub doa: DoaModel,
    pub abandon: AbandonmentPolicy,
    pub snapshots: SnapshotConfig,
    pub filters: FilterConfig,
    pub sensitivity: SensitivityConfig,
    pub paths: PathConfig,
    pub stats: CliffThresholds,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text)?;
        for p in [
            &mut config.paths.rules,
            &mut config.paths.mapping,
            &mut config.paths.lookup_cache,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !self.abandon.threshold.is_positive() {
            return invalid("abandon.threshold must be positive");
        }
        if self.snapshots.cadence_months == 0 {
            return invalid("snapshots.cadence_months must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.doa.norm_threshold) {
            return invalid("doa.norm_threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.filters.migration_fraction) {
            return invalid("filters.migration_fraction must lie in [0, 1]");
        }
        if self.sensitivity.grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("sensitivity.grid must be strictly ascending");
        }
        let s = &self.stats;
        if !(0.0 <= s.negligible && s.negligible <= s.small && s.small <= s.medium) {
            return invalid("stats cut points must be ascending");
        }
        Ok(())
    }

    pub fn path_rules(&self) -> Result<PathRules, ConfigError> {
        Ok(match &self.paths.rules {
            Some(p) => PathRules::load(p)?,
            None => PathRules::default(),
        })
    }

    pub fn alias_mapping(&self) -> Result<Option<AliasMapping>, ConfigError> {
        Ok(match &self.paths.mapping {
            Some(p) => Some(AliasMapping::load(p)?),
            None => None,
        })
    }

    pub fn snapshot_settings(&self) -> Result<SnapshotSettings, ConfigError> {
        Ok(SnapshotSettings {
            rules: self.path_rules()?,
            model: self.doa,
            cadence_months: self.snapshots.cadence_months,
        })
    }
}
