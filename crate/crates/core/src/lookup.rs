//! Commit → hosting-account lookups over HTTP with an on-disk cache.
//!
//! The endpoint is `GET {base}/repos/{repo}/commits/{sha}`; the account is
//! read from `author.login`. Every definitive answer (including "no
//! account") is appended to a JSON-lines cache so reruns stay offline.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const API_URL_VAR: &str = "TF_API_URL";
pub const API_TOKEN_VAR: &str = "TF_API_TOKEN";

/// Resolves the account bound to a commit, or `None` when there is none or
/// it cannot be determined.
pub trait AccountLookup: Sync {
    fn lookup(&self, repo_locator: &str, commit_id: &str) -> Option<String>;
}

#[derive(Debug, Error)]
pub enum LookupError {
    #[error("cache {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cache {path} line {line}: {source}")]
    Corrupt {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("http client: {0}")]
    Http(#[from] reqwest::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    repo: String,
    commit: String,
    account: Option<String>,
}

type CacheKey = (String, String);

struct Cache {
    entries: HashMap<CacheKey, Option<String>>,
    file: Option<File>,
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_secs(2),
        }
    }
}

pub struct HttpAccountLookup {
    base_url: String,
    token: Option<String>,
    client: Client,
    retry: RetryPolicy,
    cache: Mutex<Cache>,
    cache_path: Option<PathBuf>,
}

#[derive(Deserialize)]
struct CommitResponse {
    author: Option<Account>,
}

#[derive(Deserialize)]
struct Account {
    login: String,
}

enum Attempt {
    Done(Option<String>),
    RateLimited,
    Failed(String),
}

impl HttpAccountLookup {
    pub fn new(
        base_url: impl Into<String>,
        token: Option<String>,
        cache_path: Option<&Path>,
    ) -> Result<Self, LookupError> {
        let entries = match cache_path {
            Some(p) if p.exists() => read_cache(p)?,
            _ => HashMap::new(),
        };
        let file = cache_path
            .map(|p| {
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|source| LookupError::Io {
                        path: p.display().to_string(),
                        source,
                    })
            })
            .transpose()?;
        let client = Client::builder()
            .user_agent(concat!("tf-lifeline/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(30))
            .build()?;
        Ok(HttpAccountLookup {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            client,
            retry: RetryPolicy::default(),
            cache: Mutex::new(Cache { entries, file }),
            cache_path: cache_path.map(Path::to_path_buf),
        })
    }

    /// Builds a client from `TF_API_URL` / `TF_API_TOKEN`; `None` when no
    /// endpoint is configured.
    pub fn from_env(cache_path: Option<&Path>) -> Result<Option<Self>, LookupError> {
        let Ok(url) = std::env::var(API_URL_VAR) else {
            return Ok(None);
        };
        let token = std::env::var(API_TOKEN_VAR).ok().filter(|t| !t.is_empty());
        Self::new(url, token, cache_path).map(Some)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn cached(&self, repo_locator: &str, commit_id: &str) -> Option<Option<String>> {
        let cache = self.cache.lock().expect("cache lock");
        cache
            .entries
            .get(&(repo_locator.to_string(), commit_id.to_string()))
            .cloned()
    }

    fn store(&self, repo: &str, commit: &str, account: Option<String>) {
        let mut cache = self.cache.lock().expect("cache lock");
        let key = (repo.to_string(), commit.to_string());
        if cache.entries.contains_key(&key) {
            return;
        }
        if let Some(file) = cache.file.as_mut() {
            let line = CacheLine {
                repo: repo.to_string(),
                commit: commit.to_string(),
                account: account.clone(),
            };
            let written = serde_json::to_string(&line)
                .map_err(std::io::Error::other)
                .and_then(|s| writeln!(file, "{s}"));
            if let Err(e) = written {
                warn!(
                    "cannot append to lookup cache {}: {e}",
                    self.cache_path
                        .as_deref()
                        .unwrap_or(Path::new("?"))
                        .display()
                );
            }
        }
        cache.entries.insert(key, account);
    }

    fn attempt(&self, url: &str) -> Attempt {
        let mut req = self.client.get(url).header("Accept", "application/json");
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Failed(e.to_string()),
        };
        let status = resp.status();
        let exhausted = resp
            .headers()
            .get("x-ratelimit-remaining")
            .and_then(|v| v.to_str().ok())
            == Some("0");
        match status {
            StatusCode::TOO_MANY_REQUESTS => Attempt::RateLimited,
            StatusCode::FORBIDDEN if exhausted => Attempt::RateLimited,
            StatusCode::NOT_FOUND | StatusCode::UNPROCESSABLE_ENTITY => Attempt::Done(None),
            s if s.is_success() => match resp.json::<CommitResponse>() {
                Ok(body) => Attempt::Done(body.author.map(|a| a.login)),
                Err(e) => Attempt::Failed(format!("bad response body: {e}")),
            },
            s => Attempt::Failed(format!("HTTP {s}")),
        }
    }
}

impl AccountLookup for HttpAccountLookup {
    fn lookup(&self, repo_locator: &str, commit_id: &str) -> Option<String> {
        if let Some(hit) = self.cached(repo_locator, commit_id) {
            return hit;
        }
        let url = format!(
            "{}/repos/{}/commits/{}",
            self.base_url, repo_locator, commit_id
        );
        for attempt in 0..self.retry.max_attempts {
            match self.attempt(&url) {
                Attempt::Done(account) => {
                    self.store(repo_locator, commit_id, account.clone());
                    return account;
                }
                Attempt::RateLimited => {
                    if attempt + 1 < self.retry.max_attempts {
                        thread::sleep(self.retry.base_delay * 2u32.pow(attempt));
                    }
                }
                Attempt::Failed(msg) => {
                    warn!("account lookup for {repo_locator}@{commit_id} failed: {msg}");
                    return None;
                }
            }
        }
        warn!(
            "account lookup for {repo_locator}@{commit_id} still rate-limited after {} attempts",
            self.retry.max_attempts
        );
        None
    }
}

fn read_cache(path: &Path) -> Result<HashMap<CacheKey, Option<String>>, LookupError> {
    let file = File::open(path).map_err(|source| LookupError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut entries = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LookupError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheLine =
            serde_json::from_str(&line).map_err(|source| LookupError::Corrupt {
                path: path.display().to_string(),
                line: i + 1,
                source,
            })?;
        entries.insert((rec.repo, rec.commit), rec.account);
    }
    Ok(entries)
}
