use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::net::{is_transient_status, RateLimiter};

/// Answer to an existence probe. Transient statuses surface as
/// `Error::Retryable` instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub status: u16,
    /// `owner/repo` the hosting service redirected to, if any.
    pub moved_to: Option<String>,
}

/// Repository-level metadata as reported by the hosting service.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepoPayload {
    pub default_branch: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
    pub updated_at: Option<DateTime<Utc>>,
    pub pushed_at: Option<DateTime<Utc>>,
    pub subscribers: u64,
    pub forks: u64,
    pub open_issues: u64,
    pub license: Option<String>,
}

impl RepoPayload {
    /// Reads the subset of a REST repository object this tool keeps.
    pub fn from_json(v: &Value) -> Self {
        let date = |k: &str| {
            v.get(k)
                .and_then(Value::as_str)
                .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
                .map(|d| d.with_timezone(&Utc))
        };
        let count = |k: &str| v.get(k).and_then(Value::as_u64).unwrap_or(0);
        let license = v.get("license").and_then(|l| {
            l.get("spdx_id")
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty() && *s != "NOASSERTION")
                .or_else(|| l.get("name").and_then(Value::as_str))
                .map(str::to_string)
        });
        Self {
            default_branch: v.get("default_branch").and_then(Value::as_str).map(str::to_string),
            created_at: date("created_at"),
            updated_at: date("updated_at"),
            pushed_at: date("pushed_at"),
            subscribers: count("subscribers_count"),
            forks: count("forks_count"),
            open_issues: count("open_issues_count"),
            license,
        }
    }
}

/// Read access to a code-hosting service.
pub trait HostingApi: Send + Sync {
    fn probe(&self, owner: &str, repo: &str) -> Result<Probe>;
    fn repository(&self, owner: &str, repo: &str) -> Result<RepoPayload>;
    fn languages(&self, owner: &str, repo: &str) -> Result<BTreeMap<String, u64>>;
    fn release_count(&self, owner: &str, repo: &str) -> Result<u64>;
    /// Number of default-branch commits strictly after the given day.
    fn commits_after(&self, owner: &str, repo: &str, day: NaiveDate) -> Result<u64>;
}

/// REST client for the GitHub API.
pub struct HttpHostingApi {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpHostingApi {
    pub fn new(base_url: impl Into<String>, token: Option<String>, delay: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent: ureq::AgentBuilder::new()
                .redirects(0)
                .timeout(Duration::from_secs(60))
                .build(),
            limiter: RateLimiter::new(delay),
        }
    }

    fn call(&self, path: &str, query: &[(&str, String)]) -> Result<ureq::Response> {
        self.limiter.wait();
        let mut req = self
            .agent
            .get(&format!("{}{path}", self.base_url))
            .set("Accept", "application/vnd.github+json")
            .set("User-Agent", "nbrepro");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        for (k, v) in query {
            req = req.query(k, v);
        }
        match req.call() {
            Ok(r) => Ok(r),
            Err(ureq::Error::Status(code, r)) if is_transient_status(code) || rate_limited(code, &r) => {
                Err(Error::Retryable {
                    attempts: 1,
                    message: format!("{path}: HTTP {code}"),
                })
            }
            Err(ureq::Error::Status(_, r)) => Ok(r),
            Err(ureq::Error::Transport(t)) => Err(Error::Retryable {
                attempts: 1,
                message: format!("{path}: {t}"),
            }),
        }
    }

    fn json(&self, path: &str, query: &[(&str, String)]) -> Result<Value> {
        let resp = self.call(path, query)?;
        let status = resp.status();
        let body = resp.into_string()?;
        if status != 200 {
            return Err(Error::MalformedResponse {
                message: format!("{path}: HTTP {status}"),
                raw: body,
            });
        }
        serde_json::from_str(&body).map_err(|e| Error::MalformedResponse {
            message: e.to_string(),
            raw: body,
        })
    }

    fn count_pages(&self, path: &str, mut query: Vec<(&str, String)>) -> Result<u64> {
        let mut total = 0;
        query.push(("per_page", "100".into()));
        for page in 1.. {
            let mut q = query.clone();
            q.push(("page", page.to_string()));
            let items = self.json(path, &q)?;
            let n = items.as_array().map(Vec::len).unwrap_or(0) as u64;
            total += n;
            if n < 100 {
                break;
            }
        }
        Ok(total)
    }
}

fn rate_limited(code: u16, resp: &ureq::Response) -> bool {
    code == 403 && resp.header("x-ratelimit-remaining") == Some("0")
}

impl HostingApi for HttpHostingApi {
    fn probe(&self, owner: &str, repo: &str) -> Result<Probe> {
        let resp = self.call(&format!("/repos/{owner}/{repo}"), &[])?;
        let status = resp.status();
        let moved_to = if (300..400).contains(&status) {
            resp.header("location").and_then(|l| {
                let tail = l.split("/repos/").nth(1)?;
                Some(tail.trim_end_matches('/').to_string())
            })
        } else {
            None
        };
        Ok(Probe { status, moved_to })
    }

    fn repository(&self, owner: &str, repo: &str) -> Result<RepoPayload> {
        Ok(RepoPayload::from_json(
            &self.json(&format!("/repos/{owner}/{repo}"), &[])?,
        ))
    }

    fn languages(&self, owner: &str, repo: &str) -> Result<BTreeMap<String, u64>> {
        let v = self.json(&format!("/repos/{owner}/{repo}/languages"), &[])?;
        Ok(parse_languages(&v))
    }

    fn release_count(&self, owner: &str, repo: &str) -> Result<u64> {
        self.count_pages(&format!("/repos/{owner}/{repo}/releases"), Vec::new())
    }

    fn commits_after(&self, owner: &str, repo: &str, day: NaiveDate) -> Result<u64> {
        let since = day.succ_opt().unwrap_or(day).format("%Y-%m-%dT00:00:00Z").to_string();
        self.count_pages(&format!("/repos/{owner}/{repo}/commits"), vec![("since", since)])
    }
}

fn parse_languages(v: &Value) -> BTreeMap<String, u64> {
    v.as_object()
        .map(|o| o.iter().filter_map(|(k, n)| Some((k.clone(), n.as_u64()?))).collect())
        .unwrap_or_default()
}

/// Offline hosting service backed by `<root>/<owner>/<repo>/meta.json`.
///
/// A missing directory answers 404. `status` may be a single code or a list
/// consumed one probe at a time (the last entry repeats), which lets a
/// fixture script "429 then 200". The repository files live in `tree/`.
pub struct DirectoryHostingApi {
    root: PathBuf,
    probes: Mutex<HashMap<String, usize>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default)]
pub struct FixtureMeta {
    pub status: StatusScript,
    pub redirect: Option<String>,
    pub repo: Value,
    pub languages: Value,
    pub releases: u64,
    /// Commit days on the default branch.
    pub commits: Vec<NaiveDate>,
    /// Number of metadata requests that fail before one succeeds.
    pub metadata_failures: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StatusScript {
    One(u16),
    Sequence(Vec<u16>),
}

impl Default for StatusScript {
    fn default() -> Self {
        StatusScript::One(200)
    }
}

impl StatusScript {
    fn at(&self, i: usize) -> u16 {
        match self {
            StatusScript::One(s) => *s,
            StatusScript::Sequence(v) => v.get(i).or(v.last()).copied().unwrap_or(200),
        }
    }
}

impl DirectoryHostingApi {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            probes: Mutex::new(HashMap::new()),
        }
    }

    pub fn repo_dir(&self, owner: &str, repo: &str) -> PathBuf {
        self.root.join(owner).join(repo)
    }

    fn meta(&self, owner: &str, repo: &str) -> Result<Option<FixtureMeta>> {
        let path = self.repo_dir(owner, repo).join("meta.json");
        if !path.is_file() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
    }

    fn found(&self, owner: &str, repo: &str) -> Result<FixtureMeta> {
        let meta = self.meta(owner, repo)?.ok_or_else(|| Error::MalformedResponse {
            message: format!("/repos/{owner}/{repo}: HTTP 404"),
            raw: String::new(),
        })?;
        if meta.metadata_failures > 0 {
            let key = format!("meta:{owner}/{repo}");
            let mut calls = self.probes.lock().unwrap_or_else(|e| e.into_inner());
            let n = calls.entry(key).or_insert(0);
            *n += 1;
            if *n <= meta.metadata_failures as usize {
                return Err(Error::Retryable {
                    attempts: 1,
                    message: format!("/repos/{owner}/{repo}: HTTP 403 rate limited"),
                });
            }
        }
        Ok(meta)
    }
}

impl HostingApi for DirectoryHostingApi {
    fn probe(&self, owner: &str, repo: &str) -> Result<Probe> {
        let Some(meta) = self.meta(owner, repo)? else {
            return Ok(Probe {
                status: 404,
                moved_to: None,
            });
        };
        let i = {
            let mut probes = self.probes.lock().unwrap_or_else(|e| e.into_inner());
            let n = probes.entry(format!("{owner}/{repo}")).or_insert(0);
            *n += 1;
            *n - 1
        };
        let status = meta.status.at(i);
        if is_transient_status(status) {
            return Err(Error::Retryable {
                attempts: 1,
                message: format!("/repos/{owner}/{repo}: HTTP {status}"),
            });
        }
        Ok(Probe {
            status,
            moved_to: meta.redirect,
        })
    }

    fn repository(&self, owner: &str, repo: &str) -> Result<RepoPayload> {
        Ok(RepoPayload::from_json(&self.found(owner, repo)?.repo))
    }

    fn languages(&self, owner: &str, repo: &str) -> Result<BTreeMap<String, u64>> {
        Ok(parse_languages(&self.found(owner, repo)?.languages))
    }

    fn release_count(&self, owner: &str, repo: &str) -> Result<u64> {
        Ok(self.found(owner, repo)?.releases)
    }

    fn commits_after(&self, owner: &str, repo: &str, day: NaiveDate) -> Result<u64> {
        Ok(self.found(owner, repo)?.commits.iter().filter(|d| **d > day).count() as u64)
    }
}

/// Where a directory-backed repository keeps its files.
pub fn fixture_tree(root: &Path, owner: &str, repo: &str) -> PathBuf {
    root.join(owner).join(repo).join("tree")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn payload_fields_are_read() {
        let p = RepoPayload::from_json(&json!({
            "default_branch": "main",
            "created_at": "2019-05-01T10:00:00Z",
            "subscribers_count": 4,
            "forks_count": 2,
            "open_issues_count": 1,
            "license": {"spdx_id": "MIT", "name": "MIT License"}
        }));
        assert_eq!(p.default_branch.as_deref(), Some("main"));
        assert_eq!(p.created_at.unwrap().to_rfc3339(), "2019-05-01T10:00:00+00:00");
        assert_eq!((p.subscribers, p.forks, p.open_issues), (4, 2, 1));
        assert_eq!(p.license.as_deref(), Some("MIT"));
        assert!(p.pushed_at.is_none());
    }

    #[test]
    fn directory_api_scripts_statuses() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("u/r");
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(
            d.join("meta.json"),
            r#"{"status": [429, 200], "commits": ["2020-01-01", "2020-06-01", "2021-01-01"]}"#,
        )
        .unwrap();
        let api = DirectoryHostingApi::new(dir.path());
        assert!(matches!(api.probe("u", "r"), Err(Error::Retryable { .. })));
        assert_eq!(api.probe("u", "r").unwrap().status, 200);
        assert_eq!(api.probe("u", "r").unwrap().status, 200);
        assert_eq!(api.probe("u", "missing").unwrap().status, 404);
        let day = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
        assert_eq!(api.commits_after("u", "r", day).unwrap(), 1);
    }
}
