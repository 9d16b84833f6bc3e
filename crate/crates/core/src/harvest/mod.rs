//! Resolving repository links to accessible clones plus hosting metadata.

pub mod hosting;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

pub use hosting::{DirectoryHostingApi, HostingApi, HttpHostingApi, Probe, RepoPayload};

use crate::error::{Error, Result};
use crate::jats::NormalizedRepoUrl;
use crate::net::{with_retries, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Accessibility {
    Accessible {
        moved_to: Option<String>,
    },
    Gone {
        status: u16,
    },
    /// Transient failures outlasted the retry budget.
    Unknown {
        reason: String,
    },
}

impl Accessibility {
    pub fn is_accessible(&self) -> bool {
        matches!(self, Accessibility::Accessible { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryRecord {
    pub url: NormalizedRepoUrl,
    pub accessibility: Accessibility,
    pub clone_path: Option<PathBuf>,
    pub default_branch: Option<String>,
    pub created_at: Option<DateTime<Utc>>,
    pub updated_at: Option<DateTime<Utc>>,
    pub pushed_at: Option<DateTime<Utc>>,
    pub languages: BTreeMap<String, u64>,
    pub subscribers: u64,
    pub forks: u64,
    pub open_issues: u64,
    pub releases: u64,
    pub license: Option<String>,
    /// Keyed by article date kind: `received`, `accepted`, `published`.
    pub commits_after: BTreeMap<String, u64>,
    pub article_ids: Vec<String>,
    pub metadata_incomplete: bool,
}

impl RepositoryRecord {
    pub fn new(url: NormalizedRepoUrl, accessibility: Accessibility) -> Self {
        Self {
            url,
            accessibility,
            clone_path: None,
            default_branch: None,
            created_at: None,
            updated_at: None,
            pushed_at: None,
            languages: BTreeMap::new(),
            subscribers: 0,
            forks: 0,
            open_issues: 0,
            releases: 0,
            license: None,
            commits_after: BTreeMap::new(),
            article_ids: Vec::new(),
            metadata_incomplete: false,
        }
    }
}

/// Probes the repository, retrying transient statuses.
pub fn check_accessibility(url: &NormalizedRepoUrl, api: &dyn HostingApi, retry: RetryPolicy) -> Accessibility {
    match with_retries(retry, || api.probe(&url.owner, &url.repo)) {
        Ok(Probe { status: 200, .. }) => Accessibility::Accessible { moved_to: None },
        Ok(Probe {
            status,
            moved_to: Some(to),
        }) if (200..400).contains(&status) => Accessibility::Accessible { moved_to: Some(to) },
        Ok(Probe { status, .. }) => Accessibility::Gone { status },
        Err(e) => {
            log::warn!("{}: accessibility unknown: {e}", url.slug());
            Accessibility::Unknown { reason: e.to_string() }
        }
    }
}

/// Fills hosting metadata into `record`. Exhausted retries leave the
/// missing parts at their defaults and set `metadata_incomplete`.
pub fn fetch_repo_metadata(
    record: &mut RepositoryRecord,
    api: &dyn HostingApi,
    article_dates: &[(&str, NaiveDate)],
    retry: RetryPolicy,
) {
    let (owner, repo) = match &record.accessibility {
        Accessibility::Accessible { moved_to: Some(to) } => match to.split_once('/') {
            Some((o, r)) => (o.to_string(), r.to_string()),
            None => (record.url.owner.clone(), record.url.repo.clone()),
        },
        _ => (record.url.owner.clone(), record.url.repo.clone()),
    };
    let mut incomplete = false;
    let mut note = |r: Result<()>| {
        if let Err(e) = r {
            log::warn!("{owner}/{repo}: metadata incomplete: {e}");
            incomplete = true;
        }
    };
    note(with_retries(retry, || api.repository(&owner, &repo)).map(|p| {
        record.default_branch = p.default_branch;
        record.created_at = p.created_at;
        record.updated_at = p.updated_at;
        record.pushed_at = p.pushed_at;
        record.subscribers = p.subscribers;
        record.forks = p.forks;
        record.open_issues = p.open_issues;
        record.license = p.license;
    }));
    note(with_retries(retry, || api.languages(&owner, &repo)).map(|l| record.languages = l));
    note(with_retries(retry, || api.release_count(&owner, &repo)).map(|n| record.releases = n));
    for (kind, day) in article_dates {
        note(with_retries(retry, || api.commits_after(&owner, &repo, *day)).map(|n| {
            record.commits_after.insert(kind.to_string(), n);
        }));
    }
    record.metadata_incomplete = incomplete;
}

/// Produces a working copy of a repository's default branch.
pub trait Cloner: Send + Sync {
    fn clone_into(&self, url: &NormalizedRepoUrl, dest: &Path) -> Result<()>;
}

/// Runs an external version-control tool:
/// `<program> clone --depth 1 --single-branch <url> <dest>`.
pub struct GitCloner {
    pub program: String,
    /// URL template; `{owner}` and `{repo}` are substituted.
    pub url_template: String,
}

impl Default for GitCloner {
    fn default() -> Self {
        Self {
            program: "git".into(),
            url_template: "https://github.com/{owner}/{repo}.git".into(),
        }
    }
}

impl Cloner for GitCloner {
    fn clone_into(&self, url: &NormalizedRepoUrl, dest: &Path) -> Result<()> {
        let remote = self
            .url_template
            .replace("{owner}", &url.owner)
            .replace("{repo}", &url.repo);
        let out = Command::new(&self.program)
            .args(["clone", "--depth", "1", "--single-branch"])
            .arg(&remote)
            .arg(dest)
            .env("GIT_TERMINAL_PROMPT", "0")
            .output()
            .map_err(|e| Error::Config(format!("cannot run `{}`: {e}", self.program)))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            let tail: Vec<&str> = stderr.lines().rev().take(5).collect();
            return Err(Error::Harvest(format!(
                "clone exited with {}: {}",
                out.status,
                tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
            )));
        }
        Ok(())
    }
}

/// Copies `<root>/<owner>/<repo>/tree` as the working copy.
pub struct DirectoryCloner {
    pub root: PathBuf,
}

impl Cloner for DirectoryCloner {
    fn clone_into(&self, url: &NormalizedRepoUrl, dest: &Path) -> Result<()> {
        let src = hosting::fixture_tree(&self.root, &url.owner, &url.repo);
        std::fs::create_dir_all(dest)?;
        if src.is_dir() {
            copy_tree(&src, dest)?;
        }
        Ok(())
    }
}

fn copy_tree(src: &Path, dest: &Path) -> Result<()> {
    for entry in walkdir::WalkDir::new(src).min_depth(1).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Harvest(e.to_string()))?;
        let rel = entry.path().strip_prefix(src).expect("walk stays under root");
        let target = dest.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Deterministic clone destination for a repository.
pub fn clone_destination(workspace: &Path, url: &NormalizedRepoUrl) -> PathBuf {
    workspace.join("repos").join(&url.owner).join(&url.repo)
}

/// Clones into the workspace. An existing destination is an error unless
/// `force` is set. The clone lands in a sibling `.partial` directory first
/// so an interrupted run never leaves a half-populated destination.
pub fn clone_default_branch(
    url: &NormalizedRepoUrl,
    workspace: &Path,
    cloner: &dyn Cloner,
    force: bool,
) -> Result<PathBuf> {
    let dest = clone_destination(workspace, url);
    if dest.exists() {
        if !force {
            return Err(Error::Collision(dest));
        }
        std::fs::remove_dir_all(&dest)?;
    }
    let partial = dest.with_extension("partial");
    if partial.exists() {
        std::fs::remove_dir_all(&partial)?;
    }
    if let Some(parent) = partial.parent() {
        std::fs::create_dir_all(parent)?;
    }
    if let Err(e) = cloner.clone_into(url, &partial) {
        let _ = std::fs::remove_dir_all(&partial);
        return Err(e);
    }
    let empty = std::fs::read_dir(&partial)?
        .filter_map(|e| e.ok())
        .all(|e| e.file_name() == ".git");
    if empty {
        std::fs::remove_dir_all(&partial)?;
        return Err(Error::Harvest("empty repository".into()));
    }
    std::fs::rename(&partial, &dest)?;
    Ok(dest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookPath {
    /// Path relative to the clone root, `/`-separated.
    pub path: String,
    pub unreadable: bool,
}

/// Every `.ipynb` file below `clone_path`, skipping `.ipynb_checkpoints`
/// and `.git` directories, sorted by relative path.
pub fn find_notebooks(clone_path: &Path) -> Result<Vec<NotebookPath>> {
    let mut out = Vec::new();
    let walker = walkdir::WalkDir::new(clone_path).into_iter().filter_entry(|e| {
        !(e.file_type().is_dir() && (e.file_name() == ".ipynb_checkpoints" || e.file_name() == ".git"))
    });
    for entry in walker {
        let entry = entry.map_err(|e| Error::Harvest(e.to_string()))?;
        if !entry.file_type().is_file() || !entry.file_name().to_string_lossy().ends_with(".ipynb") {
            continue;
        }
        let rel = entry.path().strip_prefix(clone_path).expect("walk stays under root");
        let path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let unreadable = std::fs::File::open(entry.path()).is_err();
        out.push(NotebookPath { path, unreadable });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
