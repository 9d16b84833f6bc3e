//! Stage orchestration: mine → harvest → inventory → analyze → plan →
//! provision → execute → diff → report. Each stage picks up only the work
//! the store does not already record, so any stage can be rerun and an
//! interrupted run resumes where it stopped.

pub mod config;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Instant;

use chrono::NaiveDate;

pub use config::{resolve_program, InputMode, InputSource, PipelineConfig, Settings};

use crate::analysis::{classify_import_locality, extract_imports, style_check};
use crate::diff::compare;
use crate::env::{
    build_plan, discover_dependency_files, provision, EnvCache, EnvironmentPlan, PlanConfig, ProvisionStatus,
};
use crate::error::{Error, Result};
use crate::exec::{execute_notebook, ExecStatus, ExecutionJob, ExecutionRecord};
use crate::harvest::{
    check_accessibility, clone_default_branch, fetch_repo_metadata, find_notebooks, Accessibility, Cloner,
    DirectoryCloner, DirectoryHostingApi, GitCloner, HostingApi, HttpHostingApi, RepositoryRecord,
};
use crate::inventory::{parse_notebook, Language, NotebookRecord};
use crate::jats::article::parse_article_set;
use crate::jats::links::ScanOptions;
use crate::jats::search::{DirectorySearchClient, EutilsClient};
use crate::jats::{
    fetch_article_ids, normalize_github_link, NoMeshEnrichment, NormalizedRepoUrl, SearchClient, SearchOptions,
};
use crate::store::{refresh_outcomes, write_reports, FunnelReport, Store};

pub const STAGES: [&str; 9] = [
    "mine",
    "harvest",
    "inventory",
    "analyze",
    "plan",
    "provision",
    "execute",
    "diff",
    "report",
];

/// Execution attempt number used by the driver.
pub const ATTEMPT: u32 = 1;

static SHUTDOWN: AtomicBool = AtomicBool::new(false);

/// Asks running stages to stop taking new work.
pub fn request_shutdown() {
    SHUTDOWN.store(true, Ordering::SeqCst);
}

pub fn shutdown_requested() -> bool {
    SHUTDOWN.load(Ordering::SeqCst)
}

pub fn reset_shutdown() {
    SHUTDOWN.store(false, Ordering::SeqCst);
}

extern "C" fn on_sigint(_: libc::c_int) {
    SHUTDOWN.store(true, Ordering::SeqCst);
}

/// First SIGINT drains in-flight work; the handler is one-shot, so a second
/// one terminates immediately.
pub fn install_sigint_handler() {
    unsafe {
        let mut action: libc::sigaction = std::mem::zeroed();
        action.sa_sigaction = on_sigint as extern "C" fn(libc::c_int) as usize;
        action.sa_flags = libc::SA_RESETHAND;
        libc::sigaction(libc::SIGINT, &action, std::ptr::null_mut());
    }
}

pub fn stage_index(name: &str) -> Result<usize> {
    STAGES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::Usage(format!("unknown stage {name:?}; stages are {}", STAGES.join(", "))))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Finished(FunnelReport),
    Interrupted { stage: String },
}

/// Runs `jobs` on `workers` threads; results come back to the calling
/// thread, which alone touches the store. Returns false when a shutdown
/// request left jobs unstarted.
fn pool<J, R>(
    jobs: Vec<J>,
    workers: usize,
    work: impl Fn(J) -> R + Sync,
    mut sink: impl FnMut(R) -> Result<()>,
) -> Result<bool>
where
    J: Send,
    R: Send,
{
    let total = jobs.len();
    let queue = Mutex::new(VecDeque::from(jobs));
    let (tx, rx) = mpsc::channel::<R>();
    let mut received = 0;
    let mut first_err = None;
    let stop = AtomicBool::new(false);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(total).max(1) {
            let tx = tx.clone();
            let (queue, work, stop) = (&queue, &work, &stop);
            scope.spawn(move || loop {
                if shutdown_requested() || stop.load(Ordering::SeqCst) {
                    break;
                }
                let Some(job) = queue.lock().unwrap_or_else(|e| e.into_inner()).pop_front() else {
                    break;
                };
                if tx.send(work(job)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for r in rx {
            received += 1;
            if first_err.is_none() {
                if let Err(e) = sink(r) {
                    first_err = Some(e);
                    stop.store(true, Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(received == total)
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub store: Store,
}

impl Pipeline {
    /// Opens (or, with `force`, recreates) the workspace store.
    pub fn open(cfg: PipelineConfig) -> Result<Self> {
        if cfg.force {
            for p in [
                cfg.store_path(),
                cfg.workspace.join("store.sqlite-wal"),
                cfg.workspace.join("store.sqlite-shm"),
            ] {
                if p.exists() {
                    std::fs::remove_file(&p)?;
                }
            }
            for d in [
                cfg.workspace.join("repos"),
                cfg.scratch_dir(),
                cfg.workspace.join("envs"),
            ] {
                if d.exists() {
                    std::fs::remove_dir_all(&d)?;
                }
            }
        }
        std::fs::create_dir_all(&cfg.workspace)?;
        let store = Store::open(&cfg.store_path())?;
        Ok(Self { cfg, store })
    }

    /// Fails with a configuration error when the manager or executor the
    /// later stages need cannot be found.
    pub fn check_tools(&mut self, from_stage: usize) -> Result<()> {
        self.cfg.manager.program = resolve_program(&self.cfg.manager.program);
        self.cfg.executor.program = resolve_program(&self.cfg.executor.program);
        if from_stage <= stage_index("provision")? {
            self.cfg.manager.check()?;
        }
        if from_stage <= stage_index("execute")? {
            self.cfg.executor.check()?;
        }
        Ok(())
    }

    pub fn run_all(&mut self) -> Result<RunStatus> {
        self.check_tools(0)?;
        let mut funnel = None;
        for stage in STAGES {
            let t = Instant::now();
            let complete = self.run_stage_body(stage, &mut funnel)?;
            if !complete {
                return Ok(RunStatus::Interrupted { stage: stage.into() });
            }
            self.store.mark_stage_done(stage)?;
            log::info!("stage {stage} done in {:.1}s", t.elapsed().as_secs_f64());
        }
        Ok(RunStatus::Finished(funnel.expect("report stage ran")))
    }

    /// Runs one stage after checking that its predecessor has completed.
    pub fn run_stage(&mut self, stage: &str) -> Result<RunStatus> {
        let idx = stage_index(stage)?;
        if idx > 0 {
            let missing = STAGES[idx - 1];
            if !self.store.stage_done(missing)? {
                return Err(Error::StageDependency {
                    stage: stage.into(),
                    missing: missing.into(),
                });
            }
        }
        if matches!(stage, "provision" | "execute") {
            self.check_tools(idx)?;
        }
        let mut funnel = None;
        if !self.run_stage_body(stage, &mut funnel)? {
            return Ok(RunStatus::Interrupted { stage: stage.into() });
        }
        self.store.mark_stage_done(stage)?;
        let funnel = match funnel {
            Some(f) => f,
            None => crate::store::funnel_report(&self.store)?,
        };
        Ok(RunStatus::Finished(funnel))
    }

    fn run_stage_body(&mut self, stage: &str, funnel: &mut Option<FunnelReport>) -> Result<bool> {
        if shutdown_requested() {
            return Ok(false);
        }
        match stage {
            "mine" => self.mine(),
            "harvest" => self.harvest(),
            "inventory" => self.inventory(),
            "analyze" => self.analyze(),
            "plan" => self.plan(),
            "provision" => self.provision(),
            "execute" => self.execute(),
            "diff" => self.diff(),
            "report" => {
                *funnel = Some(self.report()?);
                Ok(true)
            }
            other => Err(Error::Usage(format!("unknown stage {other:?}"))),
        }
    }

    // ---- mine

    fn mine(&mut self) -> Result<bool> {
        match self.cfg.source.clone() {
            InputSource::XmlDirectory(dir) => {
                for file in crate::jats::search::xml_files(&dir)? {
                    if shutdown_requested() {
                        return Ok(false);
                    }
                    let text = std::fs::read_to_string(&file)?;
                    self.ingest_xml(&text, &file.display().to_string())?;
                }
            }
            InputSource::RepoListFile(path) => {
                let text = std::fs::read_to_string(&path)?;
                self.store.transaction(|s| {
                    for line in text.lines().map(str::trim) {
                        if line.is_empty() || line.starts_with('#') {
                            continue;
                        }
                        s.insert_link(None, &normalize_github_link(line))?;
                    }
                    Ok(())
                })?;
            }
            InputSource::LiveSearch { query, fixture_dir } => {
                let client: Box<dyn SearchClient> = match fixture_dir {
                    Some(d) => Box::new(DirectorySearchClient::new(d)),
                    None => Box::new(EutilsClient::new(
                        self.cfg.search_url.clone(),
                        std::env::var("NCBI_API_KEY").ok(),
                        self.cfg.request_delay,
                    )),
                };
                let opts = SearchOptions {
                    retry: self.cfg.retry,
                    ..Default::default()
                };
                let ids = fetch_article_ids(&query, client.as_ref(), opts)?;
                let pending: Vec<String> = ids
                    .into_iter()
                    .filter(|id| {
                        let pmcid = if id.starts_with("PMC") {
                            id.clone()
                        } else {
                            format!("PMC{id}")
                        };
                        !matches!(self.store.article_id(&pmcid), Ok(Some(_)))
                    })
                    .collect();
                for batch in pending.chunks(100) {
                    if shutdown_requested() {
                        return Ok(false);
                    }
                    let xml = crate::net::with_retries(self.cfg.retry, || client.fetch_xml(batch))?;
                    self.ingest_xml(&xml, "search batch")?;
                }
            }
        }
        Ok(true)
    }

    fn ingest_xml(&self, xml: &str, origin: &str) -> Result<()> {
        let articles = match parse_article_set(xml, ScanOptions::default(), &NoMeshEnrichment) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("{origin}: skipped: {e}");
                return Ok(());
            }
        };
        self.store.transaction(|s| {
            for a in articles {
                match a {
                    Ok(a) => {
                        s.insert_article(&a.record, &a.links)?;
                    }
                    Err(e) => log::warn!("{origin}: article skipped: {e}"),
                }
            }
            Ok(())
        })
    }

    // ---- harvest

    fn harvest(&mut self) -> Result<bool> {
        let (api, cloner): (Box<dyn HostingApi>, Box<dyn Cloner>) = match &self.cfg.hosting_dir {
            Some(dir) => (
                Box::new(DirectoryHostingApi::new(dir)),
                Box::new(DirectoryCloner { root: dir.clone() }),
            ),
            None => (
                Box::new(HttpHostingApi::new(
                    self.cfg.hosting_url.clone(),
                    std::env::var("GITHUB_TOKEN").ok(),
                    self.cfg.request_delay,
                )),
                Box::new(GitCloner::default()),
            ),
        };
        let mut jobs = Vec::new();
        for r in self.store.repositories()?.into_iter().filter(|r| !r.harvested) {
            let dates = self.store.citing_article_dates(r.id)?;
            jobs.push((r.id, r.url, dates));
        }
        let workspace = self.cfg.workspace.clone();
        let retry = self.cfg.retry;
        let (api, cloner) = (api.as_ref(), cloner.as_ref());
        let work = |(id, url, dates): (i64, NormalizedRepoUrl, Vec<(String, NaiveDate)>)| {
            let access = check_accessibility(&url, api, retry);
            let mut rec = RepositoryRecord::new(url.clone(), access);
            let mut error = None;
            if rec.accessibility.is_accessible() {
                let dates: Vec<(&str, NaiveDate)> = dates.iter().map(|(k, d)| (k.as_str(), *d)).collect();
                fetch_repo_metadata(&mut rec, api, &dates, retry);
                let target = match &rec.accessibility {
                    Accessibility::Accessible { moved_to: Some(to) } => to
                        .split_once('/')
                        .map(|(o, r)| NormalizedRepoUrl::new(o, r))
                        .unwrap_or_else(|| url.clone()),
                    _ => url.clone(),
                };
                // The store decides what is harvested: a clone left by an
                // interrupted run is replaced.
                match clone_default_branch(&target, &workspace, cloner, true) {
                    Ok(path) => rec.clone_path = Some(path),
                    Err(e) => {
                        log::warn!("{}: {e}", url.slug());
                        error = Some(e.to_string());
                    }
                }
            }
            (id, rec, error)
        };
        let store = &self.store;
        pool(jobs, self.cfg.harvest_workers, work, |(id, rec, error)| {
            store.record_harvest(id, &rec, error.as_deref())
        })
    }

    // ---- inventory

    fn inventory(&mut self) -> Result<bool> {
        for repo in self.store.repositories()? {
            if !repo.harvested || repo.inventoried {
                continue;
            }
            if shutdown_requested() {
                return Ok(false);
            }
            self.store.transaction(|s| {
                if let Some(clone) = &repo.clone_path {
                    for nb in find_notebooks(clone)? {
                        if nb.unreadable {
                            s.insert_notebook(repo.id, &nb.path, Err("unreadable"))?;
                            continue;
                        }
                        match parse_notebook(&clone.join(&nb.path), &nb.path) {
                            Ok(mut parsed) => {
                                parsed.record.repo_id = repo.id;
                                s.insert_notebook(repo.id, &nb.path, Ok(&parsed))?;
                            }
                            Err(invalid) => {
                                s.insert_notebook(repo.id, &nb.path, Err(&invalid.reason))?;
                            }
                        }
                    }
                    s.record_dependency_specs(repo.id, &discover_dependency_files(clone)?)?;
                }
                s.mark_inventoried(repo.id)
            })?;
        }
        Ok(true)
    }

    // ---- analyze

    fn analyze(&mut self) -> Result<bool> {
        let repos: BTreeMap<i64, Option<PathBuf>> = self
            .store
            .repositories()?
            .into_iter()
            .map(|r| (r.id, r.clone_path))
            .collect();
        let pending: Vec<_> = self
            .store
            .notebooks()?
            .into_iter()
            .filter(|n| n.valid && !n.analyzed)
            .collect();
        let mut jobs = Vec::new();
        for nb in pending {
            let python = nb.language == Some(Language::Python);
            let cells = if python { self.store.cells(nb.id)? } else { Vec::new() };
            let root = repos.get(&nb.repo_id).cloned().flatten();
            jobs.push((nb.id, nb.path, root, cells));
        }
        let work = |(id, path, root, cells): (i64, String, Option<PathBuf>, Vec<crate::inventory::CellRecord>)| {
            let mut imports = extract_imports(id, &cells);
            for i in &mut imports {
                i.locality = classify_import_locality(i, root.as_deref(), &path);
            }
            (id, imports, style_check(id, &cells))
        };
        let store = &self.store;
        pool(jobs, self.cfg.workers, work, |(id, imports, style)| {
            store.transaction(|s| s.record_analysis(id, &imports, &style))
        })
    }

    // ---- plan

    fn plan(&mut self) -> Result<bool> {
        let planned: BTreeSet<i64> = self.store.plans()?.iter().map(|p| p.notebook_id).collect();
        let plan_cfg = PlanConfig {
            default_interpreter: self.cfg.default_interpreter.clone(),
            ..Default::default()
        };
        let mut specs_by_repo = BTreeMap::new();
        let policy = self.cfg.policy;
        let manager = self.cfg.manager.clone();
        let notebooks = self.store.notebooks()?;
        self.store.transaction(|s| {
            for nb in notebooks {
                if !nb.valid || nb.language != Some(Language::Python) || planned.contains(&nb.id) {
                    continue;
                }
                if let std::collections::btree_map::Entry::Vacant(e) = specs_by_repo.entry(nb.repo_id) {
                    e.insert(s.dependency_specs(nb.repo_id)?);
                }
                let specs = &specs_by_repo[&nb.repo_id];
                if !policy.admits(specs) {
                    s.record_plan(nb.id, policy, None, None)?;
                    continue;
                }
                let record = NotebookRecord {
                    repo_id: nb.repo_id,
                    path: nb.path.clone(),
                    nbformat: (4, 0),
                    kernel_name: None,
                    language: Language::Python,
                    language_version: nb.language_version.clone(),
                    metrics: Default::default(),
                    name_flags: Default::default(),
                };
                let plan = build_plan(nb.id, &record, specs, &plan_cfg)?;
                s.record_plan(nb.id, policy, Some(&plan), Some(&manager.install_command_line(&plan)))?;
            }
            Ok(())
        })?;
        Ok(true)
    }

    // ---- provision

    fn provision(&mut self) -> Result<bool> {
        let done = self.store.provisions()?;
        let mut jobs: BTreeMap<String, EnvironmentPlan> = BTreeMap::new();
        for p in self.store.plans()? {
            if let Some(plan) = p.plan {
                let name = plan.env_name();
                if !done.contains_key(&name) {
                    jobs.entry(name).or_insert(plan);
                }
            }
        }
        let cache = EnvCache::new();
        let adapter = &self.cfg.manager;
        let store = &self.store;
        pool(
            jobs.into_values().collect(),
            self.cfg.workers,
            |plan| provision(&plan, adapter, &cache),
            |r| {
                if let ProvisionStatus::InstallFailed { log_excerpt } = &r.status {
                    log::warn!(
                        "{}: install failed: {}",
                        r.env_name,
                        log_excerpt.lines().last().unwrap_or("")
                    );
                }
                store.record_provision(&r)
            },
        )
    }

    // ---- execute

    fn execute(&mut self) -> Result<bool> {
        let provisions = self.store.provisions()?;
        let repos: BTreeMap<i64, Option<PathBuf>> = self
            .store
            .repositories()?
            .into_iter()
            .map(|r| (r.id, r.clone_path))
            .collect();
        let scratch = self.cfg.scratch_dir();
        std::fs::create_dir_all(&scratch)?;
        let mut jobs = Vec::new();
        for p in self.store.plans()? {
            let Some(env_name) = p.env_name.filter(|_| p.attempted) else {
                continue;
            };
            let Some(ProvisionStatus::Ready { env }) = provisions.get(&env_name) else {
                continue;
            };
            if self.store.has_execution(p.notebook_id, ATTEMPT)? {
                continue;
            }
            let nb = self.store.notebook(p.notebook_id)?;
            let clone = repos
                .get(&nb.repo_id)
                .cloned()
                .flatten()
                .ok_or_else(|| Error::integrity("plans", format!("notebook {} has no clone", nb.id)))?;
            let path = std::path::absolute(clone.join(&nb.path))?;
            jobs.push((p.notebook_id, path, env.clone()));
        }
        let cfg = &self.cfg.executor;
        let store = &self.store;
        let scratch = std::path::absolute(&scratch)?;
        pool(
            jobs,
            self.cfg.workers,
            |(id, path, env)| {
                let job = ExecutionJob {
                    notebook_id: id,
                    attempt: ATTEMPT,
                    notebook_path: &path,
                    env: &env,
                    scratch: &scratch,
                };
                execute_notebook(&job, cfg)
            },
            |rec: ExecutionRecord| {
                log::info!("notebook {}: {}", rec.notebook_id, rec.status.as_str());
                store.record_execution(&rec)
            },
        )
    }

    // ---- diff

    fn diff(&mut self) -> Result<bool> {
        let have = self.store.diff_counts()?;
        let policy = self.cfg.diff.clone();
        for rec in self.store.executions()? {
            if rec.status != ExecStatus::Completed || have.contains_key(&(rec.notebook_id, rec.attempt)) {
                continue;
            }
            let cells = self.store.cells(rec.notebook_id)?;
            let result = compare(&cells, &rec, &policy);
            self.store.record_diff(rec.attempt, &result)?;
        }
        Ok(true)
    }

    // ---- report

    fn report(&mut self) -> Result<FunnelReport> {
        refresh_outcomes(&self.store)?;
        write_reports(&self.store, &self.cfg.report_dir, self.cfg.reference_date)
    }
}

/// Total notebook execution time recorded in the store, hours.
pub fn recorded_runtime_hours(store: &Store) -> Result<f64> {
    let secs: f64 = store
        .conn()
        .query_row("SELECT COALESCE(SUM(total_duration), 0) FROM executions", [], |r| {
            r.get(0)
        })?;
    Ok(secs / 3600.0)
}

/// Report files compared for rerun equality, with volatile keys removed.
pub fn scrubbed_report(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_str(&text)?;
        scrub_time_keys(&mut v);
        return Ok(serde_json::to_string_pretty(&v)?);
    }
    if path.extension().is_some_and(|e| e == "csv") {
        return scrub_csv_columns(&text);
    }
    Ok(text)
}

fn volatile_key(k: &str) -> bool {
    k.contains("time") || k.contains("duration")
}

fn scrub_csv_columns(text: &str) -> Result<String> {
    let csv_err = |e: csv::Error| Error::Rejected(format!("report csv: {e}"));
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().map_err(csv_err)?.clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| !volatile_key(&headers[i])).collect();
    let mut wr = csv::Writer::from_writer(Vec::new());
    if !headers.is_empty() {
        wr.write_record(keep.iter().map(|&i| &headers[i])).map_err(csv_err)?;
    }
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        wr.write_record(keep.iter().map(|&i| &row[i])).map_err(csv_err)?;
    }
    let bytes = wr
        .into_inner()
        .map_err(|e| Error::Rejected(format!("report csv: {e}")))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Drops object keys naming a time or duration, recursively.
pub fn scrub_time_keys(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(o) => {
            o.retain(|k, _| !volatile_key(k));
            o.values_mut().for_each(scrub_time_keys);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(scrub_time_keys),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn pool_delivers_every_result_to_the_sink() {
        let mut seen = Vec::new();
        let complete = pool(
            (0..50).collect(),
            4,
            |i: i32| i * 2,
            |r| {
                seen.push(r);
                Ok(())
            },
        )
        .unwrap();
        assert!(complete);
        seen.sort();
        assert_eq!(seen, (0..50).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn pool_stops_on_sink_error() {
        let ran = AtomicUsize::new(0);
        let r = pool(
            (0..1000).collect(),
            2,
            |i: i32| {
                ran.fetch_add(1, Ordering::SeqCst);
                std::thread::sleep(std::time::Duration::from_millis(1));
                i
            },
            |_| Err(Error::Usage("stop".into())),
        );
        assert!(r.is_err());
        assert!(ran.load(Ordering::SeqCst) < 1000);
    }

    #[test]
    fn stage_names() {
        assert_eq!(stage_index("diff").unwrap(), 7);
        assert!(matches!(stage_index("nope"), Err(Error::Usage(_))));
    }

    #[test]
    fn scrubs_time_keys() {
        let mut v = serde_json::json!({"a": 1, "mean_execution_time_s": 2.0, "x": [{"total_duration": 1, "b": 2}]});
        scrub_time_keys(&mut v);
        assert_eq!(v, serde_json::json!({"a": 1, "x": [{"b": 2}]}));
    }

    #[test]
    fn scrubs_time_columns() {
        let out = scrub_csv_columns("a,mean_execution_time_s,b\n1,0.5,x\n").unwrap();
        assert_eq!(out, "a,b\n1,x\n");
        assert_eq!(scrub_csv_columns("").unwrap(), "");
    }
}
