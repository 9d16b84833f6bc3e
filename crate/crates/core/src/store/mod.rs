//! Single-file relational store for every pipeline entity, plus the
//! aggregate reports computed from it.

pub mod footprint;
pub mod reports;
mod schema;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};

pub use footprint::{estimate_footprint, FootprintEstimate, FootprintParams};
pub use reports::{
    aggregate_module_usage, derive_outcomes, dimension_report, exception_ranking, funnel_report, group_comparison,
    refresh_outcomes, repo_age_years, style_summary, write_reports, Dimension, DimensionRow, ExceptionRow,
    FunnelReport, GroupComparison, GroupStats, Metric, ModuleUsage, StyleRow, FUNNEL_STAGES,
};
pub use schema::SCHEMA_VERSION;

use crate::analysis::{ImportRecord, StyleFinding};
use crate::diff::{DiffResult, ReproOutcome};
use crate::env::{
    AttemptPolicy, DependencySpec, EnvironmentPlan, PackageEntry, ProvisionResult, ProvisionStatus, SourceKind,
};
use crate::error::{Error, Result};
use crate::exec::{ExecStatus, ExecutionRecord};
use crate::harvest::{Accessibility, RepositoryRecord};
use crate::inventory::{CellKind, CellRecord, Language, OutputBundle, ParsedNotebook};
use crate::jats::{ArticleRecord, LinkExtraction, NormalizedRepoUrl};

pub struct Store {
    conn: Connection,
    path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepoRow {
    pub id: i64,
    pub url: NormalizedRepoUrl,
    pub harvested: bool,
    pub accessibility: Option<Accessibility>,
    pub clone_path: Option<PathBuf>,
    pub created_at: Option<DateTime<Utc>>,
    pub inventoried: bool,
    pub deps_scanned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NotebookRow {
    pub id: i64,
    pub repo_id: i64,
    pub path: String,
    pub valid: bool,
    pub language: Option<Language>,
    pub language_version: Option<String>,
    pub analyzed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub notebook_id: i64,
    pub attempted: bool,
    pub policy: AttemptPolicy,
    pub plan: Option<EnvironmentPlan>,
    pub env_name: Option<String>,
}

fn date_text(d: Option<NaiveDate>) -> Option<String> {
    d.map(|d| d.format("%Y-%m-%d").to_string())
}

fn parse_date(s: Option<String>) -> Option<NaiveDate> {
    s.and_then(|s| NaiveDate::parse_from_str(&s, "%Y-%m-%d").ok())
}

fn time_text(t: Option<DateTime<Utc>>) -> Option<String> {
    t.map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn parse_time(s: Option<String>) -> Option<DateTime<Utc>> {
    s.and_then(|s| DateTime::parse_from_rfc3339(&s).ok())
        .map(|t| t.with_timezone(&Utc))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    Ok(serde_json::from_str(s)?)
}

impl Store {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let conn = Connection::open(path)?;
        Self::init(conn, Some(path.to_path_buf()))
    }

    pub fn open_in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?, None)
    }

    fn init(conn: Connection, path: Option<PathBuf>) -> Result<Self> {
        conn.execute_batch("PRAGMA foreign_keys = ON; PRAGMA journal_mode = WAL; PRAGMA synchronous = NORMAL;")?;
        conn.execute_batch(schema::SCHEMA)?;
        let found: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()?;
        match found {
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                    [SCHEMA_VERSION.to_string()],
                )?;
            }
            Some(v) if v == SCHEMA_VERSION.to_string() => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "store schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
        }
        Ok(Self { conn, path })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn conn(&self) -> &Connection {
        &self.conn
    }

    pub fn schema_version(&self) -> Result<i64> {
        let v: String = self
            .conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))?;
        v.parse()
            .map_err(|_| Error::integrity("meta", "schema_version is not a number"))
    }

    /// Runs `f` inside one transaction.
    pub fn transaction<T>(&self, f: impl FnOnce(&Store) -> Result<T>) -> Result<T> {
        let tx = self.conn.unchecked_transaction()?;
        let out = f(self)?;
        tx.commit()?;
        Ok(out)
    }

    // ---- stages

    pub fn mark_stage_done(&self, stage: &str) -> Result<()> {
        self.conn.execute(
            "INSERT OR REPLACE INTO stage_runs (stage, completed_at) VALUES (?1, ?2)",
            params![stage, Utc::now().to_rfc3339()],
        )?;
        Ok(())
    }

    pub fn stage_done(&self, stage: &str) -> Result<bool> {
        Ok(self
            .conn
            .query_row("SELECT 1 FROM stage_runs WHERE stage = ?1", [stage], |_| Ok(()))
            .optional()?
            .is_some())
    }

    // ---- articles

    fn journal_id(&self, a: &ArticleRecord) -> Result<Option<i64>> {
        let j = &a.journal;
        let Some(key) = j.issn.clone().or_else(|| j.title.clone()) else {
            return Ok(None);
        };
        self.conn.execute(
            "INSERT OR IGNORE INTO journals (key, issn, title, nlm_abbrev, iso_abbrev) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![key, j.issn, j.title, j.nlm_abbrev, j.iso_abbrev],
        )?;
        Ok(Some(self.conn.query_row(
            "SELECT id FROM journals WHERE key = ?1",
            [key],
            |r| r.get(0),
        )?))
    }

    /// Inserts an article with its authors and links; an article already
    /// present (same pmcid) keeps its row and id.
    pub fn insert_article(&self, a: &ArticleRecord, links: &[LinkExtraction]) -> Result<i64> {
        if let Some(id) = self.article_id(&a.pmcid)? {
            return Ok(id);
        }
        let journal_id = self.journal_id(a)?;
        self.conn.execute(
            "INSERT INTO articles (pmcid, pmid, doi, title, journal_id, received, accepted, published, license,
                 copyright, keywords, subject_tags, mesh_terms)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13)",
            params![
                a.pmcid,
                a.pmid,
                a.doi,
                a.title,
                journal_id,
                date_text(a.dates.received),
                date_text(a.dates.accepted),
                date_text(a.dates.published),
                a.license,
                a.copyright,
                json(&a.keywords),
                json(&a.subject_tags),
                json(&a.mesh_top_terms),
            ],
        )?;
        let id = self.conn.last_insert_rowid();
        for (pos, au) in a.authors.iter().enumerate() {
            self.conn.execute(
                "INSERT INTO authors (article_id, position, given, family, orcid, email) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                params![id, pos as i64, au.given, au.family, au.orcid, au.email],
            )?;
        }
        for link in links {
            self.insert_link(Some(id), link)?;
        }
        Ok(id)
    }

    pub fn article_id(&self, pmcid: &str) -> Result<Option<i64>> {
        Ok(self
            .conn
            .query_row("SELECT id FROM articles WHERE pmcid = ?1", [pmcid], |r| r.get(0))
            .optional()?)
    }

    /// Records a link; normalized links also get their repository row and
    /// the article-repository association.
    pub fn insert_link(&self, article_id: Option<i64>, link: &LinkExtraction) -> Result<Option<i64>> {
        let repo_id = match &link.disposition {
            crate::jats::Disposition::Normalized(url) => Some(self.upsert_repository(url)?),
            _ => None,
        };
        let exists: Option<i64> = self
            .conn
            .query_row(
                "SELECT id FROM links WHERE article_id IS ?1 AND raw = ?2",
                params![article_id, link.raw],
                |r| r.get(0),
            )
            .optional()?;
        if exists.is_none() {
            self.conn.execute(
                "INSERT INTO links (article_id, raw, disposition, repo_id) VALUES (?1, ?2, ?3, ?4)",
                params![article_id, link.raw, link.disposition.label(), repo_id],
            )?;
        }
        if let (Some(a), Some(r)) = (article_id, repo_id) {
            self.conn.execute(
                "INSERT OR IGNORE INTO article_repos (article_id, repo_id) VALUES (?1, ?2)",
                params![a, r],
            )?;
        }
        Ok(repo_id)
    }

    pub fn upsert_repository(&self, url: &NormalizedRepoUrl) -> Result<i64> {
        self.conn.execute(
            "INSERT OR IGNORE INTO repositories (canonical, owner, name) VALUES (?1, ?2, ?3)",
            params![url.canonical(), url.owner, url.repo],
        )?;
        Ok(self.conn.query_row(
            "SELECT id FROM repositories WHERE canonical = ?1",
            [url.canonical()],
            |r| r.get(0),
        )?)
    }

    /// Article dates for the lowest-pmcid article citing the repository.
    pub fn citing_article_dates(&self, repo_id: i64) -> Result<Vec<(String, NaiveDate)>> {
        let row: Option<(Option<String>, Option<String>, Option<String>)> = self
            .conn
            .query_row(
                "SELECT a.received, a.accepted, a.published FROM articles a
                 JOIN article_repos ar ON ar.article_id = a.id WHERE ar.repo_id = ?1
                 ORDER BY a.pmcid LIMIT 1",
                [repo_id],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
            )
            .optional()?;
        let Some((rec, acc, publ)) = row else {
            return Ok(Vec::new());
        };
        Ok([("received", rec), ("accepted", acc), ("published", publ)]
            .into_iter()
            .filter_map(|(k, d)| parse_date(d).map(|d| (k.to_string(), d)))
            .collect())
    }

    // ---- repositories

    fn repo_row(r: &Row) -> rusqlite::Result<RepoRow> {
        let acc: Option<String> = r.get("accessibility")?;
        Ok(RepoRow {
            id: r.get("id")?,
            url: NormalizedRepoUrl::new(r.get::<_, String>("owner")?, r.get::<_, String>("name")?),
            harvested: r.get("harvested")?,
            accessibility: acc.and_then(|a| serde_json::from_str(&a).ok()),
            clone_path: r.get::<_, Option<String>>("clone_path")?.map(PathBuf::from),
            created_at: parse_time(r.get("created_at")?),
            inventoried: r.get("inventoried")?,
            deps_scanned: r.get("deps_scanned")?,
        })
    }

    pub fn repositories(&self) -> Result<Vec<RepoRow>> {
        let mut st = self.conn.prepare("SELECT * FROM repositories ORDER BY canonical")?;
        let rows = st
            .query_map([], Self::repo_row)?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(rows)
    }

    pub fn repository(&self, id: i64) -> Result<RepoRow> {
        Ok(self
            .conn
            .query_row("SELECT * FROM repositories WHERE id = ?1", [id], Self::repo_row)?)
    }

    pub fn record_harvest(&self, id: i64, rec: &RepositoryRecord, harvest_error: Option<&str>) -> Result<()> {
        let status = match &rec.accessibility {
            Accessibility::Gone { status } => Some(*status as i64),
            _ => None,
        };
        let moved = match &rec.accessibility {
            Accessibility::Accessible { moved_to } => moved_to.clone(),
            _ => None,
        };
        self.conn.execute(
            "UPDATE repositories SET harvested = 1, accessibility = ?2, status_code = ?3, moved_to = ?4,
                 clone_path = ?5, harvest_error = ?6, default_branch = ?7, created_at = ?8, updated_at = ?9,
                 pushed_at = ?10, languages = ?11, subscribers = ?12, forks = ?13, open_issues = ?14,
                 releases = ?15, license = ?16, commits_after = ?17, metadata_incomplete = ?18
             WHERE id = ?1",
            params![
                id,
                json(&rec.accessibility),
                status,
                moved,
                rec.clone_path.as_ref().map(|p| p.display().to_string()),
                harvest_error,
                rec.default_branch,
                time_text(rec.created_at),
                time_text(rec.updated_at),
                time_text(rec.pushed_at),
                json(&rec.languages),
                rec.subscribers as i64,
                rec.forks as i64,
                rec.open_issues as i64,
                rec.releases as i64,
                rec.license,
                json(&rec.commits_after),
                rec.metadata_incomplete,
            ],
        )?;
        Ok(())
    }

    pub fn mark_inventoried(&self, repo_id: i64) -> Result<()> {
        self.conn
            .execute("UPDATE repositories SET inventoried = 1 WHERE id = ?1", [repo_id])?;
        Ok(())
    }

    // ---- notebooks

    /// Inserts a notebook row and its cells. `Err(reason)` records an
    /// invalid notebook.
    pub fn insert_notebook(
        &self,
        repo_id: i64,
        path: &str,
        parsed: std::result::Result<&ParsedNotebook, &str>,
    ) -> Result<i64> {
        match parsed {
            Err(reason) => {
                self.conn.execute(
                    "INSERT INTO notebooks (repo_id, path, valid, invalid_reason) VALUES (?1, ?2, 0, ?3)",
                    params![repo_id, path, reason],
                )?;
                Ok(self.conn.last_insert_rowid())
            }
            Ok(nb) => {
                let r = &nb.record;
                let m = &r.metrics;
                self.conn.execute(
                    "INSERT INTO notebooks (repo_id, path, valid, nbformat, kernel_name, language, language_version,
                         total_cells, code_cells, markdown_cells, raw_cells, empty_cells, cells_with_output,
                         max_execution_count, md_code_ratio, name_flags)
                     VALUES (?1, ?2, 1, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15)",
                    params![
                        repo_id,
                        path,
                        format!("{}.{}", r.nbformat.0, r.nbformat.1),
                        r.kernel_name,
                        r.language.as_str(),
                        r.language_version,
                        m.total_cells as i64,
                        m.code_cells as i64,
                        m.markdown_cells as i64,
                        m.raw_cells as i64,
                        m.empty_cells as i64,
                        m.cells_with_output as i64,
                        m.max_execution_count.map(|c| c as i64),
                        m.md_code_ratio,
                        json(&r.name_flags),
                    ],
                )?;
                let id = self.conn.last_insert_rowid();
                let mut st = self.conn.prepare_cached(
                    "INSERT INTO cells (notebook_id, idx, kind, source, execution_count, outputs) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                )?;
                for c in &nb.cells {
                    st.execute(params![
                        id,
                        c.index as i64,
                        c.kind.as_str(),
                        c.source,
                        c.execution_count.map(|n| n as i64),
                        json(&c.outputs),
                    ])?;
                }
                Ok(id)
            }
        }
    }

    fn notebook_row(r: &Row) -> rusqlite::Result<NotebookRow> {
        Ok(NotebookRow {
            id: r.get("id")?,
            repo_id: r.get("repo_id")?,
            path: r.get("path")?,
            valid: r.get("valid")?,
            language: r.get::<_, Option<String>>("language")?.map(|l| Language::parse(&l)),
            language_version: r.get("language_version")?,
            analyzed: r.get("analyzed")?,
        })
    }

    pub fn notebooks(&self) -> Result<Vec<NotebookRow>> {
        let mut st = self.conn.prepare("SELECT * FROM notebooks ORDER BY id")?;
        let rows = st
            .query_map([], Self::notebook_row)?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(rows)
    }

    pub fn notebook(&self, id: i64) -> Result<NotebookRow> {
        Ok(self
            .conn
            .query_row("SELECT * FROM notebooks WHERE id = ?1", [id], Self::notebook_row)?)
    }

    pub fn cells(&self, notebook_id: i64) -> Result<Vec<CellRecord>> {
        let mut st = self.conn.prepare_cached(
            "SELECT idx, kind, source, execution_count, outputs FROM cells WHERE notebook_id = ?1 ORDER BY idx",
        )?;
        let rows = st
            .query_map([notebook_id], |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, Option<i64>>(3)?,
                    r.get::<_, String>(4)?,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter()
            .map(|(idx, kind, source, ec, outputs)| {
                Ok(CellRecord {
                    index: idx as usize,
                    kind: CellKind::parse(&kind)
                        .ok_or_else(|| Error::integrity("cells", format!("bad kind {kind}")))?,
                    source,
                    execution_count: ec.map(|n| n as u64),
                    outputs: from_json::<Vec<OutputBundle>>(&outputs)?,
                })
            })
            .collect()
    }

    // ---- analysis

    pub fn record_analysis(&self, notebook_id: i64, imports: &[ImportRecord], style: &[StyleFinding]) -> Result<()> {
        let mut ins = self.conn.prepare_cached(
            "INSERT INTO imports (notebook_id, cell_index, line, module, top_level, form, locality, parse_mode)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
        )?;
        for i in imports {
            ins.execute(params![
                notebook_id,
                i.cell_index as i64,
                i.line as i64,
                i.module,
                i.top_level,
                i.form.as_str(),
                i.locality.as_str(),
                i.parse_mode.as_str(),
            ])?;
        }
        let mut sty = self.conn.prepare_cached(
            "INSERT INTO style_findings (notebook_id, cell_index, line, col, code, description) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
        )?;
        for f in style {
            sty.execute(params![
                notebook_id,
                f.cell_index as i64,
                f.line as i64,
                f.column as i64,
                f.code,
                f.description
            ])?;
        }
        self.conn
            .execute("UPDATE notebooks SET analyzed = 1 WHERE id = ?1", [notebook_id])?;
        Ok(())
    }

    pub fn style_findings(&self, notebook_id: i64) -> Result<Vec<StyleFinding>> {
        let mut st = self.conn.prepare(
            "SELECT cell_index, line, col, code, description FROM style_findings WHERE notebook_id = ?1
             ORDER BY cell_index, line, col, code",
        )?;
        let rows = st
            .query_map([notebook_id], |r| {
                Ok(StyleFinding {
                    notebook_id,
                    cell_index: r.get::<_, i64>(0)? as usize,
                    line: r.get::<_, i64>(1)? as usize,
                    column: r.get::<_, i64>(2)? as usize,
                    code: r.get(3)?,
                    description: r.get(4)?,
                })
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(rows)
    }

    /// `(top_level, locality)` pairs recorded for a notebook.
    pub fn import_modules(&self, notebook_id: i64) -> Result<Vec<(String, String)>> {
        let mut st = self
            .conn
            .prepare("SELECT top_level, locality FROM imports WHERE notebook_id = ?1 ORDER BY cell_index, line, id")?;
        let rows = st
            .query_map([notebook_id], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(rows)
    }

    // ---- dependencies and plans

    pub fn record_dependency_specs(&self, repo_id: i64, specs: &[DependencySpec]) -> Result<()> {
        for s in specs {
            self.conn.execute(
                "INSERT OR REPLACE INTO dependency_specs (repo_id, source_kind, path, entries, unparsed)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![repo_id, s.source_kind.as_str(), s.path, json(&s.entries), s.unparsed],
            )?;
        }
        self.conn
            .execute("UPDATE repositories SET deps_scanned = 1 WHERE id = ?1", [repo_id])?;
        Ok(())
    }

    pub fn dependency_specs(&self, repo_id: i64) -> Result<Vec<DependencySpec>> {
        let mut st = self.conn.prepare(
            "SELECT source_kind, path, entries, unparsed FROM dependency_specs WHERE repo_id = ?1 ORDER BY path",
        )?;
        let rows = st
            .query_map([repo_id], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, bool>(3)?,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter()
            .map(|(kind, path, entries, unparsed)| {
                Ok(DependencySpec {
                    source_kind: SourceKind::parse(&kind)
                        .ok_or_else(|| Error::integrity("dependency_specs", format!("bad kind {kind}")))?,
                    path,
                    entries: from_json::<Vec<PackageEntry>>(&entries)?,
                    unparsed,
                })
            })
            .collect()
    }

    /// `plan` is `None` when the attempt policy excluded the notebook.
    pub fn record_plan(
        &self,
        notebook_id: i64,
        policy: AttemptPolicy,
        plan: Option<&EnvironmentPlan>,
        manager_command: Option<&str>,
    ) -> Result<()> {
        self.conn.execute(
            "INSERT OR REPLACE INTO plans (notebook_id, attempted, policy, interpreter_version, interpreter_defaulted,
                 packages, fallback_kitchen_sink, env_name, manager_command)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
            params![
                notebook_id,
                plan.is_some(),
                policy.as_str(),
                plan.map(|p| p.interpreter_version.clone()),
                plan.map(|p| p.interpreter_defaulted),
                plan.map(|p| json(&p.packages)),
                plan.map(|p| p.fallback_kitchen_sink),
                plan.map(|p| p.env_name()),
                manager_command,
            ],
        )?;
        Ok(())
    }

    pub fn plans(&self) -> Result<Vec<PlanRow>> {
        let mut st = self.conn.prepare(
            "SELECT notebook_id, attempted, policy, interpreter_version, interpreter_defaulted, packages,
                    fallback_kitchen_sink, env_name FROM plans ORDER BY notebook_id",
        )?;
        let rows = st
            .query_map([], |r| {
                Ok((
                    r.get::<_, i64>(0)?,
                    r.get::<_, bool>(1)?,
                    r.get::<_, String>(2)?,
                    r.get::<_, Option<String>>(3)?,
                    r.get::<_, Option<bool>>(4)?,
                    r.get::<_, Option<String>>(5)?,
                    r.get::<_, Option<bool>>(6)?,
                    r.get::<_, Option<String>>(7)?,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter()
            .map(|(nb, attempted, policy, ver, defaulted, pkgs, fallback, env)| {
                let policy = AttemptPolicy::parse(&policy)
                    .ok_or_else(|| Error::integrity("plans", format!("bad policy {policy}")))?;
                let plan = match (attempted, ver, pkgs) {
                    (true, Some(v), Some(p)) => Some(EnvironmentPlan {
                        notebook_id: nb,
                        interpreter_version: v,
                        interpreter_defaulted: defaulted.unwrap_or(false),
                        packages: from_json(&p)?,
                        fallback_kitchen_sink: fallback.unwrap_or(false),
                    }),
                    (true, _, _) => {
                        return Err(Error::integrity("plans", format!("attempted plan {nb} is incomplete")))
                    }
                    _ => None,
                };
                Ok(PlanRow {
                    notebook_id: nb,
                    attempted,
                    policy,
                    plan,
                    env_name: env,
                })
            })
            .collect()
    }

    pub fn record_provision(&self, r: &ProvisionResult) -> Result<()> {
        let (status, python, log) = match &r.status {
            ProvisionStatus::Ready { env } => ("ready", Some(env.python.clone()), None),
            ProvisionStatus::InstallFailed { log_excerpt } => ("install_failed", None, Some(log_excerpt.clone())),
        };
        self.conn.execute(
            "INSERT OR REPLACE INTO provisions (env_name, status, python, log_excerpt, wall_time) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![r.env_name, status, python, log, r.wall_time],
        )?;
        Ok(())
    }

    pub fn provisions(&self) -> Result<BTreeMap<String, ProvisionStatus>> {
        let mut st = self
            .conn
            .prepare("SELECT env_name, status, python, log_excerpt FROM provisions")?;
        let rows = st
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, Option<String>>(2)?,
                    r.get::<_, Option<String>>(3)?,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        Ok(rows
            .into_iter()
            .map(|(name, status, python, log)| {
                let s = if status == "ready" {
                    ProvisionStatus::Ready {
                        env: crate::env::EnvHandle {
                            name: name.clone(),
                            python: python.unwrap_or_default(),
                        },
                    }
                } else {
                    ProvisionStatus::InstallFailed {
                        log_excerpt: log.unwrap_or_default(),
                    }
                };
                (name, s)
            })
            .collect())
    }

    // ---- executions and diffs

    /// Fails with a store error when the (notebook, attempt) pair exists.
    pub fn record_execution(&self, r: &ExecutionRecord) -> Result<()> {
        let class = crate::exec::classify_exception(r).map(|c| c.label().to_string());
        let fe = r.first_exception.as_ref();
        self.conn.execute(
            "INSERT INTO executions (notebook_id, attempt, env_name, status, exception_class, ename, evalue, traceback,
                 exception_cell, interpreter, detail, total_duration, started_at, cell_results)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14)",
            params![
                r.notebook_id,
                r.attempt,
                r.env_id,
                r.status.as_str(),
                class,
                fe.and_then(|e| e.ename.clone()),
                fe.and_then(|e| e.evalue.clone()),
                fe.map(|e| e.traceback.clone()),
                fe.map(|e| e.cell_index as i64),
                r.interpreter,
                r.detail,
                r.total_duration,
                r.started_at.to_rfc3339(),
                json(&r.cell_results),
            ],
        )?;
        Ok(())
    }

    pub fn has_execution(&self, notebook_id: i64, attempt: u32) -> Result<bool> {
        Ok(self
            .conn
            .query_row(
                "SELECT 1 FROM executions WHERE notebook_id = ?1 AND attempt = ?2",
                params![notebook_id, attempt],
                |_| Ok(()),
            )
            .optional()?
            .is_some())
    }

    pub fn executions(&self) -> Result<Vec<ExecutionRecord>> {
        let mut st = self.conn.prepare(
            "SELECT notebook_id, attempt, env_name, status, ename, evalue, traceback, exception_cell, interpreter,
                    detail, total_duration, started_at, cell_results FROM executions ORDER BY notebook_id, attempt",
        )?;
        let rows = st
            .query_map([], |r| {
                Ok((
                    (
                        r.get::<_, i64>(0)?,
                        r.get::<_, u32>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, String>(3)?,
                    ),
                    (
                        r.get::<_, Option<String>>(4)?,
                        r.get::<_, Option<String>>(5)?,
                        r.get::<_, Option<String>>(6)?,
                        r.get::<_, Option<i64>>(7)?,
                    ),
                    (
                        r.get::<_, Option<String>>(8)?,
                        r.get::<_, Option<String>>(9)?,
                        r.get::<_, f64>(10)?,
                        r.get::<_, String>(11)?,
                        r.get::<_, String>(12)?,
                    ),
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        rows.into_iter()
            .map(
                |((nb, attempt, env, status), (ename, evalue, tb, cell), (interp, detail, total, started, cells))| {
                    Ok(ExecutionRecord {
                        notebook_id: nb,
                        env_id: env,
                        attempt,
                        status: ExecStatus::parse(&status)
                            .ok_or_else(|| Error::integrity("executions", format!("bad status {status}")))?,
                        cell_results: from_json(&cells)?,
                        first_exception: cell.map(|c| crate::exec::FirstException {
                            ename,
                            evalue,
                            traceback: tb.unwrap_or_default(),
                            cell_index: c as usize,
                        }),
                        interpreter: interp,
                        detail,
                        total_duration: total,
                        started_at: parse_time(Some(started)).unwrap_or_default(),
                    })
                },
            )
            .collect()
    }

    pub fn record_diff(&self, attempt: u32, d: &DiffResult) -> Result<()> {
        self.conn.execute(
            "INSERT OR REPLACE INTO diffs (notebook_id, attempt, verdict, diff_count, diffs) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                d.notebook_id,
                attempt,
                match d.verdict {
                    crate::diff::Verdict::Identical => "identical",
                    crate::diff::Verdict::Different => "different",
                },
                d.diff_count as i64,
                json(&d.diffs),
            ],
        )?;
        Ok(())
    }

    pub fn diff_counts(&self) -> Result<BTreeMap<(i64, u32), u64>> {
        let mut st = self
            .conn
            .prepare("SELECT notebook_id, attempt, diff_count FROM diffs")?;
        let rows = st
            .query_map([], |r| {
                Ok(((r.get::<_, i64>(0)?, r.get::<_, u32>(1)?), r.get::<_, i64>(2)? as u64))
            })?
            .collect::<rusqlite::Result<BTreeMap<_, _>>>()?;
        Ok(rows)
    }

    pub fn diff(&self, notebook_id: i64, attempt: u32) -> Result<Option<DiffResult>> {
        let row: Option<(String, i64, String)> = self
            .conn
            .query_row(
                "SELECT verdict, diff_count, diffs FROM diffs WHERE notebook_id = ?1 AND attempt = ?2",
                params![notebook_id, attempt],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
            )
            .optional()?;
        row.map(|(verdict, count, diffs)| {
            Ok(DiffResult {
                notebook_id,
                verdict: if verdict == "identical" {
                    crate::diff::Verdict::Identical
                } else {
                    crate::diff::Verdict::Different
                },
                diff_count: count as u64,
                diffs: from_json(&diffs)?,
            })
        })
        .transpose()
    }

    // ---- outcomes

    /// Replaces the outcome view wholesale.
    pub fn replace_outcomes(&self, rows: &[(i64, Option<i64>, ReproOutcome)]) -> Result<()> {
        self.transaction(|s| {
            s.conn.execute("DELETE FROM outcomes", [])?;
            let mut st = s
                .conn
                .prepare_cached("INSERT INTO outcomes (repo_id, notebook_id, outcome, kind) VALUES (?1, ?2, ?3, ?4)")?;
            for (repo, nb, o) in rows {
                st.execute(params![repo, nb, o.label(), o.kind()])?;
            }
            Ok(())
        })
    }

    /// Outcome label counts, notebook-level and repository-level together.
    pub fn outcome_counts(&self) -> Result<BTreeMap<String, u64>> {
        let mut st = self
            .conn
            .prepare("SELECT outcome, COUNT(*) FROM outcomes GROUP BY outcome ORDER BY outcome")?;
        let rows = st
            .query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, i64>(1)? as u64)))?
            .collect::<rusqlite::Result<BTreeMap<_, _>>>()?;
        Ok(rows)
    }

    /// Rows breaking a cross-reference or uniqueness rule, as
    /// `(relation, detail)`. Empty on a consistent store.
    pub fn integrity_violations(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut fk = self.conn.prepare("PRAGMA foreign_key_check")?;
        let fks = fk
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, Option<i64>>(1)?,
                    r.get::<_, String>(2)?,
                ))
            })?
            .collect::<rusqlite::Result<Vec<_>>>()?;
        for (table, rowid, parent) in fks {
            out.push((table, format!("row {rowid:?} references missing {parent}")));
        }
        let checks: &[(&str, &str)] = &[
            (
                "plans",
                "SELECT 'notebook ' || p.notebook_id FROM plans p JOIN notebooks n ON n.id = p.notebook_id
                 WHERE n.valid = 0 OR n.language != 'python'",
            ),
            (
                "executions",
                "SELECT 'notebook ' || e.notebook_id FROM executions e LEFT JOIN plans p ON p.notebook_id = e.notebook_id
                 WHERE p.notebook_id IS NULL OR p.attempted = 0 OR p.env_name != e.env_name",
            ),
            (
                "executions",
                "SELECT 'notebook ' || e.notebook_id FROM executions e JOIN provisions v ON v.env_name = e.env_name
                 WHERE v.status != 'ready'",
            ),
            (
                "diffs",
                "SELECT 'notebook ' || d.notebook_id FROM diffs d LEFT JOIN executions e
                 ON e.notebook_id = d.notebook_id AND e.attempt = d.attempt
                 WHERE e.id IS NULL OR e.status != 'completed'",
            ),
            (
                "outcomes",
                "SELECT 'notebook ' || n.id FROM notebooks n
                 WHERE (SELECT COUNT(*) FROM outcomes o WHERE o.notebook_id = n.id) > 1",
            ),
        ];
        for (relation, sql) in checks {
            let mut st = self.conn.prepare(sql)?;
            for d in st.query_map([], |r| r.get::<_, String>(0))? {
                out.push((relation.to_string(), d?));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::parse_notebook_str;
    use crate::jats::normalize_github_link;

    #[test]
    fn schema_version_stamped_and_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.db");
        let s = Store::open(&path).unwrap();
        assert_eq!(s.schema_version().unwrap(), SCHEMA_VERSION);
        s.conn
            .execute("UPDATE meta SET value = '99' WHERE key = 'schema_version'", [])
            .unwrap();
        drop(s);
        assert!(matches!(Store::open(&path), Err(Error::Config(_))));
    }

    #[test]
    fn article_links_and_repos() {
        let s = Store::open_in_memory().unwrap();
        let a = ArticleRecord {
            pmcid: "PMC1".into(),
            title: "t".into(),
            ..Default::default()
        };
        let links = vec![
            normalize_github_link("https://github.com/u/r"),
            normalize_github_link("https://github.com/u"),
        ];
        let id = s.insert_article(&a, &links).unwrap();
        assert_eq!(s.insert_article(&a, &links).unwrap(), id);
        let repos = s.repositories().unwrap();
        assert_eq!(repos.len(), 1);
        assert_eq!(repos[0].url.slug(), "u/r");
        let n: i64 = s
            .conn
            .query_row("SELECT COUNT(*) FROM links", [], |r| r.get(0))
            .unwrap();
        assert_eq!(n, 2);
        assert!(s.integrity_violations().unwrap().is_empty());
    }

    #[test]
    fn notebook_cells_round_trip() {
        let s = Store::open_in_memory().unwrap();
        let repo = s.upsert_repository(&NormalizedRepoUrl::new("u", "r")).unwrap();
        let text = r#"{"nbformat": 4, "nbformat_minor": 4, "metadata": {"language_info": {"name": "python"}},
            "cells": [{"cell_type": "code", "source": "print(1)", "execution_count": 3, "metadata": {},
                       "outputs": [{"output_type": "stream", "name": "stdout", "text": "1\n"}]}]}"#;
        let nb = parse_notebook_str(text, "a.ipynb").unwrap();
        let id = s.insert_notebook(repo, "a.ipynb", Ok(&nb)).unwrap();
        assert_eq!(s.cells(id).unwrap(), nb.cells);
        let bad = s.insert_notebook(repo, "b.ipynb", Err("json parse")).unwrap();
        assert!(!s.notebook(bad).unwrap().valid);
    }

    #[test]
    fn execution_pairs_are_unique() {
        let s = Store::open_in_memory().unwrap();
        let repo = s.upsert_repository(&NormalizedRepoUrl::new("u", "r")).unwrap();
        let nb = s.insert_notebook(repo, "a.ipynb", Err("x")).unwrap();
        s.record_provision(&ProvisionResult {
            env_name: "e".into(),
            status: ProvisionStatus::Ready {
                env: crate::env::EnvHandle {
                    name: "e".into(),
                    python: "3.9".into(),
                },
            },
            wall_time: 0.0,
            cached: false,
        })
        .unwrap();
        let rec = ExecutionRecord {
            notebook_id: nb,
            env_id: "e".into(),
            attempt: 1,
            status: ExecStatus::Completed,
            cell_results: vec![],
            first_exception: None,
            interpreter: None,
            detail: None,
            total_duration: 1.0,
            started_at: Utc::now(),
        };
        s.record_execution(&rec).unwrap();
        assert!(s.has_execution(nb, 1).unwrap());
        assert!(s.record_execution(&rec).is_err());
        assert_eq!(s.executions().unwrap().len(), 1);
        // No plan for this execution.
        assert!(s.integrity_violations().unwrap().iter().any(|(r, _)| r == "executions"));
    }
}
