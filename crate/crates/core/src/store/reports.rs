//! Aggregate reports. Every report states its denominator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use rusqlite::params;
use serde::Serialize;
use serde_json::{json, Value};

use super::Store;
use crate::diff::{classify_outcome, FunnelState, NotebookStages, ReproOutcome};
use crate::error::{Error, Result};
use crate::exec::{ExceptionClass, ExecStatus};
use crate::harvest::Accessibility;

pub const FUNNEL_STAGES: [&str; 16] = [
    "links_found",
    "unique_repos",
    "accessible",
    "with_notebooks",
    "notebooks_total",
    "valid",
    "python",
    "attempted",
    "install_failed",
    "executed",
    "exception",
    "timeout",
    "infrastructure_error",
    "completed",
    "identical",
    "different",
];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct FunnelReport {
    pub stages: Vec<(String, u64)>,
}

impl FunnelReport {
    pub fn get(&self, stage: &str) -> u64 {
        self.stages
            .iter()
            .find(|(s, _)| s == stage)
            .map(|(_, n)| *n)
            .unwrap_or(0)
    }

    pub fn vector(&self) -> Vec<u64> {
        self.stages.iter().map(|(_, n)| *n).collect()
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.stages.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
    }

    /// Inverse of [`FunnelReport::to_json`]; stages keep the canonical order.
    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Config("funnel must be a JSON object".into()))?;
        let mut stages = Vec::new();
        for s in FUNNEL_STAGES {
            let n = obj
                .get(s)
                .and_then(Value::as_u64)
                .ok_or_else(|| Error::Config(format!("funnel is missing stage {s}")))?;
            stages.push((s.to_string(), n));
        }
        Ok(Self { stages })
    }
}

impl fmt::Display for FunnelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (s, n)) in self.stages.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}={n}")?;
        }
        Ok(())
    }
}

/// Latest attempt per notebook: status, exception class label, diff count.
struct LatestExec {
    attempt: u32,
    status: ExecStatus,
    class: Option<String>,
    duration: f64,
}

fn latest_executions(store: &Store) -> Result<BTreeMap<i64, LatestExec>> {
    let mut st = store.conn().prepare(
        "SELECT notebook_id, attempt, status, exception_class, total_duration FROM executions e
         WHERE attempt = (SELECT MAX(attempt) FROM executions x WHERE x.notebook_id = e.notebook_id)",
    )?;
    let rows = st
        .query_map([], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, u32>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, Option<String>>(3)?,
                r.get::<_, f64>(4)?,
            ))
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    rows.into_iter()
        .map(|(nb, attempt, status, class, duration)| {
            let status = ExecStatus::parse(&status)
                .ok_or_else(|| Error::integrity("executions", format!("bad status {status}")))?;
            Ok((
                nb,
                LatestExec {
                    attempt,
                    status,
                    class,
                    duration,
                },
            ))
        })
        .collect()
}

fn count(store: &Store, sql: &str) -> Result<u64> {
    Ok(store.conn().query_row(sql, [], |r| r.get::<_, i64>(0))? as u64)
}

fn accessibility_by_repo(store: &Store) -> Result<BTreeMap<i64, Option<Accessibility>>> {
    Ok(store
        .repositories()?
        .into_iter()
        .map(|r| (r.id, r.accessibility))
        .collect())
}

/// Stage counts from the raw tables. Fails with an integrity error when
/// the store breaks a cross-reference, a count exceeds its predecessor,
/// or recorded outcomes do not partition the inventoried notebooks.
pub fn funnel_report(store: &Store) -> Result<FunnelReport> {
    if let Some((relation, detail)) = store.integrity_violations()?.into_iter().next() {
        return Err(Error::Integrity { relation, detail });
    }
    let access = accessibility_by_repo(store)?;
    let accessible_ids: BTreeSet<i64> = access
        .iter()
        .filter(|(_, a)| a.as_ref().is_some_and(Accessibility::is_accessible))
        .map(|(id, _)| *id)
        .collect();
    let nb_repos: BTreeSet<i64> = {
        let mut st = store.conn().prepare("SELECT DISTINCT repo_id FROM notebooks")?;
        let ids = st
            .query_map([], |r| r.get(0))?
            .collect::<rusqlite::Result<BTreeSet<i64>>>()?;
        ids
    };
    if let Some(bad) = nb_repos.difference(&accessible_ids).next() {
        return Err(Error::integrity(
            "notebooks",
            format!("repository {bad} has notebooks but is not accessible"),
        ));
    }

    let latest = latest_executions(store)?;
    let diffs = store.diff_counts()?;
    let mut by_status: BTreeMap<ExecStatus, u64> = BTreeMap::new();
    let (mut identical, mut different) = (0, 0);
    for (nb, e) in &latest {
        *by_status.entry(e.status).or_default() += 1;
        if e.status == ExecStatus::Completed {
            match diffs.get(&(*nb, e.attempt)) {
                Some(0) => identical += 1,
                Some(_) => different += 1,
                None => {}
            }
        }
    }
    let st = |s| by_status.get(&s).copied().unwrap_or(0);

    let values = [
        count(store, "SELECT COUNT(*) FROM links")?,
        access.len() as u64,
        accessible_ids.len() as u64,
        nb_repos.len() as u64,
        count(store, "SELECT COUNT(*) FROM notebooks")?,
        count(store, "SELECT COUNT(*) FROM notebooks WHERE valid = 1")?,
        count(
            store,
            "SELECT COUNT(*) FROM notebooks WHERE valid = 1 AND language = 'python'",
        )?,
        count(store, "SELECT COUNT(*) FROM plans WHERE attempted = 1")?,
        count(
            store,
            "SELECT COUNT(*) FROM plans p JOIN provisions v ON v.env_name = p.env_name
             WHERE p.attempted = 1 AND v.status = 'install_failed'",
        )?,
        latest.len() as u64,
        st(ExecStatus::Exception),
        st(ExecStatus::Timeout),
        st(ExecStatus::InfrastructureError),
        st(ExecStatus::Completed),
        identical,
        different,
    ];
    let report = FunnelReport {
        stages: FUNNEL_STAGES.iter().map(|s| s.to_string()).zip(values).collect(),
    };
    check_monotone(&report)?;
    check_outcomes(store, &report)?;
    Ok(report)
}

fn check_monotone(f: &FunnelReport) -> Result<()> {
    let g = |s: &str| f.get(s);
    let le = |a: &str, b: &str, relation: &str| -> Result<()> {
        if g(a) > g(b) {
            return Err(Error::integrity(
                relation,
                format!("{a} ({}) exceeds {b} ({})", g(a), g(b)),
            ));
        }
        Ok(())
    };
    le("unique_repos", "links_found", "links")?;
    le("accessible", "unique_repos", "repositories")?;
    le("with_notebooks", "accessible", "repositories")?;
    le("with_notebooks", "notebooks_total", "notebooks")?;
    le("valid", "notebooks_total", "notebooks")?;
    le("python", "valid", "notebooks")?;
    le("attempted", "python", "plans")?;
    le("install_failed", "attempted", "provisions")?;
    if g("executed") + g("install_failed") > g("attempted") {
        return Err(Error::integrity(
            "executions",
            "executed plus install_failed exceeds attempted",
        ));
    }
    let terminal = g("exception") + g("timeout") + g("infrastructure_error") + g("completed");
    if terminal != g("executed") {
        return Err(Error::integrity(
            "executions",
            "execution statuses do not sum to executed",
        ));
    }
    if g("identical") + g("different") > g("completed") {
        return Err(Error::integrity("diffs", "diffed notebooks exceed completed"));
    }
    Ok(())
}

fn check_outcomes(store: &Store, f: &FunnelReport) -> Result<()> {
    let total = count(store, "SELECT COUNT(*) FROM outcomes")?;
    if total == 0 {
        return Ok(());
    }
    let nb_level = count(store, "SELECT COUNT(*) FROM outcomes WHERE notebook_id IS NOT NULL")?;
    if nb_level != f.get("notebooks_total") {
        return Err(Error::integrity(
            "outcomes",
            format!(
                "{nb_level} notebook outcomes for {} notebooks",
                f.get("notebooks_total")
            ),
        ));
    }
    let repo_level = total - nb_level;
    let expected = f.get("unique_repos") - f.get("with_notebooks");
    if repo_level != expected {
        return Err(Error::integrity(
            "outcomes",
            format!("{repo_level} repository outcomes, expected {expected}"),
        ));
    }
    Ok(())
}

/// One outcome per notebook plus one per repository that has no
/// notebooks. Unharvested repositories get none.
pub fn derive_outcomes(store: &Store) -> Result<Vec<(i64, Option<i64>, ReproOutcome)>> {
    let notebooks = store.notebooks()?;
    let mut by_repo: BTreeMap<i64, Vec<&super::NotebookRow>> = BTreeMap::new();
    for nb in &notebooks {
        by_repo.entry(nb.repo_id).or_default().push(nb);
    }
    let plans: BTreeMap<i64, super::PlanRow> = store.plans()?.into_iter().map(|p| (p.notebook_id, p)).collect();
    let provisions = store.provisions()?;
    let latest = latest_executions(store)?;
    let diffs = store.diff_counts()?;

    let mut out = Vec::new();
    for repo in store.repositories()? {
        if !repo.harvested {
            continue;
        }
        let accessible = repo.accessibility.as_ref().is_some_and(Accessibility::is_accessible);
        let nbs = by_repo.get(&repo.id).map(Vec::as_slice).unwrap_or(&[]);
        if nbs.is_empty() {
            let state = FunnelState {
                repo_accessible: accessible,
                notebook: None,
            };
            out.push((repo.id, None, classify_outcome(&state)?));
            continue;
        }
        for nb in nbs {
            let plan = plans.get(&nb.id);
            let provisioned = plan
                .and_then(|p| p.env_name.as_ref())
                .and_then(|e| provisions.get(e))
                .map(|s| matches!(s, crate::env::ProvisionStatus::Ready { .. }));
            let exec = latest.get(&nb.id);
            let stages = NotebookStages {
                valid: Some(nb.valid),
                python: nb
                    .valid
                    .then(|| nb.language.as_ref().is_some_and(|l| l.as_str() == "python")),
                not_attempted: plan.filter(|p| !p.attempted).map(|p| p.policy),
                planned: plan.is_some_and(|p| p.attempted),
                provisioned,
                execution: exec.map(|e| (e.status, e.class.as_deref().map(ExceptionClass::parse_label))),
                diff_count: exec.and_then(|e| diffs.get(&(nb.id, e.attempt)).copied()),
            };
            let state = FunnelState {
                repo_accessible: accessible,
                notebook: Some(stages),
            };
            out.push((repo.id, Some(nb.id), classify_outcome(&state)?));
        }
    }
    Ok(out)
}

/// Recomputes and stores the outcome view.
pub fn refresh_outcomes(store: &Store) -> Result<Vec<(i64, Option<i64>, ReproOutcome)>> {
    let rows = derive_outcomes(store)?;
    store.replace_outcomes(&rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceptionRow {
    pub class: String,
    pub count: u64,
    /// Fraction of executed notebooks.
    pub share: f64,
}

/// Exception classes of the latest attempt per notebook, most frequent
/// first, ties by name.
pub fn exception_ranking(store: &Store) -> Result<Vec<ExceptionRow>> {
    let latest = latest_executions(store)?;
    let executed = latest.len() as f64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for e in latest.values().filter(|e| e.status == ExecStatus::Exception) {
        let label = e
            .class
            .clone()
            .unwrap_or_else(|| ExceptionClass::Unknown.label().to_string());
        *counts.entry(label).or_default() += 1;
    }
    let mut rows: Vec<ExceptionRow> = counts
        .into_iter()
        .map(|(class, count)| ExceptionRow {
            class,
            count,
            share: count as f64 / executed,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.class.cmp(&b.class)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub notebooks: u64,
    /// Notebooks whose repository declares at least one dependency file.
    pub with_dependency_file: u64,
    pub mean_total_cells: f64,
    pub mean_code_cells: f64,
    pub mean_markdown_cells: f64,
    pub mean_empty_cells: f64,
    /// Over notebooks with at least one code cell.
    pub mean_md_code_ratio: Option<f64>,
    pub mean_diff_count: f64,
    pub mean_execution_time_s: f64,
    /// Over notebooks with at least one code cell.
    pub mean_time_per_code_cell_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupComparison {
    pub different: Option<GroupStats>,
    pub identical: Option<GroupStats>,
}

#[derive(Default)]
struct Acc {
    n: u64,
    deps: u64,
    total: f64,
    code: f64,
    md: f64,
    empty: f64,
    ratio: (f64, u64),
    diffs: f64,
    time: f64,
    per_cell: (f64, u64),
}

fn mean(sum: f64, n: u64) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

impl Acc {
    fn finish(self) -> Option<GroupStats> {
        let n = self.n;
        (n > 0).then(|| GroupStats {
            notebooks: n,
            with_dependency_file: self.deps,
            mean_total_cells: self.total / n as f64,
            mean_code_cells: self.code / n as f64,
            mean_markdown_cells: self.md / n as f64,
            mean_empty_cells: self.empty / n as f64,
            mean_md_code_ratio: mean(self.ratio.0, self.ratio.1),
            mean_diff_count: self.diffs / n as f64,
            mean_execution_time_s: self.time / n as f64,
            mean_time_per_code_cell_s: mean(self.per_cell.0, self.per_cell.1),
        })
    }
}

/// Completed and diffed notebooks split by verdict. An empty group is `None`.
pub fn group_comparison(store: &Store) -> Result<GroupComparison> {
    let latest = latest_executions(store)?;
    let diffs = store.diff_counts()?;
    let with_deps: BTreeSet<i64> = {
        let mut st = store.conn().prepare("SELECT DISTINCT repo_id FROM dependency_specs")?;
        let ids = st
            .query_map([], |r| r.get(0))?
            .collect::<rusqlite::Result<BTreeSet<i64>>>()?;
        ids
    };
    let (mut diff_acc, mut same_acc) = (Acc::default(), Acc::default());
    let mut st = store.conn().prepare(
        "SELECT repo_id, total_cells, code_cells, markdown_cells, empty_cells, md_code_ratio FROM notebooks WHERE id = ?1",
    )?;
    for (nb, e) in &latest {
        if e.status != ExecStatus::Completed {
            continue;
        }
        let Some(&dc) = diffs.get(&(*nb, e.attempt)) else {
            continue;
        };
        let (repo, total, code, md, empty, ratio): (i64, i64, i64, i64, i64, Option<f64>) = st
            .query_row(params![nb], |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?))
            })?;
        let acc = if dc == 0 { &mut same_acc } else { &mut diff_acc };
        acc.n += 1;
        acc.deps += with_deps.contains(&repo) as u64;
        acc.total += total as f64;
        acc.code += code as f64;
        acc.md += md as f64;
        acc.empty += empty as f64;
        if let Some(r) = ratio {
            acc.ratio.0 += r;
            acc.ratio.1 += 1;
        }
        acc.diffs += dc as f64;
        acc.time += e.duration;
        if code > 0 {
            acc.per_cell.0 += e.duration / code as f64;
            acc.per_cell.1 += 1;
        }
    }
    Ok(GroupComparison {
        different: diff_acc.finish(),
        identical: same_acc.finish(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dimension {
    Journal,
    Year,
    MeshTerm,
    ArticleType,
    RepoAge,
    Language,
    InterpreterVersion,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::Journal,
        Dimension::Year,
        Dimension::MeshTerm,
        Dimension::ArticleType,
        Dimension::RepoAge,
        Dimension::Language,
        Dimension::InterpreterVersion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Journal => "journal",
            Dimension::Year => "year",
            Dimension::MeshTerm => "mesh_term",
            Dimension::ArticleType => "article_type",
            Dimension::RepoAge => "repo_age",
            Dimension::Language => "language",
            Dimension::InterpreterVersion => "interpreter_version",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown dimension {s:?}")))
    }
}

/// What a dimension row counts. `Articles` and `Notebooks` are normalized
/// by the corpus total; the outcome metrics by the notebooks in the group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Articles,
    Notebooks,
    Executed,
    Exceptions,
    Identical,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Articles,
        Metric::Notebooks,
        Metric::Executed,
        Metric::Exceptions,
        Metric::Identical,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Articles => "articles",
            Metric::Notebooks => "notebooks",
            Metric::Executed => "executed",
            Metric::Exceptions => "exceptions",
            Metric::Identical => "identical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown metric {s:?}")))
    }

    pub fn denominator(self) -> &'static str {
        match self {
            Metric::Articles => "articles in corpus",
            Metric::Notebooks => "notebooks in corpus",
            _ => "notebooks in group",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionRow {
    pub value: String,
    pub count: u64,
    pub denominator: u64,
    pub share: Option<f64>,
}

pub const UNKNOWN: &str = "unknown";

/// Whole calendar years from `created` to `reference`.
pub fn repo_age_years(created: NaiveDate, reference: NaiveDate) -> Option<i32> {
    if created > reference {
        return None;
    }
    let mut years = reference.year() - created.year();
    if (reference.month(), reference.day()) < (created.month(), created.day()) {
        years -= 1;
    }
    Some(years)
}

struct Facts {
    /// article id -> values per article-level dimension
    article_values: BTreeMap<i64, BTreeMap<Dimension, BTreeSet<String>>>,
    /// repo id -> citing article ids
    repo_articles: BTreeMap<i64, BTreeSet<i64>>,
    repo_age: BTreeMap<i64, String>,
    /// notebook id -> (repo id, language, interpreter)
    notebooks: BTreeMap<i64, (i64, String, String)>,
}

fn load_facts(store: &Store, reference: NaiveDate) -> Result<Facts> {
    let conn = store.conn();
    let mut article_values: BTreeMap<i64, BTreeMap<Dimension, BTreeSet<String>>> = BTreeMap::new();
    let mut st = conn.prepare(
        "SELECT a.id, COALESCE(j.title, j.issn), a.published, a.mesh_terms, a.subject_tags
         FROM articles a LEFT JOIN journals j ON j.id = a.journal_id",
    )?;
    let rows = st
        .query_map([], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, Option<String>>(1)?,
                r.get::<_, Option<String>>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, String>(4)?,
            ))
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    for (id, journal, published, mesh, tags) in rows {
        let mut m = BTreeMap::new();
        let one = |v: Option<String>| v.into_iter().filter(|s| !s.trim().is_empty()).collect::<BTreeSet<_>>();
        m.insert(Dimension::Journal, one(journal));
        m.insert(
            Dimension::Year,
            one(published.and_then(|p| p.get(..4).map(str::to_string))),
        );
        let list = |s: &str| -> Result<BTreeSet<String>> {
            Ok(serde_json::from_str::<Vec<String>>(s)?
                .into_iter()
                .filter(|t| !t.trim().is_empty())
                .collect())
        };
        m.insert(Dimension::MeshTerm, list(&mesh)?);
        m.insert(Dimension::ArticleType, list(&tags)?);
        article_values.insert(id, m);
    }

    let mut repo_articles: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
    let mut st = conn.prepare("SELECT repo_id, article_id FROM article_repos")?;
    for row in st.query_map([], |r| Ok((r.get::<_, i64>(0)?, r.get::<_, i64>(1)?)))? {
        let (repo, art) = row?;
        repo_articles.entry(repo).or_default().insert(art);
    }

    let mut repo_age = BTreeMap::new();
    let mut st = conn.prepare("SELECT id, created_at FROM repositories WHERE created_at IS NOT NULL")?;
    for row in st.query_map([], |r| Ok((r.get::<_, i64>(0)?, r.get::<_, String>(1)?)))? {
        let (id, created) = row?;
        let age = DateTime::parse_from_rfc3339(&created)
            .ok()
            .and_then(|t| repo_age_years(t.with_timezone(&Utc).date_naive(), reference));
        if let Some(a) = age {
            repo_age.insert(id, a.to_string());
        }
    }

    let mut notebooks = BTreeMap::new();
    let mut st = conn.prepare("SELECT id, repo_id, language, language_version FROM notebooks")?;
    for row in st.query_map([], |r| {
        Ok((
            r.get::<_, i64>(0)?,
            r.get::<_, i64>(1)?,
            r.get::<_, Option<String>>(2)?,
            r.get::<_, Option<String>>(3)?,
        ))
    })? {
        let (id, repo, lang, ver) = row?;
        let or_unknown = |v: Option<String>| {
            v.filter(|s| !s.trim().is_empty())
                .unwrap_or_else(|| UNKNOWN.to_string())
        };
        notebooks.insert(id, (repo, or_unknown(lang), or_unknown(ver)));
    }
    Ok(Facts {
        article_values,
        repo_articles,
        repo_age,
        notebooks,
    })
}

impl Facts {
    fn repo_values(&self, repo: i64, dim: Dimension) -> BTreeSet<String> {
        match dim {
            Dimension::RepoAge => self.repo_age.get(&repo).cloned().into_iter().collect(),
            Dimension::Language | Dimension::InterpreterVersion => self
                .notebooks
                .values()
                .filter(|(r, ..)| *r == repo)
                .map(|(_, l, v)| {
                    if dim == Dimension::Language {
                        l.clone()
                    } else {
                        v.clone()
                    }
                })
                .collect(),
            _ => self
                .repo_articles
                .get(&repo)
                .into_iter()
                .flatten()
                .filter_map(|a| self.article_values.get(a).and_then(|m| m.get(&dim)))
                .flatten()
                .cloned()
                .collect(),
        }
    }

    fn notebook_values(&self, nb: i64, dim: Dimension) -> BTreeSet<String> {
        let (repo, lang, ver) = &self.notebooks[&nb];
        match dim {
            Dimension::Language => [lang.clone()].into(),
            Dimension::InterpreterVersion => [ver.clone()].into(),
            _ => self.repo_values(*repo, dim),
        }
    }

    fn article_values(&self, art: i64, dim: Dimension) -> BTreeSet<String> {
        match dim {
            Dimension::Journal | Dimension::Year | Dimension::MeshTerm | Dimension::ArticleType => {
                self.article_values[&art][&dim].clone()
            }
            _ => self
                .repo_articles
                .iter()
                .filter(|(_, arts)| arts.contains(&art))
                .flat_map(|(repo, _)| self.repo_values(*repo, dim))
                .collect(),
        }
    }
}

fn with_unknown(mut s: BTreeSet<String>) -> BTreeSet<String> {
    if s.is_empty() {
        s.insert(UNKNOWN.to_string());
    }
    s
}

/// Group-by over one dimension. A subject with several values (an article
/// with two MeSH terms, say) counts once under each; one with none counts
/// under `unknown`. Rows are sorted by value with `unknown` last.
pub fn dimension_report(
    store: &Store,
    dimension: Dimension,
    metric: Metric,
    reference: NaiveDate,
) -> Result<Vec<DimensionRow>> {
    let facts = load_facts(store, reference)?;
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let total;
    match metric {
        Metric::Articles => {
            total = facts.article_values.len() as u64;
            for &a in facts.article_values.keys() {
                for v in with_unknown(facts.article_values(a, dimension)) {
                    counts.entry(v).or_default().0 += 1;
                }
            }
        }
        _ => {
            let latest = latest_executions(store)?;
            let diffs = store.diff_counts()?;
            total = facts.notebooks.len() as u64;
            for &nb in facts.notebooks.keys() {
                let e = latest.get(&nb);
                let hit = match metric {
                    Metric::Notebooks => true,
                    Metric::Executed => e.is_some(),
                    Metric::Exceptions => e.is_some_and(|e| e.status == ExecStatus::Exception),
                    Metric::Identical => {
                        e.is_some_and(|e| e.status == ExecStatus::Completed && diffs.get(&(nb, e.attempt)) == Some(&0))
                    }
                    Metric::Articles => unreachable!(),
                };
                for v in with_unknown(facts.notebook_values(nb, dimension)) {
                    let c = counts.entry(v).or_default();
                    c.0 += hit as u64;
                    c.1 += 1;
                }
            }
        }
    }
    let mut rows: Vec<DimensionRow> = counts
        .into_iter()
        .filter(|(_, (n, group))| *n > 0 || !matches!(metric, Metric::Articles | Metric::Notebooks) && *group > 0)
        .map(|(value, (n, group))| {
            let denominator = match metric {
                Metric::Articles | Metric::Notebooks => total,
                _ => group,
            };
            DimensionRow {
                value,
                count: n,
                denominator,
                share: (denominator > 0).then(|| n as f64 / denominator as f64),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (a.value == UNKNOWN)
            .cmp(&(b.value == UNKNOWN))
            .then_with(|| numeric_aware(&a.value, &b.value))
    });
    Ok(rows)
}

fn numeric_aware(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x
            .partial_cmp(&y)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleUsage {
    pub module: String,
    pub notebooks: u64,
}

/// Notebooks importing each non-local top-level module, most used first,
/// ties by name.
pub fn aggregate_module_usage(store: &Store) -> Result<Vec<ModuleUsage>> {
    let mut st = store.conn().prepare(
        "SELECT top_level, COUNT(DISTINCT notebook_id) AS n FROM imports WHERE locality != 'local'
         GROUP BY top_level ORDER BY n DESC, top_level ASC",
    )?;
    let rows = st
        .query_map([], |r| {
            Ok(ModuleUsage {
                module: r.get(0)?,
                notebooks: r.get::<_, i64>(1)? as u64,
            })
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StyleRow {
    pub code: String,
    pub description: String,
    pub findings: u64,
    pub notebooks: u64,
    /// Fraction of analyzed notebooks with at least one finding.
    pub share: f64,
}

pub fn style_summary(store: &Store) -> Result<Vec<StyleRow>> {
    let analyzed = count(
        store,
        "SELECT COUNT(*) FROM notebooks WHERE analyzed = 1 AND language = 'python'",
    )?;
    let mut st = store.conn().prepare(
        "SELECT code, COUNT(*), COUNT(DISTINCT notebook_id) FROM style_findings GROUP BY code ORDER BY code",
    )?;
    let found: BTreeMap<String, (u64, u64)> = st
        .query_map([], |r| {
            Ok((
                r.get::<_, String>(0)?,
                (r.get::<_, i64>(1)? as u64, r.get::<_, i64>(2)? as u64),
            ))
        })?
        .collect::<rusqlite::Result<_>>()?;
    Ok(crate::analysis::STYLE_CODES
        .iter()
        .map(|(code, description)| {
            let (findings, notebooks) = found.get(*code).copied().unwrap_or((0, 0));
            StyleRow {
                code: code.to_string(),
                description: description.to_string(),
                findings,
                notebooks,
                share: if analyzed == 0 {
                    0.0
                } else {
                    notebooks as f64 / analyzed as f64
                },
            }
        })
        .collect())
}

/// Outcome label counts with the policy named in not-attempted labels.
pub fn outcome_summary(store: &Store) -> Result<BTreeMap<String, u64>> {
    store.outcome_counts()
}

// ---- writers

fn round(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Rounds every float so reruns serialize identically.
fn canonical(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => json!(round(n.as_f64().unwrap_or(0.0))),
        Value::Array(a) => Value::Array(a.into_iter().map(canonical).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonical(v))).collect()),
        other => other,
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Writes `<name>.json` and `<name>.csv`. `rows` must be an array of
/// flat objects sharing the keys of the first row.
fn write_pair(dir: &Path, name: &str, json_doc: Value, rows: &[Value]) -> Result<()> {
    let json_doc = canonical(json_doc);
    let mut text = serde_json::to_string_pretty(&json_doc)?;
    text.push('\n');
    std::fs::write(dir.join(format!("{name}.json")), text)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv"))).map_err(csv_err)?;
    let rows: Vec<Value> = rows.iter().cloned().map(canonical).collect();
    if let Some(first) = rows.first().and_then(Value::as_object) {
        let header: Vec<&String> = first.keys().collect();
        w.write_record(&header).map_err(csv_err)?;
        for r in &rows {
            let obj = r.as_object().expect("rows are objects");
            w.write_record(header.iter().map(|k| cell_text(obj.get(*k).unwrap_or(&Value::Null))))
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn rows_of<T: Serialize>(items: &[T]) -> Vec<Value> {
    items
        .iter()
        .map(|i| serde_json::to_value(i).expect("serializes"))
        .collect()
}

/// Writes the full report set into `dir`: funnel, outcomes, exceptions,
/// groups, modules, style and one file per dimension.
pub fn write_reports(store: &Store, dir: &Path, reference: NaiveDate) -> Result<FunnelReport> {
    std::fs::create_dir_all(dir)?;
    let funnel = funnel_report(store)?;
    let funnel_rows: Vec<Value> = funnel
        .stages
        .iter()
        .map(|(s, n)| json!({"stage": s, "count": n}))
        .collect();
    write_pair(dir, "funnel", funnel.to_json(), &funnel_rows)?;

    let outcomes = outcome_summary(store)?;
    let outcome_rows: Vec<Value> = outcomes
        .iter()
        .map(|(o, n)| json!({"outcome": o, "count": n}))
        .collect();
    write_pair(dir, "outcomes", json!(outcomes), &outcome_rows)?;

    let ranking = exception_ranking(store)?;
    let rows = rows_of(&ranking);
    write_pair(
        dir,
        "exceptions",
        json!({"denominator": "executed notebooks", "executed": funnel.get("executed"), "rows": rows}),
        &rows,
    )?;

    let groups = group_comparison(store)?;
    let group_rows: Vec<Value> = [("different", &groups.different), ("identical", &groups.identical)]
        .into_iter()
        .map(|(name, g)| {
            let mut obj = serde_json::Map::new();
            obj.insert("group".into(), json!(name));
            let stats = serde_json::to_value(g).expect("serializes");
            for key in GROUP_KEYS {
                obj.insert(key.to_string(), stats.get(key).cloned().unwrap_or(Value::Null));
            }
            Value::Object(obj)
        })
        .collect();
    write_pair(dir, "groups", serde_json::to_value(&groups)?, &group_rows)?;

    let modules = aggregate_module_usage(store)?;
    let rows = rows_of(&modules);
    write_pair(
        dir,
        "modules",
        json!({"denominator": "notebooks importing the module", "rows": rows}),
        &rows,
    )?;

    let style = style_summary(store)?;
    let rows = rows_of(&style);
    write_pair(
        dir,
        "style",
        json!({"denominator": "analyzed notebooks", "rows": rows}),
        &rows,
    )?;

    for dim in Dimension::ALL {
        let mut doc = serde_json::Map::new();
        let mut flat = Vec::new();
        for metric in Metric::ALL {
            let rows = dimension_report(store, dim, metric, reference)?;
            for r in &rows {
                flat.push(json!({
                    "metric": metric.as_str(),
                    "value": r.value,
                    "count": r.count,
                    "denominator": r.denominator,
                    "share": r.share,
                }));
            }
            doc.insert(
                metric.as_str().to_string(),
                json!({"denominator": metric.denominator(), "rows": rows_of(&rows)}),
            );
        }
        write_pair(dir, &format!("dimension_{}", dim.as_str()), Value::Object(doc), &flat)?;
    }
    Ok(funnel)
}

const GROUP_KEYS: [&str; 10] = [
    "notebooks",
    "with_dependency_file",
    "mean_total_cells",
    "mean_code_cells",
    "mean_markdown_cells",
    "mean_empty_cells",
    "mean_md_code_ratio",
    "mean_diff_count",
    "mean_execution_time_s",
    "mean_time_per_code_cell_s",
];
