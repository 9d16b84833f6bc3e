//! Comparing re-executed outputs with stored ones, and the per-notebook
//! outcome that falls out of every stage's result.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::OnceLock;

use base64::Engine;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::AttemptPolicy;
use crate::error::{Error, Result};
use crate::exec::{ExceptionClass, ExecStatus, ExecutionRecord};
use crate::inventory::{CellKind, CellRecord, OutputBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scrub {
    /// `0x7f3a9c2d1e40` style object addresses.
    HexAddress,
    /// ISO-8601 date-times.
    IsoTimestamp,
}

/// Comparison policy. The default is exact: nothing scrubbed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffPolicy {
    pub scrub: Vec<Scrub>,
}

impl DiffPolicy {
    fn apply(&self, text: &str) -> String {
        let mut out = text.to_string();
        for s in &self.scrub {
            out = s.pattern().replace_all(&out, "<scrubbed>").into_owned();
        }
        out
    }
}

impl Scrub {
    fn pattern(self) -> &'static Regex {
        static HEX: OnceLock<Regex> = OnceLock::new();
        static ISO: OnceLock<Regex> = OnceLock::new();
        match self {
            Scrub::HexAddress => HEX.get_or_init(|| Regex::new(r"0x[0-9a-fA-F]{4,}").unwrap()),
            Scrub::IsoTimestamp => ISO.get_or_init(|| {
                Regex::new(r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?").unwrap()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    MissingOutput,
    ExtraOutput,
    ChangedOutput,
}

impl DiffKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiffKind::MissingOutput => "missing_output",
            DiffKind::ExtraOutput => "extra_output",
            DiffKind::ChangedOutput => "changed_output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub cell_index: usize,
    pub kind: DiffKind,
    pub media_type: String,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identical,
    Different,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffResult {
    pub notebook_id: i64,
    pub verdict: Verdict,
    pub diff_count: u64,
    pub diffs: Vec<DiffEntry>,
}

impl DiffResult {
    /// Short human-readable report.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "notebook {}: {:?}, {} difference(s)\n",
            self.notebook_id, self.verdict, self.diff_count
        );
        for d in &self.diffs {
            s.push_str(&format!(
                "  cell {} {} [{}] {}\n",
                d.cell_index,
                d.kind.as_str(),
                d.media_type,
                d.summary
            ));
        }
        s
    }
}

/// An output reduced to what the comparison looks at.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Norm {
    Stream { name: String, text: String },
    Rich(BTreeMap<String, Vec<u8>>),
    Error { ename: String, evalue: String },
}

impl Norm {
    fn media_type(&self) -> String {
        match self {
            Norm::Stream { .. } => "text/plain".into(),
            Norm::Rich(m) => m
                .keys()
                .next()
                .cloned()
                .unwrap_or_else(|| "application/octet-stream".into()),
            Norm::Error { .. } => "application/vnd.error".into(),
        }
    }

    fn excerpt(&self) -> String {
        let raw = match self {
            Norm::Stream { name, text } => format!("{name}: {text}"),
            Norm::Rich(m) => match m.get("text/plain") {
                Some(t) => String::from_utf8_lossy(t).into_owned(),
                None => format!(
                    "{} ({} bytes)",
                    self.media_type(),
                    m.values().next().map_or(0, Vec::len)
                ),
            },
            Norm::Error { ename, evalue } => format!("{ename}: {evalue}"),
        };
        let mut s: String = raw.chars().take(60).collect();
        if raw.chars().count() > 60 {
            s.push_str("...");
        }
        s.replace('\n', "\\n")
    }
}

fn is_textual(mime: &str) -> bool {
    mime.starts_with("text/") || mime.ends_with("+xml") || mime.ends_with("json") || mime == "application/javascript"
}

fn payload_bytes(mime: &str, v: &Value, policy: &DiffPolicy) -> Vec<u8> {
    match v {
        Value::String(s) if is_textual(mime) => policy.apply(s).into_bytes(),
        Value::String(s) => {
            let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            base64::engine::general_purpose::STANDARD
                .decode(compact.as_bytes())
                .unwrap_or_else(|_| s.as_bytes().to_vec())
        }
        other => serde_json::to_vec(other).unwrap_or_default(),
    }
}

fn normalize(outputs: &[OutputBundle], policy: &DiffPolicy) -> Vec<Norm> {
    let mut out: Vec<Norm> = Vec::new();
    for o in outputs {
        let n = match o.output_type.as_str() {
            "stream" => {
                let name = o.name.clone().unwrap_or_else(|| "stdout".into());
                let text = policy.apply(o.text.as_deref().unwrap_or(""));
                if let Some(Norm::Stream { name: prev, text: acc }) = out.last_mut() {
                    if *prev == name {
                        acc.push_str(&text);
                        continue;
                    }
                }
                Norm::Stream { name, text }
            }
            "error" => Norm::Error {
                ename: o.ename.clone().unwrap_or_default(),
                evalue: policy.apply(o.evalue.as_deref().unwrap_or("")),
            },
            _ => Norm::Rich(
                o.data
                    .iter()
                    .map(|(k, v)| (k.clone(), payload_bytes(k, v, policy)))
                    .collect(),
            ),
        };
        out.push(n);
    }
    out
}

fn changed_media(a: &Norm, b: &Norm) -> String {
    if let (Norm::Rich(x), Norm::Rich(y)) = (a, b) {
        let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
        if let Some(k) = keys.into_iter().find(|k| x.get(*k) != y.get(*k)) {
            return k.clone();
        }
    }
    a.media_type()
}

/// Compares stored outputs with re-executed ones, cell by cell and output
/// by output. Each missing, extra or changed output counts once.
pub fn compare(original: &[CellRecord], executed: &ExecutionRecord, policy: &DiffPolicy) -> DiffResult {
    let by_index: HashMap<usize, &[OutputBundle]> = executed
        .cell_results
        .iter()
        .map(|c| (c.index, c.outputs.as_slice()))
        .collect();
    let mut diffs = Vec::new();
    for cell in original.iter().filter(|c| c.kind == CellKind::Code) {
        let stored = normalize(&cell.outputs, policy);
        let fresh = normalize(by_index.get(&cell.index).copied().unwrap_or(&[]), policy);
        for i in 0..stored.len().max(fresh.len()) {
            let entry = match (stored.get(i), fresh.get(i)) {
                (Some(a), Some(b)) if a == b => continue,
                (Some(a), Some(b)) => DiffEntry {
                    cell_index: cell.index,
                    kind: DiffKind::ChangedOutput,
                    media_type: changed_media(a, b),
                    summary: format!("{} -> {}", a.excerpt(), b.excerpt()),
                },
                (Some(a), None) => DiffEntry {
                    cell_index: cell.index,
                    kind: DiffKind::MissingOutput,
                    media_type: a.media_type(),
                    summary: a.excerpt(),
                },
                (None, Some(b)) => DiffEntry {
                    cell_index: cell.index,
                    kind: DiffKind::ExtraOutput,
                    media_type: b.media_type(),
                    summary: b.excerpt(),
                },
                (None, None) => unreachable!(),
            };
            diffs.push(entry);
        }
    }
    DiffResult {
        notebook_id: executed.notebook_id,
        verdict: if diffs.is_empty() {
            Verdict::Identical
        } else {
            Verdict::Different
        },
        diff_count: diffs.len() as u64,
        diffs,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReproOutcome {
    GoneRepo,
    NoNotebooks,
    InvalidNotebook,
    NonPython,
    NotAttempted(String),
    InstallFailed,
    Exception(String),
    Timeout,
    InfrastructureError,
    SuccessDifferent,
    SuccessIdentical,
}

impl ReproOutcome {
    /// `exception:<name>` and `not_attempted:<policy>` carry their payload.
    pub fn label(&self) -> String {
        match self {
            ReproOutcome::GoneRepo => "gone_repo".into(),
            ReproOutcome::NoNotebooks => "no_notebooks".into(),
            ReproOutcome::InvalidNotebook => "invalid_notebook".into(),
            ReproOutcome::NonPython => "non_python".into(),
            ReproOutcome::NotAttempted(p) => format!("not_attempted:{p}"),
            ReproOutcome::InstallFailed => "install_failed".into(),
            ReproOutcome::Exception(c) => format!("exception:{c}"),
            ReproOutcome::Timeout => "timeout".into(),
            ReproOutcome::InfrastructureError => "infrastructure_error".into(),
            ReproOutcome::SuccessDifferent => "success_different".into(),
            ReproOutcome::SuccessIdentical => "success_identical".into(),
        }
    }

    pub fn parse_label(s: &str) -> Option<Self> {
        if let Some(c) = s.strip_prefix("exception:") {
            return Some(ReproOutcome::Exception(c.to_string()));
        }
        if let Some(p) = s.strip_prefix("not_attempted:") {
            return Some(ReproOutcome::NotAttempted(p.to_string()));
        }
        Some(match s {
            "gone_repo" => ReproOutcome::GoneRepo,
            "no_notebooks" => ReproOutcome::NoNotebooks,
            "invalid_notebook" => ReproOutcome::InvalidNotebook,
            "non_python" => ReproOutcome::NonPython,
            "install_failed" => ReproOutcome::InstallFailed,
            "timeout" => ReproOutcome::Timeout,
            "infrastructure_error" => ReproOutcome::InfrastructureError,
            "success_different" => ReproOutcome::SuccessDifferent,
            "success_identical" => ReproOutcome::SuccessIdentical,
            _ => return None,
        })
    }

    /// Variant name without payload.
    pub fn kind(&self) -> &'static str {
        match self {
            ReproOutcome::GoneRepo => "gone_repo",
            ReproOutcome::NoNotebooks => "no_notebooks",
            ReproOutcome::InvalidNotebook => "invalid_notebook",
            ReproOutcome::NonPython => "non_python",
            ReproOutcome::NotAttempted(_) => "not_attempted",
            ReproOutcome::InstallFailed => "install_failed",
            ReproOutcome::Exception(_) => "exception",
            ReproOutcome::Timeout => "timeout",
            ReproOutcome::InfrastructureError => "infrastructure_error",
            ReproOutcome::SuccessDifferent => "success_different",
            ReproOutcome::SuccessIdentical => "success_identical",
        }
    }

    /// Whether the outcome belongs to a repository rather than a notebook.
    pub fn is_repo_level(&self) -> bool {
        matches!(self, ReproOutcome::GoneRepo | ReproOutcome::NoNotebooks)
    }
}

impl fmt::Display for ReproOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Everything the stages recorded about one subject. For a repository
/// without notebooks (or an inaccessible one) `notebook` is `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FunnelState {
    pub repo_accessible: bool,
    pub notebook: Option<NotebookStages>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NotebookStages {
    pub valid: Option<bool>,
    pub python: Option<bool>,
    /// Set when the attempt policy excluded the notebook.
    pub not_attempted: Option<AttemptPolicy>,
    pub planned: bool,
    /// `Some(true)` ready, `Some(false)` install failed.
    pub provisioned: Option<bool>,
    pub execution: Option<(ExecStatus, Option<ExceptionClass>)>,
    pub diff_count: Option<u64>,
}

/// The earliest failing stage decides. Contradictory stage data (an
/// execution without a plan, say) is a pipeline bug and an error.
pub fn classify_outcome(state: &FunnelState) -> Result<ReproOutcome> {
    let bug = |m: &str| Err(Error::integrity("outcomes", m));
    let Some(nb) = &state.notebook else {
        return Ok(if state.repo_accessible {
            ReproOutcome::NoNotebooks
        } else {
            ReproOutcome::GoneRepo
        });
    };
    if !state.repo_accessible {
        return bug("notebook inventoried in an inaccessible repository");
    }
    let later_stage = nb.planned || nb.provisioned.is_some() || nb.execution.is_some() || nb.diff_count.is_some();
    match nb.valid {
        None => return bug("notebook without inventory result"),
        Some(false) if later_stage => return bug("invalid notebook has later stage data"),
        Some(false) => return Ok(ReproOutcome::InvalidNotebook),
        Some(true) => {}
    }
    match nb.python {
        None => return bug("notebook without language result"),
        Some(false) if later_stage => return bug("non-python notebook has later stage data"),
        Some(false) => return Ok(ReproOutcome::NonPython),
        Some(true) => {}
    }
    if let Some(policy) = nb.not_attempted {
        if later_stage {
            return bug("unattempted notebook has later stage data");
        }
        return Ok(ReproOutcome::NotAttempted(policy.as_str().to_string()));
    }
    if !nb.planned {
        return bug("attempted notebook without plan");
    }
    match nb.provisioned {
        None if nb.execution.is_some() => return bug("execution without provision"),
        None => return bug("planned notebook without provision result"),
        Some(false) if nb.execution.is_some() => return bug("execution after failed install"),
        Some(false) => return Ok(ReproOutcome::InstallFailed),
        Some(true) => {}
    }
    let Some((status, class)) = &nb.execution else {
        return bug("provisioned notebook without execution");
    };
    if *status != ExecStatus::Completed && nb.diff_count.is_some() {
        return bug("diff of an execution that did not complete");
    }
    Ok(match status {
        ExecStatus::Exception => {
            ReproOutcome::Exception(class.clone().unwrap_or(ExceptionClass::Unknown).label().to_string())
        }
        ExecStatus::Timeout => ReproOutcome::Timeout,
        ExecStatus::InfrastructureError => ReproOutcome::InfrastructureError,
        ExecStatus::Completed => match nb.diff_count {
            None => return bug("completed execution without diff"),
            Some(0) => ReproOutcome::SuccessIdentical,
            Some(_) => ReproOutcome::SuccessDifferent,
        },
    })
}
