//! Re-executing notebooks through an external executor and classifying
//! what happened.

pub mod record;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use record::{CellStatus, RecordCell, RecordFile, Traceback, CELL_TIMEOUT_ENAME, RECORD_SCHEMA_VERSION};

use crate::env::EnvHandle;
use crate::error::{Error, Result};
use crate::inventory::{output_from_json, OutputBundle};
use crate::proc::{find_program, run_bounded, Ending};

const KNOWN: &[&str] = &[
    "ModuleNotFoundError",
    "ImportError",
    "FileNotFoundError",
    "IOError",
    "NameError",
    "AttributeError",
    "ValueError",
    "TypeError",
    "KeyError",
    "CalledProcessError",
    "HTTPError",
];

/// Exception bucket. Known names map to themselves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "bucket", content = "name", rename_all = "snake_case")]
pub enum ExceptionClass {
    Known(String),
    Other(String),
    Unknown,
}

impl ExceptionClass {
    pub fn from_ename(ename: Option<&str>) -> Self {
        match ename.map(str::trim).filter(|e| !e.is_empty()) {
            None => ExceptionClass::Unknown,
            Some(e) if KNOWN.contains(&e) => ExceptionClass::Known(e.to_string()),
            Some(e) => ExceptionClass::Other(e.to_string()),
        }
    }

    /// The exception name, or `unknown`.
    pub fn label(&self) -> &str {
        match self {
            ExceptionClass::Known(n) | ExceptionClass::Other(n) => n,
            ExceptionClass::Unknown => "unknown",
        }
    }

    pub fn parse_label(s: &str) -> Self {
        if s == "unknown" {
            ExceptionClass::Unknown
        } else {
            ExceptionClass::from_ename(Some(s))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Completed,
    Exception,
    Timeout,
    InfrastructureError,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Completed => "completed",
            ExecStatus::Exception => "exception",
            ExecStatus::Timeout => "timeout",
            ExecStatus::InfrastructureError => "infrastructure_error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "completed" => ExecStatus::Completed,
            "exception" => ExecStatus::Exception,
            "timeout" => ExecStatus::Timeout,
            "infrastructure_error" => ExecStatus::InfrastructureError,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub status: CellStatus,
    pub outputs: Vec<OutputBundle>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstException {
    pub ename: Option<String>,
    pub evalue: Option<String>,
    pub traceback: String,
    pub cell_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub notebook_id: i64,
    pub env_id: String,
    pub attempt: u32,
    pub status: ExecStatus,
    pub cell_results: Vec<CellResult>,
    pub first_exception: Option<FirstException>,
    /// Interpreter version the executor observed.
    pub interpreter: Option<String>,
    /// Why the run counts as an infrastructure error, if it does.
    pub detail: Option<String>,
    pub total_duration: f64,
    pub started_at: DateTime<Utc>,
}

/// Bucket for an exception record; `None` unless the status is `exception`.
pub fn classify_exception(record: &ExecutionRecord) -> Option<ExceptionClass> {
    if record.status != ExecStatus::Exception {
        return None;
    }
    Some(ExceptionClass::from_ename(
        record.first_exception.as_ref().and_then(|e| e.ename.as_deref()),
    ))
}

/// Executor invocation. `prefix_args` may use `{env}` and `{python}`; the
/// contract flags are appended after them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub program: String,
    pub prefix_args: Vec<String>,
    pub notebook_timeout: Duration,
    pub cell_timeout: Duration,
    pub output_cap: u64,
    pub env: Vec<(String, String)>,
    /// Points proxy variables at a closed port and sets `NBREPRO_NO_NETWORK=1`.
    pub no_network: bool,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            program: "conda".into(),
            prefix_args: [
                "run",
                "--no-capture-output",
                "-n",
                "{env}",
                "python",
                "-m",
                "nbrepro_shim",
            ]
            .map(String::from)
            .to_vec(),
            notebook_timeout: Duration::from_secs(60 * 60),
            cell_timeout: Duration::from_secs(10 * 60),
            output_cap: 10 * 1024 * 1024,
            env: Vec::new(),
            no_network: false,
        }
    }
}

impl ExecutorConfig {
    pub fn check(&self) -> Result<()> {
        find_program(&self.program)
            .map(|_| ())
            .ok_or_else(|| Error::Config(format!("executor `{}` not found", self.program)))
    }
}

/// What to run: one attempt of one notebook in one environment.
#[derive(Debug, Clone)]
pub struct ExecutionJob<'a> {
    pub notebook_id: i64,
    pub attempt: u32,
    /// Absolute path of the notebook inside its clone.
    pub notebook_path: &'a Path,
    pub env: &'a EnvHandle,
    /// Directory for the record file.
    pub scratch: &'a Path,
}

fn record_path(job: &ExecutionJob) -> PathBuf {
    job.scratch
        .join(format!("nb{}-a{}.record.json", job.notebook_id, job.attempt))
}

/// Runs the executor and turns its record into an [`ExecutionRecord`].
/// Never fails: every failure mode becomes a status.
pub fn execute_notebook(job: &ExecutionJob, cfg: &ExecutorConfig) -> ExecutionRecord {
    let started_at = Utc::now();
    let rec_path = record_path(job);
    let _ = std::fs::remove_file(&rec_path);
    let workdir = job.notebook_path.parent().unwrap_or(Path::new("."));
    let mut cmd = Command::new(&cfg.program);
    cmd.args(
        cfg.prefix_args
            .iter()
            .map(|a| a.replace("{env}", &job.env.name).replace("{python}", &job.env.python)),
    )
    .arg("--notebook")
    .arg(job.notebook_path)
    .arg("--output-record")
    .arg(&rec_path)
    .arg("--cell-timeout")
    .arg(cfg.cell_timeout.as_secs_f64().to_string())
    .arg("--workdir")
    .arg(workdir)
    .current_dir(workdir)
    .envs(cfg.env.iter().map(|(k, v)| (k, v)))
    .env("NBREPRO_ENV_NAME", &job.env.name);
    if cfg.no_network {
        for var in ["http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY"] {
            cmd.env(var, "http://127.0.0.1:9");
        }
        cmd.env("NBREPRO_NO_NETWORK", "1");
    }

    let mut out = ExecutionRecord {
        notebook_id: job.notebook_id,
        env_id: job.env.name.clone(),
        attempt: job.attempt,
        status: ExecStatus::InfrastructureError,
        cell_results: Vec::new(),
        first_exception: None,
        interpreter: None,
        detail: None,
        total_duration: 0.0,
        started_at,
    };
    let finished = match run_bounded(cmd, cfg.notebook_timeout, cfg.output_cap) {
        Ok(f) => f,
        Err(e) => {
            out.detail = Some(format!("cannot start executor: {e}"));
            return out;
        }
    };
    out.total_duration = finished.elapsed.as_secs_f64();
    match finished.ending {
        Ending::TimedOut => {
            out.status = ExecStatus::Timeout;
            out.detail = Some(format!("notebook exceeded {:?}", cfg.notebook_timeout));
            return out;
        }
        Ending::OutputFlood => {
            out.detail = Some("output flood".into());
            return out;
        }
        Ending::Exited(Some(0)) => {}
        Ending::Exited(code) => {
            out.detail = Some(format!("executor exited with {code:?}: {}", finished.tail(20)));
            return out;
        }
    }
    match std::fs::metadata(&rec_path) {
        Ok(m) if m.len() > cfg.output_cap => {
            out.detail = Some("output flood".into());
            return out;
        }
        Ok(_) => {}
        Err(_) => {
            out.detail = Some(format!("executor wrote no record: {}", finished.tail(20)));
            return out;
        }
    }
    let parsed = std::fs::read_to_string(&rec_path)
        .map_err(Error::from)
        .and_then(|t| RecordFile::parse(&t));
    match parsed {
        Ok(rec) => apply_record(&mut out, &rec),
        Err(e) => out.detail = Some(format!("unreadable record: {e}")),
    }
    out
}

/// Fills status, cells and first exception from a parsed record file.
pub fn apply_record(out: &mut ExecutionRecord, rec: &RecordFile) {
    out.interpreter = rec.interpreter.clone();
    out.cell_results = rec
        .cells
        .iter()
        .map(|c| CellResult {
            index: c.index,
            status: c.status,
            outputs: c.outputs.iter().filter_map(output_from_json).collect(),
            duration: c.duration_s,
        })
        .collect();
    let longest = rec.cells.iter().map(|c| c.duration_s).fold(0.0, f64::max);
    out.total_duration = out.total_duration.max(longest);
    out.detail = None;
    match rec.first_error() {
        None => out.status = ExecStatus::Completed,
        Some(c) => {
            // The executor may leave ename out and put it in an error output only.
            let from_output = c
                .outputs
                .iter()
                .filter_map(output_from_json)
                .find(|o| o.output_type == "error")
                .and_then(|o| o.ename);
            let ename = c.ename.clone().filter(|e| !e.is_empty()).or(from_output);
            out.status = if ename.as_deref() == Some(CELL_TIMEOUT_ENAME) {
                ExecStatus::Timeout
            } else {
                ExecStatus::Exception
            };
            out.first_exception = Some(FirstException {
                ename,
                evalue: c.evalue.clone(),
                traceback: c.traceback.as_ref().map(Traceback::text).unwrap_or_default(),
                cell_index: c.index,
            });
        }
    }
}
