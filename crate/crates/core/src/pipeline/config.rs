use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::diff::{DiffPolicy, Scrub};
use crate::env::{AttemptPolicy, ManagerAdapter, DEFAULT_INTERPRETER};
use crate::error::{Error, Result};
use crate::exec::ExecutorConfig;
use crate::net::RetryPolicy;

pub const MOCK_MANAGER: &str = "nbrepro-mock-manager";
pub const MOCK_EXECUTOR: &str = "nbrepro-mock-exec";
pub const DEFAULT_REFERENCE_DATE: &str = "2023-03-27";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum InputMode {
    LiveSearch,
    XmlDirectory,
    RepoListFile,
}

/// Every knob, all optional: a config file and the command line each fill
/// one of these and the command line wins.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Corpus directory, article XML directory, or repository list file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Inferred from --input when omitted.
    #[arg(long, value_enum)]
    pub input_mode: Option<InputMode>,
    /// Literature search query (live_search).
    #[arg(long)]
    pub query: Option<String>,
    /// Offline hosting fixtures; defaults to <input>/hosting.
    #[arg(long)]
    pub hosting_dir: Option<PathBuf>,
    #[arg(long)]
    pub workspace: Option<PathBuf>,
    /// Defaults to <workspace>/reports.
    #[arg(long)]
    pub report_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_policy)]
    #[serde(deserialize_with = "de_policy")]
    pub policy: Option<AttemptPolicy>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub harvest_workers: Option<usize>,
    /// Directory-backed search and hosting, mock manager and executor.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub offline: Option<bool>,
    /// Discard the workspace store and clones first.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub force: Option<bool>,
    /// Repository ages are measured to this day (YYYY-MM-DD).
    #[arg(long)]
    pub reference_date: Option<NaiveDate>,
    #[arg(long)]
    pub default_interpreter: Option<String>,
    #[arg(long)]
    pub cell_timeout_s: Option<f64>,
    #[arg(long)]
    pub notebook_timeout_s: Option<f64>,
    #[arg(long)]
    pub output_cap_bytes: Option<u64>,
    #[arg(long)]
    pub manager_timeout_s: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_network: Option<bool>,
    /// Scrub hex addresses and ISO timestamps before diffing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub scrub_volatile: Option<bool>,
    #[arg(long)]
    pub manager: Option<String>,
    /// Comma separated; `{name}` and `{python}` are substituted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub manager_create_args: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub manager_install_args: Option<Vec<String>>,
    #[arg(long)]
    pub executor: Option<String>,
    /// Comma separated; `{env}` and `{python}` are substituted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub executor_args: Option<Vec<String>>,
    #[arg(long)]
    pub search_url: Option<String>,
    #[arg(long)]
    pub hosting_url: Option<String>,
    /// Pause between requests to one service, milliseconds.
    #[arg(long)]
    pub request_delay_ms: Option<u64>,
}

fn parse_policy(s: &str) -> std::result::Result<AttemptPolicy, String> {
    AttemptPolicy::parse(s).ok_or_else(|| format!("unknown policy {s:?} (declared_only or all_python)"))
}

fn de_policy<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<AttemptPolicy>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    s.map(|s| parse_policy(&s).map_err(serde::de::Error::custom))
        .transpose()
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl Settings {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s: Settings = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative paths in a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut s.input, &mut s.hosting_dir, &mut s.workspace, &mut s.report_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: Settings) -> Settings {
        overlay!(
            self,
            top,
            input,
            input_mode,
            query,
            hosting_dir,
            workspace,
            report_dir,
            policy,
            workers,
            harvest_workers,
            offline,
            force,
            reference_date,
            default_interpreter,
            cell_timeout_s,
            notebook_timeout_s,
            output_cap_bytes,
            manager_timeout_s,
            no_network,
            scrub_volatile,
            manager,
            manager_create_args,
            manager_install_args,
            executor,
            executor_args,
            search_url,
            hosting_url,
            request_delay_ms
        );
        self
    }

    pub fn resolve(self) -> Result<PipelineConfig> {
        let offline = self.offline.unwrap_or(false);
        let mode = match (self.input_mode, &self.input, &self.query) {
            (Some(m), _, _) => m,
            (None, Some(p), _) if p.is_file() => InputMode::RepoListFile,
            (None, Some(p), _) if p.is_dir() => InputMode::XmlDirectory,
            (None, Some(p), _) => return Err(Error::Config(format!("input {} does not exist", p.display()))),
            (None, None, _) => InputMode::LiveSearch,
        };
        let input = self.input.clone();
        let need_input = |what: &str| -> Result<PathBuf> {
            input
                .clone()
                .ok_or_else(|| Error::Config(format!("input mode {what} needs --input")))
        };
        let source = match mode {
            InputMode::XmlDirectory => {
                let p = need_input("xml_directory")?;
                let dir = if p.join("articles").is_dir() {
                    p.join("articles")
                } else {
                    p
                };
                if !dir.is_dir() {
                    return Err(Error::Config(format!(
                        "article directory {} does not exist",
                        dir.display()
                    )));
                }
                InputSource::XmlDirectory(dir)
            }
            InputMode::RepoListFile => {
                let p = need_input("repo_list_file")?;
                if !p.is_file() {
                    return Err(Error::Config(format!("repository list {} does not exist", p.display())));
                }
                InputSource::RepoListFile(p)
            }
            InputMode::LiveSearch => {
                let query = crate::jats::build_search_query(self.query.as_deref())?;
                let fixture_dir = if offline {
                    let p = need_input("live_search (offline)")?;
                    Some(if p.join("articles").is_dir() {
                        p.join("articles")
                    } else {
                        p
                    })
                } else {
                    None
                };
                InputSource::LiveSearch { query, fixture_dir }
            }
        };
        let hosting_dir = if offline {
            let dir = match (&self.hosting_dir, &input) {
                (Some(d), _) => d.clone(),
                (None, Some(i)) if i.is_dir() => i.join("hosting"),
                (None, Some(i)) => i.parent().unwrap_or(Path::new(".")).join("hosting"),
                (None, None) => return Err(Error::Config("offline mode needs --hosting-dir".into())),
            };
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "hosting fixtures {} do not exist",
                    dir.display()
                )));
            }
            Some(dir)
        } else {
            None
        };

        let workspace = self.workspace.clone().unwrap_or_else(|| PathBuf::from("nbrepro-work"));
        let report_dir = self.report_dir.clone().unwrap_or_else(|| workspace.join("reports"));
        let secs = |v: Option<f64>, default: Duration, what: &str| -> Result<Duration> {
            match v {
                None => Ok(default),
                Some(s) if s > 0.0 && s.is_finite() => Ok(Duration::from_secs_f64(s)),
                Some(s) => Err(Error::Config(format!("{what} must be positive, got {s}"))),
            }
        };

        let mut manager = ManagerAdapter::default();
        let mut executor = ExecutorConfig::default();
        if offline {
            manager.program = MOCK_MANAGER.into();
            manager.create_args = ["create", "--name", "{name}", "python={python}"]
                .map(String::from)
                .to_vec();
            manager.install_args = ["install", "--name", "{name}"].map(String::from).to_vec();
            executor.program = MOCK_EXECUTOR.into();
            executor.prefix_args = Vec::new();
        }
        if let Some(p) = self.manager {
            manager.program = p;
        }
        if let Some(a) = self.manager_create_args {
            manager.create_args = a;
        }
        if let Some(a) = self.manager_install_args {
            manager.install_args = a;
        }
        manager.timeout = secs(self.manager_timeout_s, manager.timeout, "manager_timeout_s")?;
        if let Some(p) = self.executor {
            executor.program = p;
        }
        if let Some(a) = self.executor_args {
            executor.prefix_args = a;
        }
        executor.cell_timeout = secs(self.cell_timeout_s, executor.cell_timeout, "cell_timeout_s")?;
        executor.notebook_timeout = secs(self.notebook_timeout_s, executor.notebook_timeout, "notebook_timeout_s")?;
        if let Some(c) = self.output_cap_bytes {
            executor.output_cap = c;
        }
        executor.no_network = self.no_network.unwrap_or(false);

        let env_root = workspace.join("envs");
        let root_var = (crate::mock::ENV_ROOT_VAR.to_string(), env_root.display().to_string());
        manager.env.push(root_var.clone());
        executor.env.push(root_var);

        let workers = self.workers.unwrap_or(4);
        let harvest_workers = self.harvest_workers.unwrap_or(4);
        if workers == 0 || harvest_workers == 0 {
            return Err(Error::Config("worker counts must be at least 1".into()));
        }
        let reference_date = match self.reference_date {
            Some(d) => d,
            None => DEFAULT_REFERENCE_DATE.parse().expect("valid default date"),
        };
        let diff = DiffPolicy {
            scrub: if self.scrub_volatile.unwrap_or(false) {
                vec![Scrub::HexAddress, Scrub::IsoTimestamp]
            } else {
                Vec::new()
            },
        };
        Ok(PipelineConfig {
            source,
            hosting_dir,
            workspace,
            report_dir,
            policy: self.policy.unwrap_or_default(),
            workers,
            harvest_workers,
            offline,
            force: self.force.unwrap_or(false),
            reference_date,
            default_interpreter: self
                .default_interpreter
                .unwrap_or_else(|| DEFAULT_INTERPRETER.to_string()),
            manager,
            executor,
            diff,
            retry: RetryPolicy::default(),
            search_url: self
                .search_url
                .unwrap_or_else(|| "https://eutils.ncbi.nlm.nih.gov/entrez/eutils".into()),
            hosting_url: self.hosting_url.unwrap_or_else(|| "https://api.github.com".into()),
            request_delay: Duration::from_millis(self.request_delay_ms.unwrap_or(350)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    XmlDirectory(PathBuf),
    RepoListFile(PathBuf),
    /// `fixture_dir` stands in for the search service when offline.
    LiveSearch {
        query: String,
        fixture_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub source: InputSource,
    pub hosting_dir: Option<PathBuf>,
    pub workspace: PathBuf,
    pub report_dir: PathBuf,
    pub policy: AttemptPolicy,
    pub workers: usize,
    pub harvest_workers: usize,
    pub offline: bool,
    pub force: bool,
    pub reference_date: NaiveDate,
    pub default_interpreter: String,
    pub manager: ManagerAdapter,
    pub executor: ExecutorConfig,
    pub diff: DiffPolicy,
    pub retry: RetryPolicy,
    pub search_url: String,
    pub hosting_url: String,
    pub request_delay: Duration,
}

impl PipelineConfig {
    pub fn store_path(&self) -> PathBuf {
        self.workspace.join("store.sqlite")
    }

    pub fn scratch_dir(&self) -> PathBuf {
        self.workspace.join("scratch")
    }
}

/// A bare program name is looked up on PATH, then next to the running
/// executable (and one level up, where cargo puts binaries relative to
/// test executables).
pub fn resolve_program(program: &str) -> String {
    if program.contains('/') || crate::proc::find_program(program).is_some() {
        return program.to_string();
    }
    if let Ok(exe) = std::env::current_exe() {
        for dir in exe.ancestors().skip(1).take(2) {
            let candidate = dir.join(program);
            if candidate.is_file() {
                return candidate.display().to_string();
            }
        }
    }
    program.to_string()
}
