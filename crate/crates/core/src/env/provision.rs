//! Creating environments through a conda-compatible manager command.

use std::collections::HashMap;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::EnvironmentPlan;
use crate::error::{Error, Result};
use crate::proc::{find_program, run_bounded, Ending};

const LOG_TAIL_LINES: usize = 50;
const MANAGER_OUTPUT_CAP: u64 = 64 << 20;

/// Manager invocation:
/// `<program> <create_args> ` with `{name}` and `{python}` substituted, then
/// `<program> <install_args> <pkg-spec>...` with `{name}` substituted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerAdapter {
    pub program: String,
    pub create_args: Vec<String>,
    pub install_args: Vec<String>,
    pub timeout: Duration,
    /// Extra environment variables for every manager call.
    pub env: Vec<(String, String)>,
}

impl Default for ManagerAdapter {
    fn default() -> Self {
        Self {
            program: "conda".into(),
            create_args: ["create", "--yes", "--name", "{name}", "python={python}"]
                .map(String::from)
                .to_vec(),
            install_args: ["install", "--yes", "--name", "{name}"].map(String::from).to_vec(),
            timeout: Duration::from_secs(20 * 60),
            env: Vec::new(),
        }
    }
}

impl ManagerAdapter {
    /// Fails with a configuration error when the program cannot be found.
    pub fn check(&self) -> Result<()> {
        find_program(&self.program)
            .map(|_| ())
            .ok_or_else(|| Error::Config(format!("environment manager `{}` not found", self.program)))
    }

    fn command(&self, template: &[String], name: &str, python: &str) -> Command {
        let mut cmd = Command::new(&self.program);
        cmd.args(
            template
                .iter()
                .map(|a| a.replace("{name}", name).replace("{python}", python)),
        );
        cmd.envs(self.env.iter().map(|(k, v)| (k, v)));
        cmd
    }

    /// The install command line for a plan, as recorded with the plan.
    pub fn install_command_line(&self, plan: &EnvironmentPlan) -> String {
        let name = plan.env_name();
        let mut parts = vec![self.program.clone()];
        parts.extend(self.install_args.iter().map(|a| a.replace("{name}", &name)));
        parts.extend(plan.package_specs());
        parts.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvHandle {
    pub name: String,
    pub python: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ProvisionStatus {
    Ready { env: EnvHandle },
    InstallFailed { log_excerpt: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionResult {
    pub env_name: String,
    pub status: ProvisionStatus,
    pub wall_time: f64,
    pub cached: bool,
}

impl ProvisionResult {
    pub fn env(&self) -> Option<&EnvHandle> {
        match &self.status {
            ProvisionStatus::Ready { env } => Some(env),
            ProvisionStatus::InstallFailed { .. } => None,
        }
    }
}

/// Results by environment name. Callers with the same key wait for the
/// first one's outcome instead of provisioning twice.
#[derive(Default)]
pub struct EnvCache {
    done: Mutex<HashMap<String, ProvisionStatus>>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl EnvCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an outcome known from an earlier run.
    pub fn seed(&self, env_name: &str, status: ProvisionStatus) {
        self.done
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(env_name.to_string(), status);
    }

    fn get(&self, env_name: &str) -> Option<ProvisionStatus> {
        self.done
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(env_name)
            .cloned()
    }

    fn key_lock(&self, env_name: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(env_name.to_string())
            .or_default()
            .clone()
    }
}

/// Creates (or reuses) the environment for a plan. Any nonzero manager exit
/// or a timeout yields `InstallFailed` with the tail of the manager log.
pub fn provision(plan: &EnvironmentPlan, adapter: &ManagerAdapter, cache: &EnvCache) -> ProvisionResult {
    let start = Instant::now();
    let name = plan.env_name();
    let lock = cache.key_lock(&name);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(status) = cache.get(&name) {
        return ProvisionResult {
            env_name: name,
            status,
            wall_time: start.elapsed().as_secs_f64(),
            cached: true,
        };
    }
    let status = run_manager(plan, adapter, &name);
    cache.seed(&name, status.clone());
    ProvisionResult {
        env_name: name,
        status,
        wall_time: start.elapsed().as_secs_f64(),
        cached: false,
    }
}

fn run_manager(plan: &EnvironmentPlan, adapter: &ManagerAdapter, name: &str) -> ProvisionStatus {
    let deadline = Instant::now() + adapter.timeout;
    let python = &plan.interpreter_version;
    let mut log = String::new();
    let mut steps = vec![adapter.command(&adapter.create_args, name, python)];
    if !plan.packages.is_empty() {
        let mut install = adapter.command(&adapter.install_args, name, python);
        install.args(plan.package_specs());
        steps.push(install);
    }
    for cmd in steps {
        let line = format!("$ {:?}", cmd);
        log.push_str(&line);
        log.push('\n');
        let remaining = deadline.saturating_duration_since(Instant::now());
        let failure = match run_bounded(cmd, remaining.max(Duration::from_millis(1)), MANAGER_OUTPUT_CAP) {
            Err(e) => Some(format!("cannot start manager: {e}")),
            Ok(f) => {
                log.push_str(&f.output_text());
                match f.ending {
                    Ending::Exited(Some(0)) => None,
                    Ending::Exited(code) => Some(format!("manager exited with status {code:?}")),
                    Ending::TimedOut => Some(format!("manager timed out after {:?}", adapter.timeout)),
                    Ending::OutputFlood => Some("manager output exceeded cap".to_string()),
                }
            }
        };
        if let Some(reason) = failure {
            if !log.ends_with('\n') {
                log.push('\n');
            }
            log.push_str(&reason);
            return ProvisionStatus::InstallFailed {
                log_excerpt: tail(&log, LOG_TAIL_LINES),
            };
        }
    }
    ProvisionStatus::Ready {
        env: EnvHandle {
            name: name.to_string(),
            python: python.clone(),
        },
    }
}

fn tail(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PackageEntry;

    fn plan(pkgs: &[&str]) -> EnvironmentPlan {
        EnvironmentPlan {
            notebook_id: 1,
            interpreter_version: "3.9".into(),
            interpreter_defaulted: false,
            packages: pkgs.iter().map(|p| PackageEntry::new(p, None)).collect(),
            fallback_kitchen_sink: false,
        }
    }

    /// A shell script standing in for the manager: creates a directory per
    /// environment and fails for one package name.
    fn fake_manager(dir: &std::path::Path) -> ManagerAdapter {
        let script = dir.join("mgr.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\nroot=\"$FAKE_ROOT\"\ncmd=$1; shift; shift; name=$1; shift\n\
             case $cmd in\n  create) mkdir -p \"$root/$name\"; echo \"$1\" > \"$root/$name/python\";;\n\
             install) for p in \"$@\"; do seq 1 80; case $p in definitely-not*) echo \"no such package $p\" >&2; exit 1;; esac; echo \"$p\" >> \"$root/$name/pkgs\"; done;;\nesac\n",
        )
        .unwrap();
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        ManagerAdapter {
            program: script.display().to_string(),
            create_args: vec![
                "create".into(),
                "--name".into(),
                "{name}".into(),
                "python={python}".into(),
            ],
            install_args: vec!["install".into(), "--name".into(), "{name}".into()],
            timeout: Duration::from_secs(30),
            env: vec![("FAKE_ROOT".into(), dir.display().to_string())],
        }
    }

    #[test]
    fn ready_environment_has_interpreter() {
        let d = tempfile::tempdir().unwrap();
        let r = provision(&plan(&["requests"]), &fake_manager(d.path()), &EnvCache::new());
        let env = r.env().expect("ready");
        assert_eq!(env.python, "3.9");
        let py = std::fs::read_to_string(d.path().join(&env.name).join("python")).unwrap();
        assert_eq!(py.trim(), "python=3.9");
    }

    #[test]
    fn bad_package_fails_with_log_tail() {
        let d = tempfile::tempdir().unwrap();
        let r = provision(
            &plan(&["definitely-not-a-real-pkg-xyz"]),
            &fake_manager(d.path()),
            &EnvCache::new(),
        );
        match r.status {
            ProvisionStatus::InstallFailed { log_excerpt } => {
                assert!(log_excerpt.contains("no such package"));
                assert!(log_excerpt.lines().count() <= 50);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn second_identical_plan_hits_cache() {
        let d = tempfile::tempdir().unwrap();
        let adapter = fake_manager(d.path());
        let cache = EnvCache::new();
        let first = provision(&plan(&["a", "b"]), &adapter, &cache);
        let second = provision(&plan(&["b", "a"]), &adapter, &cache);
        assert!(!first.cached && second.cached);
        assert_eq!(first.status, second.status);
        assert!(second.wall_time <= first.wall_time);
    }

    #[test]
    fn timeout_is_install_failure() {
        let d = tempfile::tempdir().unwrap();
        let mut adapter = fake_manager(d.path());
        adapter.program = "sleep".into();
        adapter.create_args = vec!["10".into()];
        adapter.timeout = Duration::from_millis(100);
        let r = provision(&plan(&[]), &adapter, &EnvCache::new());
        assert!(
            matches!(r.status, ProvisionStatus::InstallFailed { ref log_excerpt } if log_excerpt.contains("timed out"))
        );
    }

    #[test]
    fn missing_manager_is_config_error() {
        let adapter = ManagerAdapter {
            program: "definitely-not-a-manager".into(),
            ..ManagerAdapter::default()
        };
        assert!(matches!(adapter.check(), Err(Error::Config(_))));
    }
}
