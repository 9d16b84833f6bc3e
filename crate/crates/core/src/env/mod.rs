//! Environment synthesis: declared dependencies, per-notebook plans, and
//! provisioning through an external environment manager.

pub mod deps;
pub mod provision;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use deps::{discover_dependency_files, normalize_name, DependencySpec, PackageEntry, SourceKind};
pub use provision::{provision, EnvCache, EnvHandle, ManagerAdapter, ProvisionResult, ProvisionStatus};

use crate::error::{Error, Result};
use crate::inventory::{Language, NotebookRecord};

pub const DEFAULT_INTERPRETER: &str = "3.7";
pub const KITCHEN_SINK_MANIFEST: &str = include_str!("../../data/kitchen_sink.txt");

/// Which notebooks get an execution attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptPolicy {
    /// Only notebooks whose repository declares dependencies.
    #[default]
    DeclaredOnly,
    AllPython,
}

impl AttemptPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AttemptPolicy::DeclaredOnly => "declared_only",
            AttemptPolicy::AllPython => "all_python",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "declared_only" => Some(AttemptPolicy::DeclaredOnly),
            "all_python" => Some(AttemptPolicy::AllPython),
            _ => None,
        }
    }

    pub fn admits(self, specs: &[DependencySpec]) -> bool {
        self == AttemptPolicy::AllPython || !specs.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PlanConfig {
    pub default_interpreter: String,
    pub kitchen_sink: Vec<PackageEntry>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            default_interpreter: DEFAULT_INTERPRETER.into(),
            kitchen_sink: parse_manifest(KITCHEN_SINK_MANIFEST),
        }
    }
}

/// One package per line; `#` starts a comment.
pub fn parse_manifest(text: &str) -> Vec<PackageEntry> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .filter_map(deps::parse_requirement)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentPlan {
    pub notebook_id: i64,
    /// `major.minor`.
    pub interpreter_version: String,
    pub interpreter_defaulted: bool,
    /// Sorted by name, one entry per name.
    pub packages: Vec<PackageEntry>,
    pub fallback_kitchen_sink: bool,
}

impl EnvironmentPlan {
    /// Stable key over (interpreter, sorted packages).
    pub fn cache_key(&self) -> String {
        let mut specs: Vec<String> = self.packages.iter().map(PackageEntry::spec).collect();
        specs.sort();
        format!("python={}\n{}", self.interpreter_version, specs.join("\n"))
    }

    /// Environment name derived from the cache key.
    pub fn env_name(&self) -> String {
        let digest = Sha256::digest(self.cache_key().as_bytes());
        format!("nbr-py{}-{}", self.interpreter_version, &hex::encode(digest)[..12])
    }

    pub fn package_specs(&self) -> Vec<String> {
        self.packages.iter().map(PackageEntry::spec).collect()
    }
}

/// Builds the environment plan for a Python notebook. `specs` must be in
/// discovery order; a later file wins when two name the same package.
pub fn build_plan(
    notebook_id: i64,
    notebook: &NotebookRecord,
    specs: &[DependencySpec],
    config: &PlanConfig,
) -> Result<EnvironmentPlan> {
    if notebook.language != Language::Python {
        return Err(Error::Rejected(format!(
            "notebook {} is {}, not python",
            notebook.path, notebook.language
        )));
    }
    let declared = notebook.language_version.as_deref().filter(|v| is_major_minor(v));
    let (interpreter_version, interpreter_defaulted) = match declared {
        Some(v) => (v.to_string(), false),
        None => (config.default_interpreter.clone(), true),
    };
    let fallback = specs.is_empty();
    let mut merged: BTreeMap<String, PackageEntry> = BTreeMap::new();
    let source: Vec<&PackageEntry> = if fallback {
        config.kitchen_sink.iter().collect()
    } else {
        specs.iter().flat_map(|s| s.entries.iter()).collect()
    };
    for entry in source {
        merged.insert(entry.name.clone(), entry.clone());
    }
    Ok(EnvironmentPlan {
        notebook_id,
        interpreter_version,
        interpreter_defaulted,
        packages: merged.into_values().collect(),
        fallback_kitchen_sink: fallback,
    })
}

fn is_major_minor(v: &str) -> bool {
    let mut parts = v.split('.');
    let ok = |p: Option<&str>| p.is_some_and(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit()));
    ok(parts.next()) && ok(parts.next()) && parts.next().is_none()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::parse_notebook_str;

    fn notebook(lang: &str, version: Option<&str>) -> NotebookRecord {
        let info = match version {
            Some(v) => format!(r#"{{"name": "{lang}", "version": "{v}"}}"#),
            None => format!(r#"{{"name": "{lang}"}}"#),
        };
        let text =
            format!(r#"{{"nbformat": 4, "nbformat_minor": 4, "metadata": {{"language_info": {info}}}, "cells": []}}"#);
        parse_notebook_str(&text, "a.ipynb").unwrap().record
    }

    fn spec(path: &str, entries: &[(&str, Option<&str>)]) -> DependencySpec {
        DependencySpec {
            source_kind: SourceKind::for_path(path).unwrap(),
            path: path.into(),
            entries: entries.iter().map(|(n, c)| PackageEntry::new(n, *c)).collect(),
            unparsed: false,
        }
    }

    #[test]
    fn plan_uses_declared_version_and_specs() {
        let p = build_plan(
            1,
            &notebook("python", Some("3.7.6")),
            &[spec("requirements.txt", &[("numpy", Some("==1.19.5"))])],
            &PlanConfig::default(),
        )
        .unwrap();
        assert_eq!(p.interpreter_version, "3.7");
        assert!(!p.interpreter_defaulted && !p.fallback_kitchen_sink);
        assert_eq!(p.package_specs(), vec!["numpy==1.19.5"]);
    }

    #[test]
    fn no_specs_means_kitchen_sink() {
        let p = build_plan(1, &notebook("python", Some("3.8")), &[], &PlanConfig::default()).unwrap();
        assert!(p.fallback_kitchen_sink);
        let names: Vec<&str> = p.packages.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names.len(), 10);
        assert!(names.contains(&"beautifulsoup4") && names.contains(&"scikit-learn"));
    }

    #[test]
    fn missing_version_defaults_and_flags() {
        let p = build_plan(1, &notebook("python", None), &[], &PlanConfig::default()).unwrap();
        assert_eq!(p.interpreter_version, "3.7");
        assert!(p.interpreter_defaulted);
    }

    #[test]
    fn later_file_wins_on_clash() {
        let specs = [
            spec("requirements.txt", &[("numpy", Some("==1.0")), ("pandas", None)]),
            spec("setup.py", &[("NumPy", Some(">=1.2"))]),
        ];
        let p = build_plan(1, &notebook("python", Some("3.9")), &specs, &PlanConfig::default()).unwrap();
        assert_eq!(p.package_specs(), vec!["numpy>=1.2", "pandas"]);
    }

    #[test]
    fn non_python_is_rejected() {
        assert!(matches!(
            build_plan(1, &notebook("R", None), &[], &PlanConfig::default()),
            Err(Error::Rejected(_))
        ));
    }

    #[test]
    fn cache_key_ignores_order_and_notebook() {
        let mut a = build_plan(
            1,
            &notebook("python", Some("3.9")),
            &[spec("requirements.txt", &[("a", None), ("b", None)])],
            &PlanConfig::default(),
        )
        .unwrap();
        let b = EnvironmentPlan {
            notebook_id: 2,
            packages: a.packages.iter().rev().cloned().collect(),
            ..a.clone()
        };
        assert_eq!(a.env_name(), b.env_name());
        a.interpreter_version = "3.8".into();
        assert_ne!(a.env_name(), b.env_name());
    }

    #[test]
    fn policy_gate() {
        assert!(!AttemptPolicy::DeclaredOnly.admits(&[]));
        assert!(AttemptPolicy::AllPython.admits(&[]));
        assert_eq!(AttemptPolicy::parse("all-python"), Some(AttemptPolicy::AllPython));
    }
}
