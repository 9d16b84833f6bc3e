#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::{json, Value};

use nbrepro::pipeline::{Pipeline, PipelineConfig, RunStatus, Settings};
use nbrepro::store::reports::FUNNEL_STAGES;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn corpus() -> PathBuf {
    manifest_dir().join("fixtures/corpus")
}

pub fn corpus_config() -> PathBuf {
    corpus().join("nbrepro.toml")
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_nbrepro"))
}

pub fn nbrepro(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("nbrepro runs")
}

/// `run` over the fixture corpus into `workspace`.
pub fn run_corpus(workspace: &Path, extra: &[&str]) -> Output {
    let cfg = corpus_config();
    let ws = workspace.to_str().unwrap();
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--workspace", ws];
    args.extend_from_slice(extra);
    nbrepro(&args)
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The sixteen counts of a `funnel.json` report.
pub fn funnel_vector(report_dir: &Path) -> Vec<u64> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(report_dir.join("funnel.json")).unwrap()).unwrap();
    FUNNEL_STAGES.iter().map(|s| v[*s].as_u64().unwrap()).collect()
}

pub fn expected_funnel() -> Vec<u64> {
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus().join("expected_funnel.json")).unwrap()).unwrap();
    v["vector"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n.as_u64().unwrap())
        .collect()
}

// ---- randomized corpora

#[derive(Debug, Clone)]
pub enum Behavior {
    Identical,
    Drift,
    Raise(&'static str),
    Crash,
    Sleep,
    /// The stored outputs already hold an error, which replays as a failure.
    StoredError,
}

#[derive(Debug, Clone)]
pub enum NbKind {
    Invalid,
    R,
    Python(Behavior),
}

#[derive(Debug, Clone, Copy)]
pub enum Deps {
    None,
    Good,
    Bad,
}

#[derive(Debug, Clone)]
pub enum RepoKind {
    Missing,
    Withdrawn,
    Empty,
    ReadmeOnly,
    Notebooks { deps: Deps, notebooks: Vec<NbKind> },
}

fn behavior() -> impl Strategy<Value = Behavior> {
    prop_oneof![
        4 => Just(Behavior::Identical),
        1 => Just(Behavior::Drift),
        1 => prop_oneof![Just("ModuleNotFoundError"), Just("FileNotFoundError"), Just("ValueError")]
            .prop_map(Behavior::Raise),
        1 => Just(Behavior::Crash),
        1 => Just(Behavior::Sleep),
        1 => Just(Behavior::StoredError),
    ]
}

fn nb_kind() -> impl Strategy<Value = NbKind> {
    prop_oneof![
        1 => Just(NbKind::Invalid),
        1 => Just(NbKind::R),
        6 => behavior().prop_map(NbKind::Python),
    ]
}

fn repo_kind() -> impl Strategy<Value = RepoKind> {
    let deps = prop_oneof![1 => Just(Deps::None), 3 => Just(Deps::Good), 1 => Just(Deps::Bad)];
    prop_oneof![
        1 => Just(RepoKind::Missing),
        1 => Just(RepoKind::Withdrawn),
        1 => Just(RepoKind::Empty),
        1 => Just(RepoKind::ReadmeOnly),
        6 => (deps, prop::collection::vec(nb_kind(), 0..5))
            .prop_map(|(deps, notebooks)| RepoKind::Notebooks { deps, notebooks }),
    ]
}

pub fn corpus_strategy() -> impl Strategy<Value = Vec<RepoKind>> {
    prop::collection::vec(repo_kind(), 1..7)
}

fn notebook_json(kind: &NbKind) -> String {
    let (source, outputs, lang) = match kind {
        NbKind::Invalid => return "{\"cells\": [".into(),
        NbKind::R => ("print(1)".to_string(), json!([]), "R"),
        NbKind::Python(b) => {
            let directive = match b {
                Behavior::Identical | Behavior::StoredError => String::new(),
                Behavior::Drift => "#mock: drift\n".into(),
                Behavior::Raise(name) => format!("#mock: raise {name}: generated\n"),
                Behavior::Crash => "#mock: crash\n".into(),
                Behavior::Sleep => "#mock: sleep 5\n".into(),
            };
            let outputs = match b {
                Behavior::StoredError => json!([{
                    "output_type": "error", "ename": "KeyError", "evalue": "'x'", "traceback": []
                }]),
                _ => json!([{"output_type": "stream", "name": "stdout", "text": ["hello\n"]}]),
            };
            (format!("{directive}print('hello')"), outputs, "python")
        }
    };
    json!({
        "cells": [
            {"cell_type": "markdown", "metadata": {}, "source": ["notes"]},
            {"cell_type": "code", "execution_count": 1, "metadata": {}, "outputs": outputs, "source": source},
        ],
        "metadata": {"language_info": {"name": lang, "version": "3.8.1"}},
        "nbformat": 4,
        "nbformat_minor": 4,
    })
    .to_string()
}

/// Writes a repo list plus hosting fixtures under `dir` and returns the
/// outcome counts the pipeline must produce.
pub fn materialize(dir: &Path, repos: &[RepoKind]) -> BTreeMap<String, u64> {
    let hosting = dir.join("hosting");
    std::fs::create_dir_all(&hosting).unwrap();
    let mut list = String::new();
    let mut expected: BTreeMap<String, u64> = BTreeMap::new();
    let mut bump = |k: &str| *expected.entry(k.to_string()).or_insert(0) += 1;
    for (i, kind) in repos.iter().enumerate() {
        let name = format!("r{i}");
        list.push_str(&format!("https://github.com/gen/{name}\n"));
        let root = hosting.join("gen").join(&name);
        let tree = root.join("tree");
        let meta = |status: u16| {
            std::fs::create_dir_all(&root).unwrap();
            std::fs::write(
                root.join("meta.json"),
                json!({"status": status, "repo": {"created_at": "2019-01-01T00:00:00Z"}}).to_string(),
            )
            .unwrap();
        };
        match kind {
            RepoKind::Missing => bump("gone_repo"),
            RepoKind::Withdrawn => {
                meta(410);
                bump("gone_repo");
            }
            RepoKind::Empty => {
                meta(200);
                bump("no_notebooks");
            }
            RepoKind::ReadmeOnly => {
                meta(200);
                std::fs::create_dir_all(&tree).unwrap();
                std::fs::write(tree.join("README.md"), "# readme\n").unwrap();
                bump("no_notebooks");
            }
            RepoKind::Notebooks { deps, notebooks } => {
                meta(200);
                std::fs::create_dir_all(&tree).unwrap();
                std::fs::write(tree.join("README.md"), "# readme\n").unwrap();
                match deps {
                    Deps::None => {}
                    Deps::Good => std::fs::write(tree.join("requirements.txt"), "numpy\n").unwrap(),
                    Deps::Bad => std::fs::write(tree.join("requirements.txt"), "definitely-not-here==1\n").unwrap(),
                }
                if notebooks.is_empty() {
                    bump("no_notebooks");
                }
                for (j, nb) in notebooks.iter().enumerate() {
                    std::fs::write(tree.join(format!("n{j}.ipynb")), notebook_json(nb)).unwrap();
                    let label = match (nb, deps) {
                        (NbKind::Invalid, _) => "invalid_notebook".to_string(),
                        (NbKind::R, _) => "non_python".into(),
                        (_, Deps::None) => "not_attempted:declared_only".into(),
                        (_, Deps::Bad) => "install_failed".into(),
                        (NbKind::Python(b), Deps::Good) => match b {
                            Behavior::Identical => "success_identical".into(),
                            Behavior::Drift => "success_different".into(),
                            Behavior::Raise(n) => format!("exception:{n}"),
                            Behavior::Crash => "infrastructure_error".into(),
                            Behavior::Sleep => "timeout".into(),
                            Behavior::StoredError => "exception:KeyError".into(),
                        },
                    };
                    bump(&label);
                }
            }
        }
    }
    std::fs::write(dir.join("repos.txt"), list).unwrap();
    expected
}

/// Offline configuration over a materialized corpus.
pub fn generated_config(dir: &Path) -> PipelineConfig {
    let settings = Settings {
        input: Some(dir.join("repos.txt")),
        workspace: Some(dir.join("work")),
        offline: Some(true),
        cell_timeout_s: Some(0.05),
        request_delay_ms: Some(0),
        workers: Some(4),
        ..Default::default()
    };
    settings.resolve().expect("generated config resolves")
}

pub fn run_generated(dir: &Path) -> nbrepro::Result<(Vec<u64>, Pipeline)> {
    let mut p = Pipeline::open(generated_config(dir))?;
    match p.run_all()? {
        RunStatus::Finished(f) => Ok((f.vector(), p)),
        RunStatus::Interrupted { stage } => Err(nbrepro::Error::Usage(format!("interrupted in {stage}"))),
    }
}

/// Independent restatement of the funnel's ordering constraints.
pub fn monotone(v: &[u64]) -> Result<(), String> {
    let at = |i: usize| v[i];
    let checks: &[(&str, bool)] = &[
        ("unique <= links", at(1) <= at(0)),
        ("accessible <= unique", at(2) <= at(1)),
        ("with_notebooks <= accessible", at(3) <= at(2)),
        ("valid <= total", at(5) <= at(4)),
        ("python <= valid", at(6) <= at(5)),
        ("attempted <= python", at(7) <= at(6)),
        ("install_failed + executed <= attempted", at(8) + at(9) <= at(7)),
        ("statuses sum to executed", at(10) + at(11) + at(12) + at(13) == at(9)),
        ("identical + different <= completed", at(14) + at(15) <= at(13)),
    ];
    match checks.iter().find(|(_, ok)| !ok) {
        Some((what, _)) => Err(format!("{what} violated in {v:?}")),
        None => Ok(()),
    }
}

// ---- URLs

#[derive(Debug, Clone)]
pub enum UrlCase {
    /// Points at `owner/repo`.
    Repo {
        url: String,
        owner: String,
        repo: String,
    },
    UserOnly(String),
    Pages(String),
    /// nbviewer page for a file in `owner/repo`.
    Nbviewer {
        url: String,
        owner: String,
        repo: String,
    },
    Arbitrary(String),
}

fn segment() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9_-]{0,12}".prop_filter("site areas are not owners", |s| s != "orgs" && s != "users")
}

fn scheme() -> impl Strategy<Value = &'static str> {
    prop_oneof![
        Just("https://"),
        Just("http://"),
        Just(""),
        Just("HTTPS://"),
        Just("git://")
    ]
}

fn host() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("github.com"), Just("www.github.com"), Just("GitHub.com")]
}

fn tail() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        Just("/".to_string()),
        Just(".git".to_string()),
        "/tree/main/[a-z]{1,8}".prop_map(String::from),
        "/blob/[0-9a-f]{7}/[a-z]{1,6}\\.ipynb".prop_map(String::from),
        "\\?tab=[a-z]{1,5}".prop_map(String::from),
        "#[a-z]{1,6}".prop_map(String::from),
    ]
}

pub fn url_case() -> impl Strategy<Value = UrlCase> {
    prop_oneof![
        4 => (scheme(), host(), segment(), segment(), tail()).prop_map(|(s, h, o, r, t)| UrlCase::Repo {
            url: format!("{s}{h}/{o}/{r}{t}"),
            owner: o,
            repo: r,
        }),
        1 => (segment(), segment()).prop_map(|(o, r)| UrlCase::Repo {
            url: format!("git@github.com:{o}/{r}.git"),
            owner: o,
            repo: r,
        }),
        1 => (scheme(), host(), segment(), prop_oneof![Just(""), Just("/")])
            .prop_map(|(s, h, o, t)| UrlCase::UserOnly(format!("{s}{h}/{o}{t}"))),
        1 => (scheme(), segment(), "[a-z/]{0,10}")
            .prop_map(|(s, o, p)| UrlCase::Pages(format!("{s}{}.github.io/{p}", o.to_lowercase()))),
        1 => (prop_oneof![Just("nbviewer.org"), Just("nbviewer.jupyter.org")], segment(), segment(), "[a-z]{1,8}")
            .prop_map(|(h, o, r, f)| UrlCase::Nbviewer {
                url: format!("https://{h}/github/{o}/{r}/blob/main/{f}.ipynb"),
                owner: o,
                repo: r,
            }),
        1 => "\\PC{0,40}".prop_map(UrlCase::Arbitrary),
    ]
}
