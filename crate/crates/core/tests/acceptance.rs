//! One line per acceptance criterion; the process fails if any line does.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::Value;

use common::*;
use nbrepro::analysis::{extract_imports, style_check};
use nbrepro::diff::{compare, DiffPolicy, Verdict};
use nbrepro::env::EnvHandle;
use nbrepro::exec::{execute_notebook, ExecStatus, ExecutionJob, ExecutionRecord, ExecutorConfig};
use nbrepro::inventory::parse_notebook;
use nbrepro::jats::{normalize_github_link, Disposition};
use nbrepro::store::Store;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(actual: f64, expected: f64) -> bool {
    ((actual - expected) / expected).abs() <= 0.01
}

fn fixture_funnel() -> Check {
    let t = Instant::now();
    let ws = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = run_corpus(ws.path(), &[]);
    ensure(out.status.success(), || format!("run failed: {}", stderr(&out)))?;
    let got = funnel_vector(&ws.path().join("reports"));
    let want = expected_funnel();
    ensure(got == want, || format!("funnel {got:?} != {want:?}"))?;

    let outcomes: Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path().join("reports/outcomes.json")).unwrap()).unwrap();
    let labels: Vec<String> = outcomes.as_object().unwrap().keys().cloned().collect();
    let kinds = [
        "gone_repo",
        "no_notebooks",
        "invalid_notebook",
        "non_python",
        "not_attempted:",
        "install_failed",
        "exception:",
        "timeout",
        "infrastructure_error",
        "success_different",
        "success_identical",
    ];
    for k in kinds {
        ensure(labels.iter().any(|l| l.starts_with(k)), || {
            format!("no {k} outcome in {labels:?}")
        })?;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{} stages match, 11 outcome kinds, {secs:.1}s", got.len()))
}

fn footprint_parity() -> Check {
    let run = |kwh: &str| -> Result<Value, String> {
        let out = nbrepro(&["footprint", "--energy-kwh", kwh]);
        ensure(out.status.success(), || stderr(&out))?;
        serde_json::from_str(&stdout(&out)).map_err(|e| e.to_string())
    };
    let small = run("47.38")?;
    let (kg, months) = (
        small["carbon_kgco2e"].as_f64().unwrap(),
        small["tree_months"].as_f64().unwrap(),
    );
    ensure(within(kg, 16.05) && within(months, 17.51), || {
        format!("47.38 kWh -> {kg} kg, {months} months")
    })?;
    let large = run("373.78")?;
    let (kg2, months2) = (
        large["carbon_kgco2e"].as_f64().unwrap(),
        large["tree_months"].as_f64().unwrap(),
    );
    ensure(within(kg2, 126.58) && within(months2 / 12.0, 11.51), || {
        format!("373.78 kWh -> {kg2} kg, {} years", months2 / 12.0)
    })?;
    Ok(format!(
        "{kg:.2} kg / {months:.2} tree-months; {kg2:.2} kg / {:.2} tree-years",
        months2 / 12.0
    ))
}

fn curated_links() -> Result<usize, String> {
    let cases: &[(&str, Option<&str>)] = &[
        ("https://github.com/u/r", Some("https://github.com/u/r")),
        ("http://www.GitHub.com/u/r/", Some("https://github.com/u/r")),
        ("github.com/u/r.git", Some("https://github.com/u/r")),
        (
            "https://github.com/u/r/tree/main/notebooks",
            Some("https://github.com/u/r"),
        ),
        ("git@github.com:Org/Repo.git", Some("https://github.com/Org/Repo")),
        (
            "https://raw.githubusercontent.com/u/r/main/a.ipynb",
            Some("https://github.com/u/r"),
        ),
        (
            "https://nbviewer.jupyter.org/github/u/r/blob/master/x.ipynb",
            Some("https://github.com/u/r"),
        ),
        ("https://github.com/u", None),
        ("https://github.com/orgs/u/repositories", None),
        ("https://u.github.io/r", None),
        ("https://gitlab.com/u/r", None),
        ("", None),
    ];
    for (raw, want) in cases {
        let got = match normalize_github_link(raw).disposition {
            Disposition::Normalized(u) => Some(u.canonical()),
            _ => None,
        };
        ensure(got.as_deref() == *want, || format!("{raw:?} -> {got:?}, want {want:?}"))?;
    }
    Ok(cases.len())
}

fn link_properties() -> Check {
    let t = Instant::now();
    let curated = curated_links()?;
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&url_case(), |case| {
        let (raw, expect) = match &case {
            UrlCase::Repo { url, owner, repo } | UrlCase::Nbviewer { url, owner, repo } => {
                (url.clone(), Some(format!("https://github.com/{owner}/{repo}")))
            }
            UrlCase::UserOnly(u) | UrlCase::Pages(u) | UrlCase::Arbitrary(u) => (u.clone(), None),
        };
        let d = normalize_github_link(&raw).disposition;
        // Idempotence: a canonical URL normalizes to itself.
        if let Disposition::Normalized(u) = &d {
            let again = normalize_github_link(&u.canonical()).disposition;
            if again != d {
                return Err(TestCaseError::fail(format!("{raw}: {d:?} then {again:?}")));
            }
        }
        match (&case, &d) {
            (UrlCase::UserOnly(_), Disposition::ExcludedUserOnly) => Ok(()),
            (UrlCase::Pages(_), Disposition::ExcludedPages) => Ok(()),
            (UrlCase::Arbitrary(_), _) => Ok(()),
            (_, Disposition::Normalized(u)) if Some(u.canonical()) == expect => Ok(()),
            _ => Err(TestCaseError::fail(format!("{raw}: {d:?}, want {expect:?}"))),
        }
    });
    result.map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("10000 random + {curated} curated URLs, {secs:.1}s"))
}

/// Differences between the analyzer and the reference linter that are
/// accepted as known. Each entry is (notebook, [cell, line, column, code]).
const STYLE_ALLOWLIST: &[(&str, [&str; 4])] = &[];

fn style_oracle() -> Check {
    let t = Instant::now();
    let reference: BTreeMap<String, Vec<(usize, usize, usize, String)>> = serde_json::from_str(
        &std::fs::read_to_string(corpus().join("style_reference.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let hosting = corpus().join("hosting");
    let mut mismatches = Vec::new();
    let mut findings = 0;
    for (key, want) in &reference {
        let path = hosting.join(tree_path(key));
        let nb = parse_notebook(&path, key).map_err(|e| format!("{key}: {}", e.reason))?;
        let got: Vec<(usize, usize, usize, String)> = style_check(0, &nb.cells)
            .into_iter()
            .map(|f| (f.cell_index, f.line, f.column, f.code))
            .collect();
        findings += got.len();
        let (g, w): (BTreeSet<_>, BTreeSet<_>) = (got.into_iter().collect(), want.iter().cloned().collect());
        for d in g.symmetric_difference(&w) {
            let allowed = STYLE_ALLOWLIST.iter().any(|(k, [c, l, col, code])| {
                k == key && *c == d.0.to_string() && *l == d.1.to_string() && *col == d.2.to_string() && *code == d.3
            });
            if !allowed {
                mismatches.push(format!("{key} {d:?}"));
            }
        }
    }
    ensure(STYLE_ALLOWLIST.len() <= 5, || "allowlist too long".into())?;
    ensure(mismatches.is_empty(), || mismatches.join("; "))?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} notebooks, {findings} findings, allowlist {}, {secs:.2}s",
        reference.len(),
        STYLE_ALLOWLIST.len()
    ))
}

/// `owner/repo/inner` -> `owner/repo/tree/inner`.
fn tree_path(key: &str) -> PathBuf {
    let mut parts = key.splitn(3, '/');
    let (o, r, inner) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
    Path::new(o).join(r).join("tree").join(inner)
}

fn import_oracle() -> Check {
    let t = Instant::now();
    let dir = manifest_dir().join("fixtures/imports");
    let nb = parse_notebook(&dir.join("cells.ipynb"), "cells.ipynb").map_err(|e| e.reason)?;
    let reference: Vec<(usize, usize, String)> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("reference.json")).unwrap()).unwrap();
    let got: Vec<(usize, usize, String)> = {
        let mut v: Vec<_> = extract_imports(0, &nb.cells)
            .into_iter()
            .map(|i| (i.cell_index, i.line, i.module))
            .collect();
        v.sort();
        v
    };
    let top = |rows: &[(usize, usize, String)]| -> BTreeMap<usize, BTreeSet<String>> {
        let mut m: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (cell, _, module) in rows {
            m.entry(*cell)
                .or_default()
                .insert(module.split('.').next().unwrap().to_string());
        }
        m
    };
    let (gt, rt) = (top(&got), top(&reference));
    let cells = nb.cells.len();
    ensure(cells == 50, || format!("{cells} cells"))?;
    for cell in 0..cells {
        let (g, r) = (
            gt.get(&cell).cloned().unwrap_or_default(),
            rt.get(&cell).cloned().unwrap_or_default(),
        );
        ensure(g == r, || format!("cell {cell}: {g:?} != {r:?}"))?;
    }
    ensure(got == reference, || "module/line pairs differ".into())?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{cells} cells, {} imports, {secs:.2}s", reference.len()))
}

fn mock_executor() -> ExecutorConfig {
    ExecutorConfig {
        program: env!("CARGO_BIN_EXE_nbrepro-mock-exec").into(),
        prefix_args: Vec::new(),
        cell_timeout: Duration::from_secs(5),
        notebook_timeout: Duration::from_secs(30),
        ..ExecutorConfig::default()
    }
}

fn run_mock(path: &Path, scratch: &Path, id: i64) -> ExecutionRecord {
    let env = EnvHandle {
        name: "self".into(),
        python: "3.8".into(),
    };
    let job = ExecutionJob {
        notebook_id: id,
        attempt: 1,
        notebook_path: path,
        env: &env,
        scratch,
    };
    execute_notebook(&job, &mock_executor())
}

fn rewrite(src: &Path, dest: &Path, edit: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(src).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(dest, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn diff_self_reproduction() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let original = corpus().join("hosting/kimlab/cellcount/tree/notebooks/01_load.ipynb");
    let a = dir.path().join("a.ipynb");
    std::fs::copy(&original, &a).unwrap();
    let policy = DiffPolicy::default();
    let cells = |p: &Path| parse_notebook(p, "nb").map(|n| n.cells).map_err(|e| e.reason);

    let first = run_mock(&a, dir.path(), 1);
    ensure(first.status == ExecStatus::Completed, || {
        format!("status {:?}", first.status)
    })?;
    let d = compare(&cells(&a)?, &first, &policy);
    ensure(d.verdict == Verdict::Identical && d.diff_count == 0, || d.summary())?;

    // Only execution counters change.
    let b = dir.path().join("b.ipynb");
    rewrite(&a, &b, |v| {
        for (i, cell) in v["cells"].as_array_mut().unwrap().iter_mut().enumerate() {
            if cell["cell_type"] == "code" {
                cell["execution_count"] = Value::from(40 + i);
                for o in cell["outputs"].as_array_mut().unwrap() {
                    if o.get("execution_count").is_some() {
                        o["execution_count"] = Value::from(90 + i);
                    }
                }
            }
        }
    });
    let d = compare(&cells(&b)?, &first, &policy);
    ensure(d.verdict == Verdict::Identical, || {
        format!("after counter edit: {}", d.summary())
    })?;
    let rerun = run_mock(&b, dir.path(), 2);
    let d = compare(&cells(&b)?, &rerun, &policy);
    ensure(d.verdict == Verdict::Identical, || {
        format!("rerun of counter edit: {}", d.summary())
    })?;

    // One byte of one stream output changes.
    let c = dir.path().join("c.ipynb");
    let mut replaced = false;
    rewrite(&a, &c, |v| {
        for cell in v["cells"].as_array_mut().unwrap() {
            for o in cell["outputs"].as_array_mut().into_iter().flatten() {
                if o["output_type"] == "stream" && !replaced {
                    o["text"] = Value::from(vec!["17\n"]);
                    replaced = true;
                }
            }
        }
    });
    ensure(replaced, || "no stream output to edit".into())?;
    let d = compare(&cells(&c)?, &first, &policy);
    ensure(d.verdict == Verdict::Different && d.diff_count == 1, || {
        format!("after byte edit: {}", d.summary())
    })?;
    Ok("identical; counters ignored; one stream byte -> different, diff_count 1".into())
}

fn outcome_partition() -> Check {
    let t = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        max_shrink_iters: 20,
        ..Config::default()
    });
    let notebooks = std::cell::Cell::new(0u64);
    let result = runner.run(&corpus_strategy(), |repos| {
        let dir = tempfile::tempdir().unwrap();
        let expected = materialize(dir.path(), &repos);
        let (vector, pipeline) = run_generated(dir.path()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let store: &Store = &pipeline.store;
        let counts = store.outcome_counts().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let inventoried: u64 = store.notebooks().map(|n| n.len() as u64).unwrap_or(u64::MAX);
        let per_notebook: u64 = store
            .conn()
            .query_row("SELECT COUNT(*) FROM outcomes WHERE notebook_id IS NOT NULL", [], |r| {
                r.get::<_, i64>(0)
            })
            .map(|n| n as u64)
            .unwrap_or(u64::MAX);
        notebooks.set(notebooks.get() + inventoried);
        if per_notebook != inventoried || vector[4] != inventoried {
            return Err(TestCaseError::fail(format!(
                "notebook outcomes {per_notebook}, inventoried {inventoried}, funnel {}",
                vector[4]
            )));
        }
        if counts.values().sum::<u64>() != inventoried + vector[1] - vector[3] {
            return Err(TestCaseError::fail(format!(
                "outcome total {counts:?} vs funnel {vector:?}"
            )));
        }
        monotone(&vector).map_err(TestCaseError::fail)?;
        if counts != expected {
            return Err(TestCaseError::fail(format!(
                "outcomes {counts:?}, predicted {expected:?}"
            )));
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok(format!(
        "100 corpora, {} notebooks, {:.1}s",
        notebooks.get(),
        t.elapsed().as_secs_f64()
    ))
}

fn copy_dir(src: &Path, dest: &Path) {
    std::fs::create_dir_all(dest).unwrap();
    for e in std::fs::read_dir(src).unwrap() {
        let e = e.unwrap();
        let to = dest.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to);
        } else {
            std::fs::copy(e.path(), &to).unwrap();
        }
    }
}

/// Slows every notebook's first code cell so a kill lands mid-stage.
fn slow_down(dir: &Path) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            slow_down(&p);
            continue;
        }
        if p.extension().is_none_or(|x| x != "ipynb") {
            continue;
        }
        let Ok(mut v) = serde_json::from_str::<Value>(&std::fs::read_to_string(&p).unwrap()) else {
            continue;
        };
        let Some(cell) = v["cells"]
            .as_array_mut()
            .and_then(|c| c.iter_mut().find(|c| c["cell_type"] == "code"))
        else {
            continue;
        };
        let src = cell["source"].as_array_mut().unwrap();
        src.insert(0, Value::from("#mock: sleep 0.3\n"));
        std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    }
}

fn crash_resume() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let copy = root.path().join("corpus");
    copy_dir(&corpus(), &copy);
    slow_down(&copy.join("hosting"));
    let cfg = copy.join("nbrepro.toml");
    let cfg = cfg.to_str().unwrap();
    let args = |ws: &Path| {
        vec![
            "run",
            "--config",
            cfg,
            "--workers",
            "2",
            "--workspace",
            ws.to_str().unwrap(),
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };

    let reference = root.path().join("reference");
    let a = args(&reference);
    let out = nbrepro(&a.iter().map(String::as_str).collect::<Vec<_>>());
    ensure(out.status.success(), || stderr(&out))?;
    let want = funnel_vector(&reference.join("reports"));

    let crashed = root.path().join("crashed");
    let mut child = Command::new(bin())
        .args(args(&crashed))
        .env("RUST_LOG", "info")
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut finished = 0;
    for line in BufReader::new(child.stderr.take().unwrap()).lines() {
        let line = line.map_err(|e| e.to_string())?;
        if line.contains("] notebook ") {
            finished += 1;
            if finished == 3 {
                child.kill().map_err(|e| e.to_string())?;
                break;
            }
        }
    }
    let status = child.wait().map_err(|e| e.to_string())?;
    ensure(!status.success() && finished == 3, || {
        format!("driver was not killed mid-execute ({status})")
    })?;
    let partial = Store::open(&crashed.join("store.sqlite")).map_err(|e| e.to_string())?;
    let done = partial.executions().map_err(|e| e.to_string())?.len();
    let stage_done = partial.stage_done("execute").map_err(|e| e.to_string())?;
    drop(partial);
    ensure(!stage_done && done < 21, || {
        format!("{done} executions recorded before the kill")
    })?;

    let a = args(&crashed);
    let out = nbrepro(&a.iter().map(String::as_str).collect::<Vec<_>>());
    ensure(out.status.success(), || stderr(&out))?;
    let got = funnel_vector(&crashed.join("reports"));
    ensure(got == want, || format!("resumed {got:?} != uninterrupted {want:?}"))?;
    ensure(got == expected_funnel(), || {
        format!("{got:?} is not the fixture funnel")
    })?;
    Ok(format!(
        "killed after {done} executions; resumed funnel equals uninterrupted run"
    ))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 8] = [
        ("fixture funnel exactness", fixture_funnel),
        ("footprint parity", footprint_parity),
        ("link normalization properties", link_properties),
        ("style oracle equivalence", style_oracle),
        ("import extraction oracle", import_oracle),
        ("diff self-reproduction", diff_self_reproduction),
        ("outcome partition invariant", outcome_partition),
        ("crash-resume equivalence", crash_resume),
    ];
    // Failures are reported on their criterion line instead.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
