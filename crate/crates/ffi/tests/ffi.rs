use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use nbrepro::analysis::STYLE_CODES;
use nbrepro::pipeline::{Pipeline, Settings};
use nbrepro::store::reports::funnel_report;
use nbrepro_ffi::*;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a string returned by the library.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    nbr_string_free(p);
    s
}

fn last_error() -> String {
    let p = nbr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn normalize(raw: &str) -> (NbrDisposition, Option<String>) {
    let raw = c(raw);
    let mut d = NbrDisposition::Malformed;
    let mut out = ptr::null_mut();
    let st = unsafe { nbr_normalize_link(raw.as_ptr(), &mut d, &mut out) };
    assert_eq!(st, NbrStatus::Ok);
    let canon = (!out.is_null()).then(|| unsafe { take(out) });
    (d, canon)
}

#[test]
fn links_classify() {
    assert_eq!(
        normalize("https://github.com/KimLab/CellCount.git/"),
        (
            NbrDisposition::Normalized,
            Some("https://github.com/KimLab/CellCount".into())
        )
    );
    assert_eq!(
        normalize("git@github.com:santos/pipeline.git"),
        (
            NbrDisposition::Normalized,
            Some("https://github.com/santos/pipeline".into())
        )
    );
    assert_eq!(
        normalize("https://github.com/kimlab").0,
        NbrDisposition::ExcludedUserOnly
    );
    assert_eq!(
        normalize("https://kimlab.github.io/cellcount").0,
        NbrDisposition::ExcludedPages
    );

    // The canonical pointer is optional.
    let raw = c("github.com/a/b");
    let mut d = NbrDisposition::Malformed;
    assert_eq!(
        unsafe { nbr_normalize_link(raw.as_ptr(), &mut d, ptr::null_mut()) },
        NbrStatus::Ok
    );
    assert_eq!(d, NbrDisposition::Normalized);
}

#[test]
fn bad_arguments() {
    let mut d = NbrDisposition::Normalized;
    let st = unsafe { nbr_normalize_link(ptr::null(), &mut d, ptr::null_mut()) };
    assert_eq!(st, NbrStatus::NullArg);
    assert!(last_error().contains("raw"));

    let bad = [0xffu8, 0xfe, 0];
    let st = unsafe { nbr_normalize_link(bad.as_ptr().cast(), &mut d, ptr::null_mut()) };
    assert_eq!(st, NbrStatus::InvalidUtf8);

    let raw = c("https://github.com/a/b");
    assert_eq!(
        unsafe { nbr_normalize_link(raw.as_ptr(), ptr::null_mut(), ptr::null_mut()) },
        NbrStatus::NullArg
    );

    // A successful call clears the message.
    normalize("https://github.com/a/b");
    assert!(nbr_last_error_message().is_null());

    // Releasing NULL is harmless.
    unsafe {
        nbr_string_free(ptr::null_mut());
        nbr_store_close(ptr::null_mut());
        nbr_notebook_free(ptr::null_mut());
    }
}

#[test]
fn store_reports_match_core() {
    let ws = tempfile::tempdir().unwrap();
    let mut settings = Settings::from_toml_file(&corpus().join("nbrepro.toml")).unwrap();
    settings.workspace = Some(ws.path().to_path_buf());
    let mut p = Pipeline::open(settings.resolve().unwrap()).unwrap();
    for stage in ["mine", "harvest", "inventory"] {
        p.run_stage(stage).unwrap();
    }
    let want = funnel_report(&p.store).unwrap().to_json();
    drop(p);

    let path = c(ws.path().join("store.sqlite").to_str().unwrap());
    let mut store = ptr::null_mut();
    assert_eq!(unsafe { nbr_store_open(path.as_ptr(), &mut store) }, NbrStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nbr_store_funnel_json(store, &mut out) }, NbrStatus::Ok);
    let got: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(got, want);
    assert_eq!(got["links_found"], 16);
    assert_eq!(got["notebooks_total"], 30);
    assert_eq!(got["python"], 26);

    // Nothing executed yet.
    assert_eq!(unsafe { nbr_store_exceptions_json(store, &mut out) }, NbrStatus::Ok);
    assert_eq!(unsafe { take(out) }, "[]");
    unsafe { nbr_store_close(store) };
}

#[test]
fn store_open_failure() {
    let dir = tempfile::tempdir().unwrap();
    // The parent "directory" is a plain file.
    std::fs::write(dir.path().join("f"), "x").unwrap();
    let path = c(dir.path().join("f/store.sqlite").to_str().unwrap());
    let mut store = ptr::null_mut();
    let st = unsafe { nbr_store_open(path.as_ptr(), &mut store) };
    assert_eq!(st, NbrStatus::Io);
    assert!(store.is_null());
    assert!(!last_error().is_empty());

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { nbr_store_funnel_json(ptr::null(), &mut out) },
        NbrStatus::NullArg
    );
}

fn parse_file(path: &Path) -> (NbrStatus, *mut NbrNotebook) {
    let p = c(path.to_str().unwrap());
    let mut nb = ptr::null_mut();
    let st = unsafe { nbr_notebook_parse_file(p.as_ptr(), &mut nb) };
    (st, nb)
}

#[test]
fn notebook_from_file() {
    let (st, nb) = parse_file(&corpus().join("hosting/kimlab/cellcount/tree/notebooks/04_scratch.ipynb"));
    assert_eq!(st, NbrStatus::Ok);

    let mut m = NbrNotebookMetrics {
        total_cells: 0,
        code_cells: 0,
        markdown_cells: 0,
        raw_cells: 0,
        empty_cells: 0,
        cells_with_output: 0,
        max_execution_count: 0,
        md_code_ratio: 0.0,
    };
    assert_eq!(unsafe { nbr_notebook_metrics(nb, &mut m) }, NbrStatus::Ok);
    assert!(m.code_cells > 0);
    assert_eq!(m.total_cells, m.code_cells + m.markdown_cells + m.raw_cells);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nbr_notebook_language_json(nb, &mut out) }, NbrStatus::Ok);
    let lang: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(lang["language"], "python");

    assert_eq!(unsafe { nbr_notebook_style_json(nb, &mut out) }, NbrStatus::Ok);
    let style: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    let style = style.as_array().unwrap();
    assert_eq!(style.len(), 13);
    let known: Vec<&str> = STYLE_CODES.iter().map(|(code, _)| *code).collect();
    assert!(style.iter().all(|f| known.contains(&f["code"].as_str().unwrap())));

    assert_eq!(unsafe { nbr_notebook_imports_json(nb, &mut out) }, NbrStatus::Ok);
    let imports: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert!(!imports.as_array().unwrap().is_empty());
    unsafe { nbr_notebook_free(nb) };

    let (st, nb) = parse_file(&corpus().join("hosting/lee/broken-nbs/tree/truncated.ipynb"));
    assert_eq!(st, NbrStatus::InvalidInput);
    assert!(nb.is_null());
    let (st, _) = parse_file(Path::new("/nonexistent/x.ipynb"));
    assert_eq!(st, NbrStatus::Io);
}

#[test]
fn notebook_from_memory() {
    let text = c(r##"{"nbformat": 4, "nbformat_minor": 5,
        "metadata": {"kernelspec": {"name": "python3", "language": "python"}},
        "cells": [
          {"cell_type": "markdown", "metadata": {}, "source": "# t"},
          {"cell_type": "code", "metadata": {}, "execution_count": 3, "outputs": [],
           "source": ["import os.path\n", "from collections import OrderedDict\n", "x=1\n"]}
        ]}"##);
    let mut nb = ptr::null_mut();
    assert_eq!(unsafe { nbr_notebook_parse_str(text.as_ptr(), &mut nb) }, NbrStatus::Ok);

    let mut m = unsafe { std::mem::zeroed::<NbrNotebookMetrics>() };
    assert_eq!(unsafe { nbr_notebook_metrics(nb, &mut m) }, NbrStatus::Ok);
    assert_eq!((m.total_cells, m.code_cells, m.markdown_cells), (2, 1, 1));
    assert_eq!(m.max_execution_count, 3);
    assert_eq!(m.md_code_ratio, 1.0);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { nbr_notebook_imports_json(nb, &mut out) }, NbrStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    let mods: Vec<(&str, &str)> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|i| (i["module"].as_str().unwrap(), i["top_level"].as_str().unwrap()))
        .collect();
    assert_eq!(mods, vec![("os.path", "os"), ("collections", "collections")]);

    assert_eq!(unsafe { nbr_notebook_style_json(nb, &mut out) }, NbrStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    let codes: Vec<(u64, u64, &str)> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            (
                f["cell"].as_u64().unwrap(),
                f["line"].as_u64().unwrap(),
                f["code"].as_str().unwrap(),
            )
        })
        .collect();
    assert!(codes.contains(&(1, 3, "E225")), "{codes:?}");
    unsafe { nbr_notebook_free(nb) };

    let junk = c("{");
    let mut nb = ptr::null_mut();
    assert_eq!(
        unsafe { nbr_notebook_parse_str(junk.as_ptr(), &mut nb) },
        NbrStatus::InvalidInput
    );
    assert!(last_error().contains("json"));
}

#[test]
fn no_code_cells_gives_nan_ratio() {
    let text = c(r#"{"nbformat": 4, "nbformat_minor": 2, "metadata": {},
        "cells": [{"cell_type": "markdown", "metadata": {}, "source": "hi"}]}"#);
    let mut nb = ptr::null_mut();
    assert_eq!(unsafe { nbr_notebook_parse_str(text.as_ptr(), &mut nb) }, NbrStatus::Ok);
    let mut m = unsafe { std::mem::zeroed::<NbrNotebookMetrics>() };
    assert_eq!(unsafe { nbr_notebook_metrics(nb, &mut m) }, NbrStatus::Ok);
    assert!(m.md_code_ratio.is_nan());
    assert_eq!(m.max_execution_count, -1);
    unsafe { nbr_notebook_free(nb) };
}

#[test]
fn footprint() {
    let mut p = unsafe { std::mem::zeroed::<NbrFootprintParams>() };
    assert_eq!(unsafe { nbr_footprint_default_params(&mut p) }, NbrStatus::Ok);
    assert_eq!(p.cores, 36.0);

    let mut a = unsafe { std::mem::zeroed::<NbrFootprint>() };
    let mut b = a;
    assert_eq!(
        unsafe { nbr_footprint_estimate(10.0, ptr::null(), &mut a) },
        NbrStatus::Ok
    );
    assert_eq!(unsafe { nbr_footprint_estimate(10.0, &p, &mut b) }, NbrStatus::Ok);
    assert_eq!(a, b);
    // Power draw at defaults: (36 * 10 + 192 * 0.3725) W * 1.67 = 720.7 W.
    let watts = (36.0 * 10.0 + 192.0 * 0.3725) * 1.67;
    assert!((a.energy_kwh - watts * 10.0 / 1000.0).abs() < 1e-9);

    // Linear in runtime.
    assert_eq!(
        unsafe { nbr_footprint_estimate(20.0, ptr::null(), &mut b) },
        NbrStatus::Ok
    );
    assert!((b.carbon_kgco2e - 2.0 * a.carbon_kgco2e).abs() < 1e-9);

    assert_eq!(
        unsafe { nbr_footprint_estimate(-1.0, ptr::null(), &mut b) },
        NbrStatus::InvalidInput
    );
    assert_eq!(
        unsafe { nbr_footprint_estimate(f64::NAN, ptr::null(), &mut b) },
        NbrStatus::InvalidInput
    );
    p.pue = -2.0;
    assert_eq!(
        unsafe { nbr_footprint_estimate(1.0, &p, &mut b) },
        NbrStatus::InvalidInput
    );
    assert_eq!(
        unsafe { nbr_footprint_estimate(1.0, ptr::null(), ptr::null_mut()) },
        NbrStatus::NullArg
    );
}
