//! C interface to nbrepro.
//!
//! Every function returns an [`NbrStatus`]. On failure a message is kept per
//! thread and can be read with [`nbr_last_error_message`]. Strings handed out
//! through `out` parameters are owned by the caller and released with
//! [`nbr_string_free`]; handles are released with their own `*_close` or
//! `*_free` function. Passing NULL to a release function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use serde_json::json;

use nbrepro::analysis::{extract_imports, style_check};
use nbrepro::inventory::{parse_notebook, parse_notebook_str, ParsedNotebook};
use nbrepro::jats::{normalize_github_link, Disposition};
use nbrepro::store::reports::{exception_ranking, funnel_report};
use nbrepro::store::{estimate_footprint, FootprintParams, Store};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbrStatus {
    Ok = 0,
    NullArg = 1,
    InvalidUtf8 = 2,
    /// The input was read but rejected: bad notebook, bad number, etc.
    InvalidInput = 3,
    Io = 4,
    Store = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NbrDisposition {
    Normalized = 0,
    ExcludedUserOnly = 1,
    ExcludedPages = 2,
    Malformed = 3,
}

/// Open pipeline store.
pub struct NbrStore {
    inner: Store,
}

/// Parsed notebook.
pub struct NbrNotebook {
    inner: ParsedNotebook,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbrNotebookMetrics {
    pub total_cells: u64,
    pub code_cells: u64,
    pub markdown_cells: u64,
    pub raw_cells: u64,
    pub empty_cells: u64,
    pub cells_with_output: u64,
    /// -1 when no cell has an execution count.
    pub max_execution_count: i64,
    /// NaN when there are no code cells.
    pub md_code_ratio: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbrFootprintParams {
    pub cores: f64,
    pub core_power_w: f64,
    pub usage: f64,
    pub mem_gb: f64,
    pub mem_power_w_per_gb: f64,
    pub pue: f64,
    pub carbon_intensity_kg_per_kwh: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbrFootprint {
    pub energy_kwh: f64,
    pub carbon_kgco2e: f64,
    pub tree_months: f64,
}

impl From<FootprintParams> for NbrFootprintParams {
    fn from(p: FootprintParams) -> Self {
        Self {
            cores: p.cores,
            core_power_w: p.core_power_w,
            usage: p.usage,
            mem_gb: p.mem_gb,
            mem_power_w_per_gb: p.mem_power_w_per_gb,
            pue: p.pue,
            carbon_intensity_kg_per_kwh: p.carbon_intensity_kg_per_kwh,
        }
    }
}

impl From<NbrFootprintParams> for FootprintParams {
    fn from(p: NbrFootprintParams) -> Self {
        Self {
            cores: p.cores,
            core_power_w: p.core_power_w,
            usage: p.usage,
            mem_gb: p.mem_gb,
            mem_power_w_per_gb: p.mem_power_w_per_gb,
            pue: p.pue,
            carbon_intensity_kg_per_kwh: p.carbon_intensity_kg_per_kwh,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(NbrStatus, String);

impl From<nbrepro::Error> for Failure {
    fn from(e: nbrepro::Error) -> Self {
        use nbrepro::Error as E;
        let status = match &e {
            E::Io(_) => NbrStatus::Io,
            E::Store(_) | E::Integrity { .. } => NbrStatus::Store,
            E::Usage(_) | E::Rejected(_) | E::Config(_) | E::Json(_) => NbrStatus::InvalidInput,
            _ => NbrStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, records any failure, and turns panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NbrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NbrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NbrStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NbrStatus::NullArg, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(NbrStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn null_arg(name: &str) -> Failure {
    Failure(NbrStatus::NullArg, format!("{name} is NULL"))
}

fn to_c(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(NbrStatus::Internal, "string contains NUL".into()))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null_arg("out"));
    }
    *out = to_c(s)?;
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn nbr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn nbr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Classifies a repository link. `out_canonical` receives
/// `https://github.com/<owner>/<repo>` for normalized links and NULL
/// otherwise; it may itself be NULL when only the disposition is wanted.
///
/// # Safety
/// `raw` must be a NUL-terminated string; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_normalize_link(
    raw: *const c_char,
    out_disposition: *mut NbrDisposition,
    out_canonical: *mut *mut c_char,
) -> NbrStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        if out_disposition.is_null() {
            return Err(null_arg("out_disposition"));
        }
        let link = normalize_github_link(raw);
        let (d, canonical) = match &link.disposition {
            Disposition::Normalized(u) => (NbrDisposition::Normalized, Some(u.canonical())),
            Disposition::ExcludedUserOnly => (NbrDisposition::ExcludedUserOnly, None),
            Disposition::ExcludedPages => (NbrDisposition::ExcludedPages, None),
            Disposition::Malformed => (NbrDisposition::Malformed, None),
        };
        *out_disposition = d;
        if !out_canonical.is_null() {
            *out_canonical = match canonical {
                Some(c) => to_c(c)?,
                None => ptr::null_mut(),
            };
        }
        Ok(())
    })
}

/// Opens (creating if needed) a pipeline store file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_store_open(path: *const c_char, out: *mut *mut NbrStore) -> NbrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let inner = Store::open(Path::new(path))?;
        *out = Box::into_raw(Box::new(NbrStore { inner }));
        Ok(())
    })
}

/// # Safety
/// `store` must come from [`nbr_store_open`] and not have been closed.
#[no_mangle]
pub unsafe extern "C" fn nbr_store_close(store: *mut NbrStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Funnel counts as a JSON object keyed by stage name.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_store_funnel_json(store: *const NbrStore, out: *mut *mut c_char) -> NbrStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null_arg("store"))?;
        let funnel = funnel_report(&store.inner)?;
        write_string(out, funnel.to_json().to_string())
    })
}

/// Exception classes ranked by frequency, as a JSON array of
/// `{"class", "count", "share"}` objects.
///
/// # Safety
/// `store` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_store_exceptions_json(store: *const NbrStore, out: *mut *mut c_char) -> NbrStatus {
    guard(|| {
        let store = store.as_ref().ok_or_else(|| null_arg("store"))?;
        let rows = exception_ranking(&store.inner)?;
        let v = serde_json::to_value(&rows).map_err(|e| Failure(NbrStatus::Internal, e.to_string()))?;
        write_string(out, v.to_string())
    })
}

fn notebook_out(out: *mut *mut NbrNotebook, parsed: Result<ParsedNotebook, String>) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null_arg("out"));
    }
    let inner = parsed.map_err(|reason| Failure(NbrStatus::InvalidInput, reason))?;
    // SAFETY: checked non-null above; the caller promises it is writable.
    unsafe { *out = Box::into_raw(Box::new(NbrNotebook { inner })) };
    Ok(())
}

/// Parses a notebook file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_parse_file(path: *const c_char, out: *mut *mut NbrNotebook) -> NbrStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if !Path::new(path).is_file() {
            return Err(Failure(NbrStatus::Io, format!("{path}: no such file")));
        }
        notebook_out(out, parse_notebook(Path::new(path), path).map_err(|e| e.reason))
    })
}

/// Parses notebook JSON held in memory.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_parse_str(json: *const c_char, out: *mut *mut NbrNotebook) -> NbrStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        notebook_out(out, parse_notebook_str(text, "<memory>").map_err(|e| e.reason))
    })
}

/// # Safety
/// `nb` must come from a parse function and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_free(nb: *mut NbrNotebook) {
    if !nb.is_null() {
        drop(Box::from_raw(nb));
    }
}

/// # Safety
/// `nb` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_metrics(nb: *const NbrNotebook, out: *mut NbrNotebookMetrics) -> NbrStatus {
    guard(|| {
        let nb = nb.as_ref().ok_or_else(|| null_arg("nb"))?;
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        let m = &nb.inner.record.metrics;
        *out = NbrNotebookMetrics {
            total_cells: m.total_cells,
            code_cells: m.code_cells,
            markdown_cells: m.markdown_cells,
            raw_cells: m.raw_cells,
            empty_cells: m.empty_cells,
            cells_with_output: m.cells_with_output,
            max_execution_count: m.max_execution_count.map_or(-1, |n| n as i64),
            md_code_ratio: m.md_code_ratio.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Language and version as JSON: `{"language": "python", "version": "3.8"}`.
///
/// # Safety
/// `nb` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_language_json(nb: *const NbrNotebook, out: *mut *mut c_char) -> NbrStatus {
    guard(|| {
        let nb = nb.as_ref().ok_or_else(|| null_arg("nb"))?;
        let r = &nb.inner.record;
        write_string(
            out,
            json!({"language": r.language.as_str(), "version": r.language_version}).to_string(),
        )
    })
}

/// Style findings as a JSON array of `{"cell", "line", "column", "code"}`.
///
/// # Safety
/// `nb` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_style_json(nb: *const NbrNotebook, out: *mut *mut c_char) -> NbrStatus {
    guard(|| {
        let nb = nb.as_ref().ok_or_else(|| null_arg("nb"))?;
        let rows: Vec<_> = style_check(0, &nb.inner.cells)
            .into_iter()
            .map(|f| json!({"cell": f.cell_index, "line": f.line, "column": f.column, "code": f.code}))
            .collect();
        write_string(out, serde_json::Value::from(rows).to_string())
    })
}

/// Imports as a JSON array of `{"cell", "line", "module", "top_level"}`.
///
/// # Safety
/// `nb` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_notebook_imports_json(nb: *const NbrNotebook, out: *mut *mut c_char) -> NbrStatus {
    guard(|| {
        let nb = nb.as_ref().ok_or_else(|| null_arg("nb"))?;
        let rows: Vec<_> = extract_imports(0, &nb.inner.cells)
            .into_iter()
            .map(|i| json!({"cell": i.cell_index, "line": i.line, "module": i.module, "top_level": i.top_level}))
            .collect();
        write_string(out, serde_json::Value::from(rows).to_string())
    })
}

/// Fills `out` with the default hardware and grid parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_footprint_default_params(out: *mut NbrFootprintParams) -> NbrStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        *out = FootprintParams::default().into();
        Ok(())
    })
}

/// Energy, carbon and tree-months for `runtime_h` hours. `params` may be
/// NULL for the defaults.
///
/// # Safety
/// `params` must be NULL or readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbr_footprint_estimate(
    runtime_h: f64,
    params: *const NbrFootprintParams,
    out: *mut NbrFootprint,
) -> NbrStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_arg("out"))?;
        let p = params.as_ref().map_or_else(FootprintParams::default, |p| (*p).into());
        let e = estimate_footprint(runtime_h, p)?;
        *out = NbrFootprint {
            energy_kwh: e.energy_kwh,
            carbon_kgco2e: e.carbon_kgco2e,
            tree_months: e.tree_months,
        };
        Ok(())
    })
}
