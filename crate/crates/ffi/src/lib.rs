//! C ABI over the `mecache` solver.
//!
//! Scenarios and reports cross the boundary as opaque handles that the
//! caller releases with the matching `*_free` function. Every fallible
//! call returns a [`MecStatus`]; on failure a message describing the error
//! is available from [`mec_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mecache::scenario::{scenario_from_json, scenario_to_json, GenConfigDoc};
use mecache::schemes::{run_scheme, SchemeConfig};
use mecache::{generate, Error, GenConfig, Scenario, SchemeId, SolveReport};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    InvalidScenario = 4,
    Dimension = 5,
    SchemaVersion = 6,
    Infeasible = 7,
    MaxIter = 8,
    NoInterior = 9,
    Parse = 10,
    Refused = 11,
    Io = 12,
    Panic = 13,
}

/// Scheme selector, mirroring the solver's six schemes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MecScheme {
    Bnb = 0,
    Popularity = 1,
    Relaxation = 2,
    NoCaching = 3,
    FullOffloading = 4,
    FullLocal = 5,
}

impl From<MecScheme> for SchemeId {
    fn from(s: MecScheme) -> Self {
        match s {
            MecScheme::Bnb => SchemeId::Bnb,
            MecScheme::Popularity => SchemeId::Popularity,
            MecScheme::Relaxation => SchemeId::Relaxation,
            MecScheme::NoCaching => SchemeId::NoCaching,
            MecScheme::FullOffloading => SchemeId::FullOffloading,
            MecScheme::FullLocal => SchemeId::FullLocal,
        }
    }
}

/// Energy per phase and term, in Joules.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MecBreakdown {
    pub mec_caching: f64,
    pub offload_caching: f64,
    pub mec_execution: f64,
    pub local_total: f64,
    pub offload_total: f64,
}

/// Opaque scenario handle.
pub struct MecScenario(Scenario);

/// Opaque solve report handle.
pub struct MecReport(SolveReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MecStatus {
    match e {
        Error::Invalid(_) => MecStatus::InvalidScenario,
        Error::Domain(_) => MecStatus::InvalidArgument,
        Error::Dimension(_) => MecStatus::Dimension,
        Error::SchemaVersion { .. } => MecStatus::SchemaVersion,
        Error::Infeasible(_) => MecStatus::Infeasible,
        Error::MaxIter { .. } => MecStatus::MaxIter,
        Error::NoInterior(_) => MecStatus::NoInterior,
        Error::Parse(_) | Error::Json(_) | Error::Csv(_) => MecStatus::Parse,
        Error::Refused(_) => MecStatus::Refused,
        Error::Io(_) => MecStatus::Io,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (MecStatus, String)>) -> MecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MecStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside mecache".into());
            MecStatus::Panic
        }
    }
}

fn lib(e: Error) -> (MecStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MecStatus, String) {
    (MecStatus::NullPointer, format!("{what} is NULL"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MecStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (MecStatus::InvalidUtf8, format!("{what}: {e}")))
}

/// Message of the last failed call on this thread, or NULL after a
/// success. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a scenario. `config_json` holds generator fields (sizes in
/// Kbits, bandwidths in MHz) and may be NULL for the defaults; `seed`
/// always wins over any seed in the JSON.
///
/// # Safety
/// `config_json` must be NULL or a NUL-terminated string; `out` must be a
/// valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_generate(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut MecScenario,
) -> MecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let doc: GenConfigDoc = if config_json.is_null() {
            GenConfigDoc::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?)
                .map_err(|e| (MecStatus::Parse, format!("config_json: {e}")))?
        };
        let cfg = GenConfig { seed, ..GenConfig::from(doc) };
        let s = generate(&cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(MecScenario(s)));
        Ok(())
    })
}

/// Parses a `scenario/v1` JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_from_json(json: *const c_char, out: *mut *mut MecScenario) -> MecStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = scenario_from_json(read_str(json, "json")?).map_err(lib)?;
        *out = Box::into_raw(Box::new(MecScenario(s)));
        Ok(())
    })
}

/// Serializes a scenario. The string must be released with [`mec_string_free`].
///
/// # Safety
/// `scenario` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_to_json(scenario: *const MecScenario, out: *mut *mut c_char) -> MecStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = scenario_to_json(&s.0).map_err(lib)?;
        *out = CString::new(text).map_err(|e| (MecStatus::Parse, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Number of tasks in the library, or 0 for a NULL handle.
///
/// # Safety
/// `scenario` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_num_tasks(scenario: *const MecScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.params.num_tasks)
}

/// # Safety
/// `scenario` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mec_scenario_free(scenario: *mut MecScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs one scheme. `epsilon` is the branch-and-bound gap target in Joules
/// and `max_tasks` refuses branch-and-bound schemes on larger libraries
/// (0 disables the limit).
///
/// # Safety
/// `scenario` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mec_solve(
    scenario: *const MecScenario,
    scheme: MecScheme,
    epsilon: f64,
    max_tasks: usize,
    out: *mut *mut MecReport,
) -> MecStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let id = SchemeId::from(scheme);
        let l = s.0.params.num_tasks;
        if id.uses_bnb() && max_tasks > 0 && l > max_tasks {
            return Err((MecStatus::Refused, format!("{id} is limited to {max_tasks} tasks, scenario has {l}")));
        }
        let mut cfg = SchemeConfig::default();
        cfg.bnb.epsilon = epsilon;
        let r = run_scheme(&s.0, id, &cfg).map_err(lib)?;
        *out = Box::into_raw(Box::new(MecReport(r)));
        Ok(())
    })
}

/// Weighted objective in Joules, or NaN for a NULL handle.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_report_objective(report: *const MecReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.objective)
}

/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_report_kkt_residual(report: *const MecReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.kkt_residual)
}

/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_report_gap(report: *const MecReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.bnb_gap)
}

/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mec_report_node_count(report: *const MecReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.node_count)
}

/// # Safety
/// `report` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mec_report_breakdown(report: *const MecReport, out: *mut MecBreakdown) -> MecStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let b = &r.0.breakdown;
        *out = MecBreakdown {
            mec_caching: b.mec_caching,
            offload_caching: b.offload_caching,
            mec_execution: b.mec_execution,
            local_total: b.local_total(),
            offload_total: b.offload_total(),
        };
        Ok(())
    })
}

/// Writes one byte per task (1 cached, 0 not) into `buf`, which must hold
/// at least `len` bytes with `len` equal to the number of tasks.
///
/// # Safety
/// `report` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mec_report_placement(report: *const MecReport, buf: *mut u8, len: usize) -> MecStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let cached = r.0.placement.as_bools().ok_or_else(|| {
            (MecStatus::InvalidArgument, "report placement has undecided tasks".to_string())
        })?;
        if len != cached.len() {
            return Err((MecStatus::Dimension, format!("buffer holds {len} bytes, placement has {}", cached.len())));
        }
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, c) in dst.iter_mut().zip(cached) {
            *d = u8::from(c);
        }
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mec_report_free(report: *mut MecReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
