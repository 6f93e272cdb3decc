//! C ABI for loading scenarios, running them and reading the reports.
//!
//! Handles are opaque and owned by the caller once returned; free them with the
//! matching `*_free` function. Strings returned through `char **` are owned
//! by the caller and must be released with [`gc_string_free`]. Every entry point
//! returns a [`GcStatus`]; on failure [`gc_last_error`] describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gencomp::report::{emit_report, Report};
use gencomp::runner::run_scenario;
use gencomp::scenario::{Format, Overrides, Scenario};
use gencomp::Error;

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    /// A required pointer was null or an enum value was out of range.
    InvalidArgument = 1,
    InvalidUtf8 = 2,
    /// The scenario text is not valid TOML or has unknown keys.
    ParseError = 3,
    /// The scenario parsed but failed validation.
    ValidationError = 4,
    /// A stage search ran out of budget.
    BudgetExhausted = 5,
    InvariantViolation = 6,
    /// The input does not meet a construction's requirements.
    Precondition = 7,
    IoError = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcFormat {
    Json = 0,
    CsvBundle = 1,
}

/// Optional replacements for the scenario's horizon and budget; zero keeps the file's value.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GcOverrides {
    pub horizon: u64,
    pub budget: u64,
}

/// A validated scenario.
pub struct GcScenario {
    inner: Scenario,
}

/// The outcome of running a scenario.
pub struct GcReport {
    inner: Report,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> GcStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::Parse(_) => GcStatus::ParseError,
        Error::Validation(_) | Error::Scenario(_) => GcStatus::ValidationError,
        Error::Exhausted { .. } | Error::BudgetExceeded { .. } => GcStatus::BudgetExhausted,
        Error::InvariantViolation(_) | Error::Containment { .. } | Error::InvalidS1(_) => GcStatus::InvariantViolation,
        Error::Precondition(_) | Error::Schedule(_) | Error::Unsupported(_) => GcStatus::Precondition,
        Error::Io(_) | Error::Json(_) => GcStatus::IoError,
    }
}

struct Failure(GcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Run `body`, recording any failure (panics included) as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> GcStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            GcStatus::Panic
        }
    }
}

fn invalid(what: &str) -> Failure {
    Failure(GcStatus::InvalidArgument, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(GcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid("output pointer"));
    }
    *out = CString::new(s).map_err(|_| Failure(GcStatus::InvariantViolation, "string contains NUL".into()))?.into_raw();
    Ok(())
}

/// # Safety
/// `ov` must be null or point to a valid `GcOverrides`.
unsafe fn overrides(ov: *const GcOverrides) -> Overrides {
    match ov.as_ref() {
        None => Overrides::default(),
        Some(o) => Overrides {
            horizon: (o.horizon != 0).then_some(o.horizon),
            budget: (o.budget != 0).then_some(o.budget),
        },
    }
}

/// Parse and validate a scenario from TOML text. `overrides` may be null.
///
/// # Safety
/// `toml` must be a NUL-terminated string, `overrides` null or valid, and `out`
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_scenario_from_toml(
    toml: *const c_char,
    overrides: *const GcOverrides,
    out: *mut *mut GcScenario,
) -> GcStatus {
    guard(|| {
        let text = read_str(toml, "toml")?;
        let s = Scenario::from_toml(text, &self::overrides(overrides))?;
        put(out, GcScenario { inner: s })
    })
}

/// Load and validate a scenario file. `overrides` may be null.
///
/// # Safety
/// As for [`gc_scenario_from_toml`], with `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn gc_scenario_from_path(
    path: *const c_char,
    overrides: *const GcOverrides,
    out: *mut *mut GcScenario,
) -> GcStatus {
    guard(|| {
        let p = read_str(path, "path")?;
        let s = Scenario::load(Path::new(p), &self::overrides(overrides))?;
        put(out, GcScenario { inner: s })
    })
}

/// The scenario's name, as a new string.
///
/// # Safety
/// `scenario` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn gc_scenario_name(scenario: *const GcScenario, out: *mut *mut c_char) -> GcStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| invalid("scenario"))?;
        put_string(out, s.inner.name.clone())
    })
}

/// Run a scenario. A report whose checks fail is still returned with `GC_STATUS_OK`;
/// query it with [`gc_report_passed`].
///
/// # Safety
/// `scenario` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn gc_run(scenario: *const GcScenario, out: *mut *mut GcReport) -> GcStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| invalid("scenario"))?;
        let r = run_scenario(&s.inner)?;
        put(out, GcReport { inner: r })
    })
}

/// True when the report has at least one check and every check passed.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gc_report_passed(report: *const GcReport) -> bool {
    report.as_ref().is_some_and(|r| !r.inner.invariants.is_empty() && r.inner.passed())
}

/// Number of checks recorded, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gc_report_check_count(report: *const GcReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.invariants.len())
}

/// Number of failed checks, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gc_report_failure_count(report: *const GcReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.failures().count())
}

/// The report as sorted-key JSON, identical to the `.json` file the CLI writes.
///
/// # Safety
/// `report` must be a live handle and `out` valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn gc_report_json(report: *const GcReport, out: *mut *mut c_char) -> GcStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| invalid("report"))?;
        put_string(out, r.inner.to_json()?)
    })
}

/// Write the report under `dir` in the given format.
///
/// # Safety
/// `report` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn gc_report_write(report: *const GcReport, dir: *const c_char, format: GcFormat) -> GcStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| invalid("report"))?;
        let d = read_str(dir, "dir")?;
        let f = match format {
            GcFormat::Json => Format::Json,
            GcFormat::CsvBundle => Format::CsvBundle,
        };
        emit_report(&r.inner, f, Path::new(d))?;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_scenario_free(scenario: *mut GcScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_report_free(report: *mut GcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// A static name for a status code.
#[no_mangle]
pub extern "C" fn gc_status_name(status: GcStatus) -> *const c_char {
    let s: &'static CStr = match status {
        GcStatus::Ok => c"ok",
        GcStatus::InvalidArgument => c"invalid argument",
        GcStatus::InvalidUtf8 => c"invalid utf-8",
        GcStatus::ParseError => c"parse error",
        GcStatus::ValidationError => c"validation error",
        GcStatus::BudgetExhausted => c"budget exhausted",
        GcStatus::InvariantViolation => c"invariant violation",
        GcStatus::Precondition => c"precondition failed",
        GcStatus::IoError => c"i/o error",
        GcStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// The library version as a static string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}
