use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use gencomp_ffi::*;

const SMALL: &str = "name = \"small\"\nconstruction = \"density-q\"\nhorizon = 2000\nschedule = \"constant(1/2, 8)\"\n";

fn last_error() -> String {
    let p = gc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { gc_string_free(s) };
    out
}

fn load(text: &str, ov: Option<GcOverrides>) -> Result<*mut GcScenario, (GcStatus, String)> {
    let c = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    let ovp = ov.as_ref().map_or(ptr::null(), |o| o as *const _);
    match unsafe { gc_scenario_from_toml(c.as_ptr(), ovp, &mut out) } {
        GcStatus::Ok => Ok(out),
        s => Err((s, last_error())),
    }
}

#[test]
fn run_and_read_a_report() {
    let s = load(SMALL, None).unwrap();
    let mut name = ptr::null_mut();
    assert_eq!(unsafe { gc_scenario_name(s, &mut name) }, GcStatus::Ok);
    assert_eq!(take(name), "small");

    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gc_run(s, &mut r) }, GcStatus::Ok);
    assert!(gc_last_error().is_null());
    unsafe {
        assert!(gc_report_passed(r));
        assert!(gc_report_check_count(r) > 0);
        assert_eq!(gc_report_failure_count(r), 0);
    }
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gc_report_json(r, &mut json) }, GcStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(v["construction"], "density-q");

    let tmp = tempfile::tempdir().unwrap();
    let dir = CString::new(tmp.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gc_report_write(r, dir.as_ptr(), GcFormat::Json) }, GcStatus::Ok);
    assert!(tmp.path().join("small.json").exists());
    assert_eq!(unsafe { gc_report_write(r, dir.as_ptr(), GcFormat::CsvBundle) }, GcStatus::Ok);
    assert!(tmp.path().join("small/summary.json").exists());

    unsafe {
        gc_report_free(r);
        gc_scenario_free(s);
    }
}

#[test]
fn overrides_replace_the_horizon() {
    let s = load(SMALL, Some(GcOverrides { horizon: 500, budget: 0 })).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gc_run(s, &mut r) }, GcStatus::Ok);
    let mut json = ptr::null_mut();
    unsafe { gc_report_json(r, &mut json) };
    let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(v["horizon"], 500);
    unsafe {
        gc_report_free(r);
        gc_scenario_free(s);
    }
}

#[test]
fn failing_checks_still_return_a_report() {
    let text = "name = \"failing\"\nconstruction = \"thm12-demo\"\nhorizon = 1024\nbudget = 2000\n\
                oracles = [\"identity\"]\ncandidate = \"identity\"\nmin-avoiding = 1000000\n";
    let s = load(text, None).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gc_run(s, &mut r) }, GcStatus::Ok);
    unsafe {
        assert!(!gc_report_passed(r));
        assert!(gc_report_failure_count(r) >= 1);
        gc_report_free(r);
        gc_scenario_free(s);
    }
}

#[test]
fn errors_map_to_statuses() {
    let (st, msg) = load("name = \"x\"\nconstruction = \"prop1\"\nbogus = 1\n", None).unwrap_err();
    assert_eq!(st, GcStatus::ParseError, "{msg}");
    assert!(msg.contains("bogus"));

    let (st, msg) = load("name = \"bad\"\nconstruction = \"prop1\"\nhorizon = 0\n", None).unwrap_err();
    assert_eq!(st, GcStatus::ValidationError, "{msg}");

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gc_scenario_from_toml(ptr::null(), ptr::null(), &mut out) }, GcStatus::InvalidArgument);
    assert!(out.is_null());
    let c = CString::new(SMALL).unwrap();
    assert_eq!(unsafe { gc_scenario_from_toml(c.as_ptr(), ptr::null(), ptr::null_mut()) }, GcStatus::InvalidArgument);

    let bad = [0xffu8, 0xfe, 0];
    let st = unsafe { gc_scenario_from_toml(bad.as_ptr() as *const c_char, ptr::null(), &mut out) };
    assert_eq!(st, GcStatus::InvalidUtf8);

    let missing = CString::new("/nonexistent/nothing.toml").unwrap();
    let st = unsafe { gc_scenario_from_path(missing.as_ptr(), ptr::null(), &mut out) };
    assert_eq!(st, GcStatus::IoError, "{}", last_error());

    let mut r = ptr::null_mut();
    assert_eq!(unsafe { gc_run(ptr::null(), &mut r) }, GcStatus::InvalidArgument);
    unsafe {
        assert!(!gc_report_passed(ptr::null()));
        assert_eq!(gc_report_check_count(ptr::null()), 0);
        gc_report_free(ptr::null_mut());
        gc_scenario_free(ptr::null_mut());
        gc_string_free(ptr::null_mut());
    }
}

#[test]
fn shipped_scenario_loads_from_path() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/char1-iso.toml");
    let c = CString::new(p.to_str().unwrap()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gc_scenario_from_path(c.as_ptr(), ptr::null(), &mut out) }, GcStatus::Ok);
    unsafe { gc_scenario_free(out) };
}

#[test]
fn static_strings() {
    let v = unsafe { CStr::from_ptr(gc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    let n = unsafe { CStr::from_ptr(gc_status_name(GcStatus::BudgetExhausted)) };
    assert_eq!(n.to_str().unwrap(), "budget exhausted");
}

#[test]
fn header_declares_the_api_and_compiles() {
    let inc = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(inc.join("gencomp.h")).unwrap();
    for f in [
        "gc_scenario_from_toml", "gc_scenario_from_path", "gc_scenario_name", "gc_scenario_free", "gc_run",
        "gc_report_passed", "gc_report_check_count", "gc_report_failure_count", "gc_report_json",
        "gc_report_write", "gc_report_free", "gc_string_free", "gc_last_error", "gc_status_name", "gc_version",
        "typedef struct GcScenario GcScenario", "typedef struct GcReport GcReport", "GC_STATUS_PANIC = 9",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
    // syntax-check the header with a C compiler when one is around
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"gencomp.h\"\nint f(void) { GcScenario *s = 0; GcReport *r = 0;\n\
         return gc_run(s, &r) == GC_STATUS_OK && gc_report_passed(r); }\n",
    )
    .unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(&inc).arg(&src).output() {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler; skipped header compile"),
    }
}
