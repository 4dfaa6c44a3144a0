//! C interface to the planner and simulator.
//!
//! Every fallible function returns an [`SgStatus`]. On failure a message is
//! available from [`sg_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and must be released with
//! [`sg_string_free`]; scenarios with [`sg_scenario_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sensorgame::sim::{compare_modes, render, run_scenario_mode, strip_timings, OutputFormat, PlanMode, ScenarioConfig};
use sensorgame::verify::run_builtin_checks;
use sensorgame::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ConfigError = 4,
    RuntimeError = 5,
    Panic = 6,
}

/// Planning modes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgMode {
    /// Use the mode in the scenario file.
    Configured = -1,
    Myopic = 0,
    OpenLoop = 1,
    OpenLoopFeedback = 2,
}

/// A validated scenario. Opaque to C.
pub struct SgScenario {
    config: ScenarioConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn from_core(e: Error) -> SgStatus {
    let status = match e {
        Error::Config { .. } => SgStatus::ConfigError,
        _ => SgStatus::RuntimeError,
    };
    set_error(e.to_string());
    status
}

/// Runs `f`, converting panics into [`SgStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), SgStatus>) -> SgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SgStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, SgStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(SgStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        SgStatus::InvalidUtf8
    })
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), SgStatus> {
    let c = CString::new(s).map_err(|_| {
        set_error("output contains an interior NUL byte");
        SgStatus::RuntimeError
    })?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), SgStatus> {
    if out.is_null() {
        set_error("null output pointer");
        Err(SgStatus::NullArgument)
    } else {
        Ok(())
    }
}

fn resolve_mode(cfg: &ScenarioConfig, mode: i32) -> Result<PlanMode, SgStatus> {
    match mode {
        m if m == SgMode::Configured as i32 => Ok(cfg.planning.mode),
        m if m == SgMode::Myopic as i32 => Ok(PlanMode::Myopic),
        m if m == SgMode::OpenLoop as i32 => Ok(PlanMode::Ol),
        m if m == SgMode::OpenLoopFeedback as i32 => Ok(PlanMode::Olf),
        other => {
            set_error(format!("unknown mode {other}"));
            Err(SgStatus::InvalidArgument)
        }
    }
}

/// Parses and validates a scenario given as TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_scenario_from_toml(toml: *const c_char, out: *mut *mut SgScenario) -> SgStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let text = read_str(toml)?;
        let config = ScenarioConfig::from_toml_str(text).map_err(from_core)?;
        *out = Box::into_raw(Box::new(SgScenario { config }));
        Ok(())
    })
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_scenario_load(path: *const c_char, out: *mut *mut SgScenario) -> SgStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let path = read_str(path)?;
        let config = ScenarioConfig::load(path).map_err(from_core)?;
        *out = Box::into_raw(Box::new(SgScenario { config }));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_scenario_free(scenario: *mut SgScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of targets and sensors in a scenario.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_scenario_counts(
    scenario: *const SgScenario,
    num_targets: *mut usize,
    num_sensors: *mut usize,
) -> SgStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| {
            set_error("null scenario");
            SgStatus::NullArgument
        })?;
        check_out(num_targets)?;
        check_out(num_sensors)?;
        *num_targets = s.config.targets.len();
        *num_sensors = s.config.sensors.len();
        Ok(())
    })
}

/// Simulates one run and writes its metrics and log as JSON. `mode` is one
/// of the [`SgMode`] values.
///
/// # Safety
/// `scenario` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_run_json(
    scenario: *const SgScenario,
    mode: i32,
    seed: u64,
    out_json: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| {
            set_error("null scenario");
            SgStatus::NullArgument
        })?;
        check_out(out_json)?;
        *out_json = ptr::null_mut();
        let mode = resolve_mode(&s.config, mode)?;
        let (mut metrics, log) = run_scenario_mode(&s.config, mode, seed).map_err(from_core)?;
        metrics.wall_times = None;
        let json = format!(
            "{{\"metrics\":{},\"log\":{}}}",
            serialize(&metrics)?,
            serialize(&log)?
        );
        write_string(out_json, json)
    })
}

fn serialize<T: serde::Serialize>(v: &T) -> Result<String, SgStatus> {
    serde_json::to_string(v).map_err(|e| {
        set_error(e.to_string());
        SgStatus::RuntimeError
    })
}

/// Runs the three planning modes on `runs` shared seeds starting at `seed`
/// and writes the aggregate table as CSV. `jobs == 0` uses every core.
///
/// # Safety
/// `scenario` and `out_csv` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_compare_csv(
    scenario: *const SgScenario,
    runs: usize,
    seed: u64,
    jobs: usize,
    out_csv: *mut *mut c_char,
) -> SgStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| {
            set_error("null scenario");
            SgStatus::NullArgument
        })?;
        check_out(out_csv)?;
        *out_csv = ptr::null_mut();
        if runs == 0 {
            set_error("runs must be at least 1");
            return Err(SgStatus::InvalidArgument);
        }
        let jobs = (jobs > 0).then_some(jobs);
        let mut c = compare_modes(&s.config, &PlanMode::ALL, runs, seed, jobs).map_err(from_core)?;
        strip_timings(&mut c);
        write_string(out_csv, render(&c, OutputFormat::Csv).map_err(from_core)?)
    })
}

/// Runs the built-in invariant checks on `instances` random games.
/// `all_passed` receives 1 when every check passed, else 0.
///
/// # Safety
/// `all_passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_verify(seed: u64, instances: usize, all_passed: *mut i32) -> SgStatus {
    guard(|| {
        check_out(all_passed)?;
        let reports = run_builtin_checks(seed, instances).map_err(from_core)?;
        *all_passed = reports.iter().all(|r| r.passed) as i32;
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into this library from the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
