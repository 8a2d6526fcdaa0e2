//! C ABI over the simulator, checker and metrics.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Strings returned through out-pointers are NUL-terminated UTF-8
//! and must be released with `mm_string_free`. Every entry point returns an
//! `MmStatus`; on failure `mm_last_error` describes the cause.

use minimmit::checker::check_all;
use minimmit::config::ScenarioConfig;
use minimmit::metrics::{MetricsOptions, MetricsReport};
use minimmit::sim::run;
use minimmit::trace::Trace;
use minimmit::types::{lead, Progression, ProtocolParams, Time, View};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmStatus {
    MmOk = 0,
    MmNullArg = 1,
    MmInvalidUtf8 = 2,
    MmConfigError = 3,
    MmParseError = 4,
    /// The call succeeded and at least one check failed.
    MmCheckFailed = 5,
    MmPanic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmProgression {
    /// Advance on 2f+1 votes.
    MmMini = 0,
    /// Advance on n-f votes.
    MmLarge = 1,
}

/// A scenario configuration; validated when run.
pub struct MmScenario(ScenarioConfig);

/// A completed run or a parsed trace file.
pub struct MmTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior NULs replaced"));
}

/// Runs `f`, recording its error and mapping panics to `MmPanic`.
fn guard(f: impl FnOnce() -> Result<(), (MmStatus, String)>) -> MmStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmStatus::MmOk,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MmStatus::MmPanic
        }
    }
}

fn null(what: &str) -> (MmStatus, String) {
    (MmStatus::MmNullArg, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (MmStatus::MmInvalidUtf8, format!("`{what}`: {e}")))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("interior NULs replaced")
        .into_raw()
}

unsafe fn write_out<T>(out: *mut *mut T, value: *mut T) {
    *out = value;
}

/// Parses a scenario from JSON. On success `*out` owns a new handle.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_scenario_from_json(
    json: *const c_char,
    out: *mut *mut MmScenario,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let cfg = ScenarioConfig::from_json(text)
            .map_err(|e| (MmStatus::MmConfigError, e.to_string()))?;
        cfg.validate()
            .map_err(|e| (MmStatus::MmConfigError, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(MmScenario(cfg))));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_scenario_free(scenario: *mut MmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_scenario_set_seed(scenario: *mut MmScenario, seed: u64) -> MmStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.0.seed = seed;
        Ok(())
    })
}

/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_scenario_set_progression(
    scenario: *mut MmScenario,
    progression: MmProgression,
) -> MmStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null("scenario"))?;
        s.0.progression = match progression {
            MmProgression::MmMini => Progression::Mini,
            MmProgression::MmLarge => Progression::Large,
        };
        Ok(())
    })
}

/// Simulates the scenario. On success `*out` owns a new trace handle.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_run(scenario: *const MmScenario, out: *mut *mut MmTrace) -> MmStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null("scenario"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let trace = run(&s.0).map_err(|e| (MmStatus::MmConfigError, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(MmTrace(trace))));
        Ok(())
    })
}

/// Parses a JSON Lines trace. On success `*out` owns a new handle.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_trace_from_jsonl(
    jsonl: *const c_char,
    out: *mut *mut MmTrace,
) -> MmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(jsonl, "jsonl")?;
        let trace = Trace::from_jsonl(text).map_err(|e| (MmStatus::MmParseError, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(MmTrace(trace))));
        Ok(())
    })
}

/// Releases a trace. Null is ignored.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_trace_free(trace: *mut MmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of events in the trace; 0 for null.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_trace_event_count(trace: *const MmTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.events.len())
}

/// Serializes the trace as JSON Lines into `*out`.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_trace_to_jsonl(
    trace: *const MmTrace,
    out: *mut *mut c_char,
) -> MmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_out(out, to_c_string(t.0.to_jsonl()));
        Ok(())
    })
}

/// Runs every check and writes the verdicts as JSON into `*out`.
/// Returns `MM_CHECK_FAILED` when any check fails; `*out` is still set.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_trace_check(trace: *const MmTrace, out: *mut *mut c_char) -> MmStatus {
    let mut failed = false;
    let status = guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = check_all(&t.0);
        failed = !report.all_pass;
        let json =
            serde_json::to_string(&report).map_err(|e| (MmStatus::MmPanic, e.to_string()))?;
        write_out(out, to_c_string(json));
        Ok(())
    });
    if status == MmStatus::MmOk && failed {
        set_error("at least one check failed");
        return MmStatus::MmCheckFailed;
    }
    status
}

/// Computes latency metrics, skipping `warmup_views` views, as JSON into `*out`.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_trace_metrics(
    trace: *const MmTrace,
    warmup_views: u64,
    out: *mut *mut c_char,
) -> MmStatus {
    guard(|| {
        let t = trace.as_ref().ok_or_else(|| null("trace"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = MetricsReport::compute(&t.0, MetricsOptions { warmup_views });
        let json =
            serde_json::to_string(&report).map_err(|e| (MmStatus::MmPanic, e.to_string()))?;
        write_out(out, to_c_string(json));
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn params(n: u32, f: u32) -> Result<ProtocolParams, (MmStatus, String)> {
    ProtocolParams::new(n, f, Time(1), Progression::Mini)
        .map_err(|e| (MmStatus::MmConfigError, e.to_string()))
}

/// Votes needed for an M-notarization or a nullification.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_m_quorum(n: u32, f: u32, out: *mut u32) -> MmStatus {
    guard(|| {
        let p = params(n, f)?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.m_quorum() as u32;
        Ok(())
    })
}

/// Votes needed for an L-notarization.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_l_quorum(n: u32, f: u32, out: *mut u32) -> MmStatus {
    guard(|| {
        let p = params(n, f)?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.l_quorum() as u32;
        Ok(())
    })
}

/// Leader of `view` among `n` processors. View 0 has no leader.
///
/// # Safety
///
/// Pointer arguments must be null or valid for the access described, and
/// handles must come from this library and not yet be freed.
#[no_mangle]
pub unsafe extern "C" fn mm_leader(view: u64, n: u32, out: *mut u32) -> MmStatus {
    guard(|| {
        if n == 0 {
            return Err((MmStatus::MmConfigError, "n must be positive".into()));
        }
        let p = lead(View(view), n).map_err(|e| (MmStatus::MmConfigError, e.to_string()))?;
        *out.as_mut().ok_or_else(|| null("out"))? = p.0;
        Ok(())
    })
}
