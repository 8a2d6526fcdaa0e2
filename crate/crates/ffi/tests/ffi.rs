use minimmit_ffi::*;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

fn preset(name: &str) -> CString {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../core/presets/{name}.json"));
    CString::new(std::fs::read_to_string(path).unwrap()).unwrap()
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { mm_string_free(p) };
    s
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mm_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn scenario(name: &str) -> *mut MmScenario {
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { mm_scenario_from_json(preset(name).as_ptr(), &mut s) },
        MmStatus::MmOk
    );
    s
}

fn run(s: *const MmScenario) -> *mut MmTrace {
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { mm_run(s, &mut t) },
        MmStatus::MmOk,
        "{}",
        last_error()
    );
    t
}

#[test]
fn run_check_and_measure() {
    let s = scenario("honest_6");
    let t = run(s);
    assert!(unsafe { mm_trace_event_count(t) } > 0);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mm_trace_check(t, &mut out) }, MmStatus::MmOk);
    let verdicts: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(verdicts["all_pass"], true);
    assert_eq!(unsafe { mm_trace_metrics(t, 2, &mut out) }, MmStatus::MmOk);
    let metrics: serde_json::Value = serde_json::from_str(&take_string(out)).unwrap();
    assert!(metrics["view_latency"]["mean"].as_f64().unwrap() > 0.0);
    unsafe {
        mm_trace_free(t);
        mm_scenario_free(s);
    }
}

#[test]
fn same_seed_same_trace_and_seed_changes_it() {
    let s = scenario("silent_leader_6");
    let jsonl = |s| {
        let t = run(s);
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { mm_trace_to_jsonl(t, &mut out) }, MmStatus::MmOk);
        unsafe { mm_trace_free(t) };
        take_string(out)
    };
    let a = jsonl(s);
    assert_eq!(a, jsonl(s));
    assert_eq!(unsafe { mm_scenario_set_seed(s, 9) }, MmStatus::MmOk);
    assert_ne!(a, jsonl(s));
    assert_eq!(
        unsafe { mm_scenario_set_progression(s, MmProgression::MmLarge) },
        MmStatus::MmOk
    );
    assert!(jsonl(s).contains("\"progression\":\"large\""));
    unsafe { mm_scenario_free(s) };
}

#[test]
fn jsonl_roundtrip() {
    let s = scenario("equivocating_leader_6");
    let t = run(s);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mm_trace_to_jsonl(t, &mut out) }, MmStatus::MmOk);
    let text = CString::new(take_string(out)).unwrap();
    let mut parsed = ptr::null_mut();
    assert_eq!(
        unsafe { mm_trace_from_jsonl(text.as_ptr(), &mut parsed) },
        MmStatus::MmOk
    );
    assert_eq!(unsafe { mm_trace_event_count(parsed) }, unsafe {
        mm_trace_event_count(t)
    });
    unsafe {
        mm_trace_free(parsed);
        mm_trace_free(t);
        mm_scenario_free(s);
    }
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut s = ptr::null_mut();
    let bad = CString::new(r#"{"n": 6}"#).unwrap();
    assert_eq!(
        unsafe { mm_scenario_from_json(bad.as_ptr(), &mut s) },
        MmStatus::MmConfigError
    );
    assert!(s.is_null());
    assert!(!last_error().is_empty());

    let mut cfg: serde_json::Value =
        serde_json::from_str(preset("honest_6").to_str().unwrap()).unwrap();
    cfg["corrupted"] = serde_json::json!([0, 1]);
    let too_many = CString::new(cfg.to_string()).unwrap();
    assert_eq!(
        unsafe { mm_scenario_from_json(too_many.as_ptr(), &mut s) },
        MmStatus::MmConfigError
    );
    assert!(last_error().contains("corrupted"), "{}", last_error());

    let mut t = ptr::null_mut();
    let garbage = CString::new("not a trace").unwrap();
    assert_eq!(
        unsafe { mm_trace_from_jsonl(garbage.as_ptr(), &mut t) },
        MmStatus::MmParseError
    );
    assert!(t.is_null());
}

#[test]
fn doctored_trace_reports_check_failure() {
    let s = scenario("honest_6");
    let t = run(s);
    let mut out = ptr::null_mut();
    unsafe { mm_trace_to_jsonl(t, &mut out) };
    let mut text = take_string(out);
    let seq = text.lines().count() - 1;
    text.push_str(&format!(
        "{{\"seq\":{seq},\"time_ms\":1e6,\"proc\":0,\"kind\":\"send\",\"msg\":{{\"type\":\"vote\",\"signer\":0,\"view\":1,\"block_hash\":\"{}\",\"parent_hash\":null}}}}\n",
        "cd".repeat(32)
    ));
    let text = CString::new(text).unwrap();
    let mut doctored = ptr::null_mut();
    assert_eq!(
        unsafe { mm_trace_from_jsonl(text.as_ptr(), &mut doctored) },
        MmStatus::MmOk,
        "{}",
        last_error()
    );
    assert_eq!(
        unsafe { mm_trace_check(doctored, &mut out) },
        MmStatus::MmCheckFailed
    );
    assert!(take_string(out).contains("\"status\":\"fail\""));
    unsafe {
        mm_trace_free(doctored);
        mm_trace_free(t);
        mm_scenario_free(s);
    }
}

/// Builds `tests/c/smoke.c` against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // Cargo leaves the static library next to this test binary in <target>/<profile>/deps,
    // and uplifts it one level for `cargo build`.
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let lib = [deps, deps.parent().unwrap()]
        .map(|d| d.join("libminimmit_ffi.a"))
        .into_iter()
        .find(|p| p.is_file())
        .expect("libminimmit_ffi.a built alongside the tests");
    let bin = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("mm_smoke");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c11", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin)
        .arg(manifest.join("../core/presets/honest_6.json"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}
