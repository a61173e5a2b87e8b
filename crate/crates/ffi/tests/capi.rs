use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use semamerge_ffi::*;

fn corpus(name: &str) -> CString {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(name);
    CString::new(dir.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = sm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(extra: &[*const std::ffi::c_char]) -> SmConfig {
    SmConfig {
        seed: 0,
        budget_steps: 20_000,
        runs: 3,
        generators: 0,
        flavors: SM_FLAVOR_ORIGINAL,
        jobs: 1,
        out_dir: ptr::null(),
        extra_tests: extra.as_ptr(),
        extra_tests_len: extra.len(),
    }
}

#[test]
fn witness_run_through_the_c_interface() {
    let dir = corpus("text-clean");
    let witness = CString::new(
        PathBuf::from(dir.to_str().unwrap())
            .join("witness/test1.mlt")
            .to_str()
            .unwrap(),
    )
    .unwrap();
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(sm_scenario_load(dir.as_ptr(), &mut scenario), SmStatus::Ok);
        let mut ff = true;
        assert_eq!(sm_scenario_is_fast_forward(scenario, &mut ff), SmStatus::Ok);
        assert!(!ff);

        let extra = [witness.as_ptr()];
        let cfg = config(&extra);
        let mut report = ptr::null_mut();
        assert_eq!(sm_analyze(scenario, &cfg, &mut report), SmStatus::Ok);
        let mut n = 0usize;
        assert_eq!(sm_report_conflict_count(report, &mut n), SmStatus::Ok);
        assert_eq!(n, 1);
        let mut code = 0;
        assert_eq!(sm_report_exit_code(report, &mut code), SmStatus::Ok);
        assert_eq!(code, 2);
        let mut json = ptr::null_mut();
        assert_eq!(sm_report_json(report, &mut json), SmStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"criterion\": \"C3\""));
        sm_string_free(json);
        sm_report_free(report);
        sm_scenario_free(scenario);
    }
}

#[test]
fn errors_are_reported_per_thread() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(
            sm_scenario_load(ptr::null(), &mut scenario),
            SmStatus::NullArgument
        );
        assert!(last_error().contains("null"));
        let missing = CString::new("/nonexistent/scenario").unwrap();
        assert_eq!(
            sm_scenario_load(missing.as_ptr(), &mut scenario),
            SmStatus::LoadFailed
        );
        assert!(last_error().contains("base"));
        assert!(scenario.is_null());

        let dir = corpus("pool-retries");
        assert_eq!(sm_scenario_load(dir.as_ptr(), &mut scenario), SmStatus::Ok);
        assert!(sm_last_error().is_null());
        let mut cfg = config(&[]);
        cfg.runs = 0;
        let mut report = ptr::null_mut();
        assert_eq!(
            sm_analyze(scenario, &cfg, &mut report),
            SmStatus::InvalidArgument
        );
        cfg.runs = 3;
        cfg.flavors = 0;
        assert_eq!(
            sm_analyze(scenario, &cfg, &mut report),
            SmStatus::InvalidArgument
        );
        assert!(report.is_null());
        sm_scenario_free(scenario);
        sm_scenario_free(ptr::null_mut());
        sm_report_free(ptr::null_mut());
    }
}

#[test]
fn criteria_and_rates() {
    unsafe {
        let mut mask = 0;
        assert_eq!(
            sm_criteria([0u8, 0, 0, 1].as_ptr(), 0, &mut mask),
            SmStatus::Ok
        );
        assert_eq!(mask, SM_CRITERION_C3);
        assert_eq!(
            sm_criteria([1u8, 3, 0, 1].as_ptr(), 1, &mut mask),
            SmStatus::Ok
        );
        assert_eq!(mask, SM_CRITERION_C2);
        assert_eq!(
            sm_criteria([2u8, 0, 0, 1].as_ptr(), 0, &mut mask),
            SmStatus::Ok
        );
        assert_eq!(mask, 0);
        assert_eq!(
            sm_criteria([9u8, 0, 0, 1].as_ptr(), 0, &mut mask),
            SmStatus::InvalidArgument
        );
        assert_eq!(
            sm_criteria([0u8; 4].as_ptr(), 7, &mut mask),
            SmStatus::InvalidArgument
        );

        let mut r = SmRates::default();
        assert_eq!(sm_rates(1, 0, 2, 1, &mut r), SmStatus::Ok);
        assert_eq!((r.precision, r.recall, r.accuracy), (1.0, 0.5, 0.75));
        assert_eq!(
            sm_rates(0, 0, 0, 0, ptr::null_mut()),
            SmStatus::NullArgument
        );
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/semamerge.h"),
    )
    .unwrap();
    for name in [
        "sm_scenario_load",
        "sm_analyze",
        "sm_report_json",
        "sm_last_error",
        "sm_criteria",
        "typedef struct SmReport SmReport",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let version = unsafe { CStr::from_ptr(sm_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"semamerge.h\"\nint main(void) { SmRates r; return sm_rates(1, 0, 0, 0, &r) == SM_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(status) = std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    assert!(status.success());
}
