//! C interface to the semamerge analysis.
//!
//! Every function returns an [`SmStatus`]. On failure a message describing
//! the error is kept per thread and can be read with [`sm_last_error`].
//! Handles are opaque; release them with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use semamerge::generation::{GeneratorConfig, GeneratorKind};
use semamerge::harness::{
    analyze_scenario, criteria_engine, rates, AnalysisConfig, Criterion, Parent, ScenarioReport,
    StableOutcome, TestStatus,
};
use semamerge::minilang::Flavor;
use semamerge::scenario::{load_scenario, MergeScenario};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    LoadFailed = 4,
    AnalysisFailed = 5,
    Panic = 6,
}

/// A loaded merge scenario.
pub struct SmScenario(MergeScenario);

/// The result of analyzing a scenario.
pub struct SmReport(ScenarioReport);

pub const SM_GENERATOR_RANDOOP: u32 = 1;
pub const SM_GENERATOR_RANDOOP_CLEAN: u32 = 2;
pub const SM_GENERATOR_SEARCH: u32 = 4;
pub const SM_GENERATOR_DIFFERENTIAL: u32 = 8;

pub const SM_FLAVOR_ORIGINAL: u32 = 1;
pub const SM_FLAVOR_TESTABILITY: u32 = 2;
pub const SM_FLAVOR_SERIALIZATION: u32 = 4;

pub const SM_CRITERION_C1: u32 = 1;
pub const SM_CRITERION_C2: u32 = 2;
pub const SM_CRITERION_C3: u32 = 4;
pub const SM_CRITERION_C4: u32 = 8;

/// Analysis settings. `out_dir` may be null, in which case nothing is
/// written to disk. `extra_tests` points to `extra_tests_len` paths.
#[repr(C)]
pub struct SmConfig {
    pub seed: u64,
    pub budget_steps: u64,
    pub runs: u64,
    pub generators: u32,
    pub flavors: u32,
    pub jobs: u32,
    pub out_dir: *const c_char,
    pub extra_tests: *const *const c_char,
    pub extra_tests_len: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmRates {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: SmStatus, message: impl Into<String>) -> SmStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> SmStatus) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == SmStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(_) => fail(SmStatus::Panic, "internal panic"),
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, SmStatus> {
    if p.is_null() {
        return Err(fail(SmStatus::NullArgument, "path is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(SmStatus::InvalidUtf8, "path is not valid UTF-8"))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads the scenario stored in directory `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_load(
    path: *const c_char,
    out: *mut *mut SmScenario,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "out is null");
        }
        let dir = match path_arg(path) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match load_scenario(&dir) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(SmScenario(s)));
                SmStatus::Ok
            }
            Err(e) => fail(SmStatus::LoadFailed, e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must come from [`sm_scenario_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_free(scenario: *mut SmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_scenario_is_fast_forward(
    scenario: *const SmScenario,
    out: *mut bool,
) -> SmStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null argument");
        }
        *out = (*scenario).0.is_fast_forward();
        SmStatus::Ok
    })
}

fn generators_from(mask: u32) -> Vec<GeneratorKind> {
    let bits = [
        (SM_GENERATOR_RANDOOP, GeneratorKind::Randoop),
        (SM_GENERATOR_RANDOOP_CLEAN, GeneratorKind::RandoopClean),
        (SM_GENERATOR_SEARCH, GeneratorKind::Search),
        (SM_GENERATOR_DIFFERENTIAL, GeneratorKind::Differential),
    ];
    bits.iter()
        .filter(|(b, _)| mask & b != 0)
        .map(|&(_, g)| g)
        .collect()
}

fn flavors_from(mask: u32) -> Vec<Flavor> {
    let bits = [
        (SM_FLAVOR_ORIGINAL, Flavor::Original),
        (SM_FLAVOR_TESTABILITY, Flavor::Testability),
        (SM_FLAVOR_SERIALIZATION, Flavor::Serialized),
    ];
    bits.iter()
        .filter(|(b, _)| mask & b != 0)
        .map(|&(_, f)| f)
        .collect()
}

unsafe fn config_from(cfg: &SmConfig) -> Result<AnalysisConfig, SmStatus> {
    let flavors = flavors_from(cfg.flavors);
    if flavors.is_empty() {
        return Err(fail(SmStatus::InvalidArgument, "no flavor selected"));
    }
    if cfg.runs == 0 {
        return Err(fail(SmStatus::InvalidArgument, "runs must be at least 1"));
    }
    let out = if cfg.out_dir.is_null() {
        None
    } else {
        Some(path_arg(cfg.out_dir)?)
    };
    let mut extra = Vec::new();
    if cfg.extra_tests_len > 0 {
        if cfg.extra_tests.is_null() {
            return Err(fail(SmStatus::NullArgument, "extra_tests is null"));
        }
        for i in 0..cfg.extra_tests_len {
            extra.push(path_arg(*cfg.extra_tests.add(i))?);
        }
    }
    Ok(AnalysisConfig {
        generators: generators_from(cfg.generators),
        flavors,
        gen: GeneratorConfig {
            seed: cfg.seed,
            step_budget: cfg.budget_steps,
            ..GeneratorConfig::default()
        },
        runs: cfg.runs,
        extra_tests: extra,
        jobs: cfg.jobs.max(1) as usize,
        out,
    })
}

/// Analyzes a scenario.
///
/// # Safety
/// `scenario` and `config` must be valid; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_analyze(
    scenario: *const SmScenario,
    config: *const SmConfig,
    out: *mut *mut SmReport,
) -> SmStatus {
    guard(|| {
        if scenario.is_null() || config.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null argument");
        }
        let cfg = match config_from(&*config) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match analyze_scenario(&(*scenario).0, &cfg) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(SmReport(r)));
                SmStatus::Ok
            }
            Err(e) => fail(SmStatus::AnalysisFailed, e.to_string()),
        }
    })
}

/// # Safety
/// `report` must come from [`sm_analyze`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sm_report_free(report: *mut SmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_report_conflict_count(
    report: *const SmReport,
    out: *mut usize,
) -> SmStatus {
    guard(|| {
        if report.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null argument");
        }
        *out = (*report).0.conflicts().count();
        SmStatus::Ok
    })
}

/// The exit code the command line tool would use for this report.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_report_exit_code(report: *const SmReport, out: *mut i32) -> SmStatus {
    guard(|| {
        if report.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null argument");
        }
        *out = (*report).0.exit_code();
        SmStatus::Ok
    })
}

/// The report as JSON. Release the string with [`sm_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_report_json(
    report: *const SmReport,
    out: *mut *mut c_char,
) -> SmStatus {
    guard(|| {
        if report.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null argument");
        }
        match CString::new((*report).0.to_json()) {
            Ok(s) => {
                *out = s.into_raw();
                SmStatus::Ok
            }
            Err(_) => fail(SmStatus::AnalysisFailed, "report contains a NUL byte"),
        }
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn status_from(code: u8) -> Option<TestStatus> {
    TestStatus::ALL.get(code as usize).copied()
}

/// Conflict criteria matched by a stable outcome row. `statuses` holds four
/// codes in base, left, right, merge order (0 pass, 1 fail, 2 error,
/// 3 invalid); `parent` is 0 for left and 1 for right. The result is a mask
/// of `SM_CRITERION_*` bits.
///
/// # Safety
/// `statuses` must point to four bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sm_criteria(statuses: *const u8, parent: u8, out: *mut u32) -> SmStatus {
    guard(|| {
        if statuses.is_null() || out.is_null() {
            return fail(SmStatus::NullArgument, "null argument");
        }
        let codes = std::slice::from_raw_parts(statuses, 4);
        let mut row = [TestStatus::Pass; 4];
        for (slot, &c) in row.iter_mut().zip(codes) {
            match status_from(c) {
                Some(s) => *slot = s,
                None => {
                    return fail(
                        SmStatus::InvalidArgument,
                        format!("unknown status code {c}"),
                    )
                }
            }
        }
        let parent = match parent {
            0 => Parent::Left,
            1 => Parent::Right,
            p => {
                return fail(
                    SmStatus::InvalidArgument,
                    format!("unknown parent code {p}"),
                )
            }
        };
        let set = criteria_engine(&StableOutcome::stable(row), parent).expect("stable outcome");
        *out = set
            .iter()
            .map(|c| match c {
                Criterion::C1LeftDeviates => SM_CRITERION_C1,
                Criterion::C2RightDeviates => SM_CRITERION_C2,
                Criterion::C3Pppf => SM_CRITERION_C3,
                Criterion::C4Fffp => SM_CRITERION_C4,
            })
            .fold(0, |a, b| a | b);
        SmStatus::Ok
    })
}

/// Precision, recall and accuracy of a confusion matrix.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sm_rates(
    tp: usize,
    fp: usize,
    tn: usize,
    fn_: usize,
    out: *mut SmRates,
) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return fail(SmStatus::NullArgument, "out is null");
        }
        let (precision, recall, accuracy) = rates(tp, fp, tn, fn_);
        *out = SmRates {
            precision,
            recall,
            accuracy,
        };
        SmStatus::Ok
    })
}
