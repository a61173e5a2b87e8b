mod common;

use std::path::Path;
use std::process::{Command, Output};

fn semamerge(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semamerge"));
    cmd.args(args).env_remove("SEMAMERGE_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn scenario(name: &str) -> String {
    common::scenario_dir(name).to_string_lossy().into_owned()
}

fn read_report(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("report.json")).unwrap()
}

#[test]
fn merge_lists_textual_conflicts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = semamerge(
        &[
            "merge",
            &scenario("textual-conflict"),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("CONFLICT"));
    assert!(stdout.contains("<<<<<<<") && stdout.contains(">>>>>>>"));
}

#[test]
fn merge_writes_a_clean_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = semamerge(
        &[
            "merge",
            &scenario("text-clean"),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0);
    let merged = std::fs::read_to_string(tmp.path().join("src/Text.ml")).unwrap();
    let shipped =
        std::fs::read_to_string(common::scenario_dir("text-clean").join("merge/src/Text.ml"))
            .unwrap();
    assert_eq!(merged, shipped);
}

#[test]
fn nothing_to_analyze_exits_4() {
    for name in ["counter-disjoint", "fast-forward"] {
        let tmp = tempfile::tempdir().unwrap();
        let out = semamerge(
            &[
                "analyze",
                &scenario(name),
                "--out",
                tmp.path().to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&out), 4, "{name}");
        assert!(!read_report(tmp.path()).contains("\"criterion\""));
    }
}

#[test]
fn textual_conflict_exits_3_under_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let out = semamerge(
        &[
            "analyze",
            &scenario("textual-conflict"),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 3);
}

#[test]
fn witness_run_reports_the_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    let witness = common::scenario_dir("text-clean").join("witness/test1.mlt");
    let out = semamerge(
        &[
            "analyze",
            &scenario("text-clean"),
            "--generators",
            "search",
            "--flavors",
            "testability",
            "--seed",
            "1",
            "--budget-steps",
            "50000",
            "--extra-tests",
            witness.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_report(tmp.path());
    assert!(report.contains("Text.cleanText/0"));
    assert!(report.contains("\"criterion\": \"C3\""));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("CONFLICT Text.cleanText/0 C3"));
}

#[test]
fn identical_arguments_give_identical_reports() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for d in &dirs {
        let out = semamerge(
            &[
                "analyze",
                &scenario("pool-retries"),
                "--flavors",
                "original",
                "--budget-steps",
                "20000",
                "--seed",
                "4",
                "--out",
                d.path().to_str().unwrap(),
            ],
            &[],
        );
        let report = read_report(d.path());
        assert_eq!(code(&out) == 2, report.contains("\"criterion\""));
        reports.push(report);
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_comes_from_the_environment_when_absent() {
    let run = |extra: &[&str], envs: &[(&str, &str)]| {
        let tmp = tempfile::tempdir().unwrap();
        let mut args = vec![
            "analyze",
            "corpus/pool-retries",
            "--generators",
            "randoop",
            "--flavors",
            "original",
            "--budget-steps",
            "10000",
            "--out",
            tmp.path().to_str().unwrap(),
        ];
        let dir = scenario("pool-retries");
        args[1] = &dir;
        args.extend_from_slice(extra);
        semamerge(&args, envs);
        read_report(tmp.path())
    };
    let flag = run(&["--seed", "9"], &[]);
    let env = run(&[], &[("SEMAMERGE_SEED", "9")]);
    assert_eq!(flag, env);
    let default = run(&[], &[]);
    assert_eq!(default, run(&["--seed", "0"], &[]));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        vec!["analyze"],
        vec!["analyze", "corpus/text-clean", "--bogus"],
        vec!["analyze", "corpus/text-clean", "--runs", "0"],
        vec!["analyze", "corpus/text-clean", "--generators", "fuzzer"],
        vec!["frobnicate"],
    ] {
        let out = semamerge(&args, &[]);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = semamerge(&["analyze", "/nonexistent/scenario"], &[]);
    assert_eq!(code(&out), 1);
}
