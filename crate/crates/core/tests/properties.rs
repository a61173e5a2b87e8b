mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use semamerge::generation::GeneratorKind;
use semamerge::harness::{
    analyze_scenario, criteria_engine, detect_behavior_changes, rates, AnalysisConfig, Criterion,
    Parent, RevisionPair, StableOutcome, StatsRow, TestStatus,
};
use semamerge::minilang::{
    check, compile_script, parse, pretty_print, snapshots_deep_equal, CapturedArg, ElementId,
    Flavor,
};
use semamerge::scenario::{
    diff3_merge, load_scenario, mutual_from, structural_diff, Merge3, SourceTree,
};
use semamerge::transforms::{capture_snapshots, DEFAULT_CAPTURE_BUDGET, DEFAULT_POOL_CAP};

fn text_of(lines: &[u8]) -> String {
    lines.iter().map(|l| format!("line{l}\n")).collect()
}

fn lines() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 0..8)
}

fn status() -> impl Strategy<Value = TestStatus> {
    prop::sample::select(TestStatus::ALL.to_vec())
}

fn parent() -> impl Strategy<Value = Parent> {
    prop::sample::select(Parent::BOTH.to_vec())
}

fn tree(src: &str) -> SourceTree {
    let mut t = SourceTree::default();
    t.src.insert("Main.ml".into(), src.into());
    t
}

/// Appends `+ 1` to the return of every method whose index is in `which`.
fn bump_returns(src: &str, which: &BTreeSet<usize>) -> String {
    let mut n = 0;
    let mut out = String::new();
    for line in src.lines() {
        if line.trim_start().starts_with("return t;") {
            if which.contains(&n) {
                out.push_str(&line.replace("return t;", "return t + 1;"));
            } else {
                out.push_str(line);
            }
            n += 1;
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_sided_edits_win(base in lines(), side in lines()) {
        let (b, s) = (text_of(&base), text_of(&side));
        prop_assert_eq!(diff3_merge(&b, &s, &b), Merge3::Clean(s.clone()));
        prop_assert_eq!(diff3_merge(&b, &b, &s), Merge3::Clean(s.clone()));
        prop_assert_eq!(diff3_merge(&b, &s, &s), Merge3::Clean(s));
    }

    #[test]
    fn merge_is_symmetric_in_parents(base in lines(), left in lines(), right in lines()) {
        let (b, l, r) = (text_of(&base), text_of(&left), text_of(&right));
        match (diff3_merge(&b, &l, &r), diff3_merge(&b, &r, &l)) {
            (Merge3::Clean(x), Merge3::Clean(y)) => prop_assert_eq!(x, y),
            (Merge3::Conflict(x), Merge3::Conflict(y)) => prop_assert_eq!(x.len(), y.len()),
            (x, y) => prop_assert!(false, "asymmetric merge: {:?} vs {:?}", x, y),
        }
    }

    #[test]
    fn criteria_never_fire_on_unusable_rows(row in prop::array::uniform4(status()), p in parent()) {
        let outcome = StableOutcome::stable(row);
        let found = criteria_engine(&outcome, p).unwrap();
        let parent_status = if p == Parent::Left { row[1] } else { row[2] };
        let usable = |s: TestStatus| matches!(s, TestStatus::Pass | TestStatus::Fail);
        let c12 = [Criterion::C1LeftDeviates, Criterion::C2RightDeviates];
        if !(usable(row[0]) && usable(parent_status) && usable(row[3])) {
            prop_assert!(found.iter().all(|c| !c12.contains(c)));
        }
        if !row.iter().all(|&s| usable(s)) {
            prop_assert!(!found.contains(&Criterion::C3Pppf) && !found.contains(&Criterion::C4Fffp));
        }
        prop_assert!(criteria_engine(&StableOutcome::flaky(), p).is_err());
        prop_assert!(detect_behavior_changes([("t", &StableOutcome::flaky(), p)]).is_empty());
    }

    #[test]
    fn deviation_implies_both_behavior_changes(row in prop::array::uniform4(status()), p in parent()) {
        let outcome = StableOutcome::stable(row);
        let found = criteria_engine(&outcome, p).unwrap();
        if found.contains(&Criterion::C1LeftDeviates) || found.contains(&Criterion::C2RightDeviates) {
            let pairs: Vec<RevisionPair> = detect_behavior_changes([("t", &outcome, p)]).into_iter().map(|c| c.pair).collect();
            for pair in RevisionPair::for_parent(p) {
                prop_assert!(pairs.contains(&pair), "{:?} missing for {:?}", pair, row);
            }
        }
    }

    #[test]
    fn rates_satisfy_their_definitions(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
        let row = StatsRow::new("g", Flavor::Original, tp, fp, tn, fn_);
        let (p, r, a) = rates(tp, fp, tn, fn_);
        prop_assert_eq!((row.precision, row.recall, row.accuracy), (p, r, a));
        for v in [p, r, a] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if tp + fp > 0 {
            prop_assert!((p * (tp + fp) as f64 - tp as f64).abs() < 1e-9);
        } else {
            prop_assert_eq!(p, 1.0);
        }
        if tp + fn_ > 0 {
            prop_assert!((r * (tp + fn_) as f64 - tp as f64).abs() < 1e-9);
        }
        let total = tp + fp + tn + fn_;
        if total > 0 {
            prop_assert!((a * total as f64 - (tp + tn) as f64).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn printing_reaches_a_fixpoint(seed in any::<u64>()) {
        let g = common::generate_program(seed);
        let once = pretty_print(&parse(&g.source).unwrap());
        let twice = pretty_print(&parse(&once).unwrap());
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(parse(&once).unwrap(), parse(&twice).unwrap());
    }

    #[test]
    fn self_diff_is_empty(seed in any::<u64>()) {
        let g = common::generate_program(seed);
        prop_assert!(structural_diff(&tree(&g.source), &tree(&g.source)).unwrap().is_empty());
    }

    #[test]
    fn mutual_changes_lie_in_both_change_sets(
        seed in any::<u64>(),
        left in prop::collection::btree_set(0usize..6, 0..4),
        right in prop::collection::btree_set(0usize..6, 0..4),
    ) {
        let g = common::generate_program(seed);
        let base = tree(&g.source);
        let l = structural_diff(&base, &tree(&bump_returns(&g.source, &left))).unwrap();
        let r = structural_diff(&base, &tree(&bump_returns(&g.source, &right))).unwrap();
        let mutual = mutual_from(&l, &r, &|_| true);
        let both: BTreeSet<ElementId> = l.changed().intersection(&r.changed()).cloned().collect();
        prop_assert_eq!(&mutual.elements, &both);
        prop_assert!(mutual.excluded.is_empty());
        let none = mutual_from(&l, &r, &|_| false);
        prop_assert!(none.elements.is_empty());
        prop_assert_eq!(none.excluded, both);
    }

    #[test]
    fn snapshot_pool_has_no_duplicates(seed in any::<u64>()) {
        let g = common::generate_program(seed);
        let image = check(&parse(&g.source).unwrap()).unwrap();
        let tests: Vec<_> = g.tests.iter().map(|t| compile_script(&image, t).unwrap()).collect();
        let target = ElementId::method("K0", "m0", 1);
        let pool = capture_snapshots(&image, &tests, &target, DEFAULT_CAPTURE_BUDGET, DEFAULT_POOL_CAP);
        prop_assert!(pool.entries.len() <= DEFAULT_POOL_CAP);
        let same_arg = |a: &CapturedArg, b: &CapturedArg| match (a, b) {
            (CapturedArg::Object(x), CapturedArg::Object(y)) => snapshots_deep_equal(x, y),
            _ => a == b,
        };
        for (i, a) in pool.entries.iter().enumerate() {
            for b in &pool.entries[i + 1..] {
                let recv_eq = match (&a.receiver, &b.receiver) {
                    (Some(x), Some(y)) => snapshots_deep_equal(x, y),
                    (None, None) => true,
                    _ => false,
                };
                let args_eq = a.args.len() == b.args.len() && a.args.iter().zip(&b.args).all(|(x, y)| same_arg(x, y));
                prop_assert!(!(recv_eq && args_eq), "duplicate entries in pool");
            }
        }
    }
}

#[test]
fn worker_count_does_not_change_reports() {
    let scenario = load_scenario(&common::scenario_dir("pool-retries")).unwrap();
    let mut cfg = AnalysisConfig {
        generators: vec![GeneratorKind::RandoopClean, GeneratorKind::Differential],
        flavors: vec![Flavor::Original, Flavor::Testability],
        ..AnalysisConfig::default()
    };
    cfg.gen.step_budget = 20_000;
    let serial = analyze_scenario(&scenario, &cfg).unwrap().to_json();
    cfg.jobs = 3;
    let parallel = analyze_scenario(&scenario, &cfg).unwrap().to_json();
    assert_eq!(serial, parallel);
}

#[test]
fn reported_conflicts_come_from_stable_classifiable_tests() {
    for name in ["nondet-flaky", "pool-retries", "text-clean"] {
        let scenario = load_scenario(&common::scenario_dir(name)).unwrap();
        let mut cfg = AnalysisConfig {
            flavors: vec![Flavor::Original],
            ..AnalysisConfig::default()
        };
        cfg.gen.step_budget = 20_000;
        let report = analyze_scenario(&scenario, &cfg).unwrap();
        for c in report.conflicts() {
            let row = [
                c.outcome.base,
                c.outcome.left,
                c.outcome.right,
                c.outcome.merge,
            ];
            let found = criteria_engine(&StableOutcome::stable(row), c.parent).unwrap();
            assert!(
                found.contains(&c.criterion),
                "{name}: {} does not follow from {:?}",
                c.criterion.code(),
                row
            );
        }
        if name == "nondet-flaky" {
            assert!(report.conflicts().next().is_none());
        }
    }
}
