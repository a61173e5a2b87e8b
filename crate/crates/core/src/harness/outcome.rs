//! Test outcomes across the four revisions and the conflict criteria.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::EXEC_STEP_CAP;
use crate::minilang::{
    check_script, CoverageTrace, ProgramImage, Revision, ScriptStatus, Session, TestScript,
};

/// Step cap for one harness execution of a test.
pub const HARNESS_STEP_CAP: u64 = 2 * EXEC_STEP_CAP;
pub const DEFAULT_RUNS: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Invalid,
}

impl TestStatus {
    pub const ALL: [TestStatus; 4] = [
        TestStatus::Pass,
        TestStatus::Fail,
        TestStatus::Error,
        TestStatus::Invalid,
    ];

    pub fn letter(self) -> char {
        match self {
            TestStatus::Pass => 'P',
            TestStatus::Fail => 'F',
            TestStatus::Error => 'E',
            TestStatus::Invalid => 'I',
        }
    }

    fn comparable(self) -> bool {
        matches!(self, TestStatus::Pass | TestStatus::Fail)
    }
}

/// Statuses in B, L, R, M order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub base: TestStatus,
    pub left: TestStatus,
    pub right: TestStatus,
    pub merge: TestStatus,
}

impl OutcomeRow {
    pub fn new([base, left, right, merge]: [TestStatus; 4]) -> Self {
        OutcomeRow {
            base,
            left,
            right,
            merge,
        }
    }

    pub fn get(&self, rev: Revision) -> TestStatus {
        match rev {
            Revision::Base => self.base,
            Revision::Left => self.left,
            Revision::Right => self.right,
            Revision::Merge => self.merge,
        }
    }
}

impl fmt::Display for OutcomeRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{})",
            self.base.letter(),
            self.left.letter(),
            self.right.letter(),
            self.merge.letter()
        )
    }
}

/// Outcome of a test after repeated runs. Flaky tests carry no row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableOutcome {
    pub flaky: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statuses: Option<OutcomeRow>,
}

impl StableOutcome {
    pub fn stable(row: [TestStatus; 4]) -> Self {
        StableOutcome {
            flaky: false,
            statuses: Some(OutcomeRow::new(row)),
        }
    }

    pub fn flaky() -> Self {
        StableOutcome {
            flaky: true,
            statuses: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "C1")]
    C1LeftDeviates,
    #[serde(rename = "C2")]
    C2RightDeviates,
    #[serde(rename = "C3")]
    C3Pppf,
    #[serde(rename = "C4")]
    C4Fffp,
}

impl Criterion {
    pub fn code(self) -> &'static str {
        match self {
            Criterion::C1LeftDeviates => "C1",
            Criterion::C2RightDeviates => "C2",
            Criterion::C3Pppf => "C3",
            Criterion::C4Fffp => "C4",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Which parent a test was generated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parent {
    Left,
    Right,
}

impl Parent {
    pub const BOTH: [Parent; 2] = [Parent::Left, Parent::Right];

    pub fn revision(self) -> Revision {
        match self {
            Parent::Left => Revision::Left,
            Parent::Right => Revision::Right,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parent::Left => "left",
            Parent::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("flaky outcomes cannot be classified")]
pub struct FlakyInput;

/// Conflict criteria matched by a stable outcome. A criterion only fires
/// when every revision it consults passed or failed.
pub fn criteria_engine(
    outcome: &StableOutcome,
    generated_on: Parent,
) -> Result<BTreeSet<Criterion>, FlakyInput> {
    let row = match (&outcome.statuses, outcome.flaky) {
        (Some(row), false) => *row,
        _ => return Err(FlakyInput),
    };
    let mut out = BTreeSet::new();
    let parent = row.get(generated_on.revision());
    if [row.base, parent, row.merge].iter().all(|s| s.comparable())
        && row.base == row.merge
        && parent != row.base
    {
        out.insert(match generated_on {
            Parent::Left => Criterion::C1LeftDeviates,
            Parent::Right => Criterion::C2RightDeviates,
        });
    }
    use TestStatus::{Fail, Pass};
    match (row.base, row.left, row.right, row.merge) {
        (Pass, Pass, Pass, Fail) => {
            out.insert(Criterion::C3Pppf);
        }
        (Fail, Fail, Fail, Pass) => {
            out.insert(Criterion::C4Fffp);
        }
        _ => {}
    }
    Ok(out)
}

/// For C1 and C2: whether the parent passed while base and merge failed,
/// or the reverse.
pub fn polarity(row: &OutcomeRow, generated_on: Parent) -> &'static str {
    if row.get(generated_on.revision()) == TestStatus::Pass {
        "passOnParent"
    } else {
        "failOnParent"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RevisionPair {
    #[serde(rename = "B-L")]
    BaseLeft,
    #[serde(rename = "L-M")]
    LeftMerge,
    #[serde(rename = "B-R")]
    BaseRight,
    #[serde(rename = "R-M")]
    RightMerge,
}

impl RevisionPair {
    pub fn ends(self) -> (Revision, Revision) {
        match self {
            RevisionPair::BaseLeft => (Revision::Base, Revision::Left),
            RevisionPair::LeftMerge => (Revision::Left, Revision::Merge),
            RevisionPair::BaseRight => (Revision::Base, Revision::Right),
            RevisionPair::RightMerge => (Revision::Right, Revision::Merge),
        }
    }

    pub fn for_parent(parent: Parent) -> [RevisionPair; 2] {
        match parent {
            Parent::Left => [RevisionPair::BaseLeft, RevisionPair::LeftMerge],
            Parent::Right => [RevisionPair::BaseRight, RevisionPair::RightMerge],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BehaviorChange {
    pub pair: RevisionPair,
    /// The first test (in suite order) that witnesses the change.
    pub test: String,
}

/// Union of behavior changes over a list of `(test id, outcome, parent)`.
/// Each pair appears once, witnessed by the first test exhibiting it.
pub fn detect_behavior_changes<'a>(
    outcomes: impl IntoIterator<Item = (&'a str, &'a StableOutcome, Parent)>,
) -> Vec<BehaviorChange> {
    let mut found: Vec<BehaviorChange> = Vec::new();
    for (id, outcome, parent) in outcomes {
        let Some(row) = outcome.statuses.filter(|_| !outcome.flaky) else {
            continue;
        };
        for pair in RevisionPair::for_parent(parent) {
            let (a, b) = pair.ends();
            let (sa, sb) = (row.get(a), row.get(b));
            if sa.comparable()
                && sb.comparable()
                && sa != sb
                && !found.iter().any(|c| c.pair == pair)
            {
                found.push(BehaviorChange {
                    pair,
                    test: id.to_string(),
                });
            }
        }
    }
    found.sort();
    found
}

/// A classified test plus the merge coverage of its first run.
#[derive(Clone, Debug)]
pub struct Classified {
    pub outcome: StableOutcome,
    pub merge_trace: Option<CoverageTrace>,
}

/// Checks a test against each image (Invalid when it does not check) and
/// runs it `runs` times with run seeds `0..runs`. Any disagreement between
/// runs of one revision makes the whole test flaky.
pub fn execute_and_classify(
    script: &TestScript,
    images: [&ProgramImage; 4],
    runs: u64,
) -> Classified {
    let mut row = [TestStatus::Invalid; 4];
    let mut merge_trace = None;
    for (i, image) in images.iter().enumerate() {
        let Ok(checked) = check_script(image, script) else {
            continue;
        };
        let mut seen: Option<TestStatus> = None;
        for seed in 0..runs.max(1) {
            let mut session = Session::new(image, seed);
            let status = match session.run_script(&checked, HARNESS_STEP_CAP).status {
                ScriptStatus::Pass => TestStatus::Pass,
                ScriptStatus::AssertionFailed(_) => TestStatus::Fail,
                ScriptStatus::Error(_) => TestStatus::Error,
            };
            if seed == 0 && i == 3 {
                merge_trace = Some(session.trace().clone());
            }
            match seen {
                None => seen = Some(status),
                Some(s) if s != status => {
                    return Classified {
                        outcome: StableOutcome::flaky(),
                        merge_trace,
                    }
                }
                Some(_) => {}
            }
        }
        row[i] = seen.expect("at least one run");
    }
    Classified {
        outcome: StableOutcome::stable(row),
        merge_trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{check, parse, parse_script, ExecStatus, Value};
    use TestStatus::*;

    fn crit(row: [TestStatus; 4], p: Parent) -> Vec<&'static str> {
        criteria_engine(&StableOutcome::stable(row), p)
            .unwrap()
            .into_iter()
            .map(|c| c.code())
            .collect()
    }

    #[test]
    fn listed_rows() {
        assert_eq!(crit([Pass, Pass, Pass, Fail], Parent::Left), vec!["C3"]);
        assert_eq!(crit([Fail, Invalid, Pass, Fail], Parent::Right), vec!["C2"]);
        assert!(crit([Error, Pass, Pass, Fail], Parent::Left).is_empty());
        assert!(crit([Pass, Pass, Pass, Pass], Parent::Right).is_empty());
        assert_eq!(crit([Fail, Fail, Fail, Pass], Parent::Left), vec!["C4"]);
        assert!(criteria_engine(&StableOutcome::flaky(), Parent::Left).is_err());
    }

    #[test]
    fn behavior_change_rows() {
        let o = StableOutcome::stable([Fail, Pass, Invalid, Pass]);
        let got = detect_behavior_changes([("t0", &o, Parent::Left)]);
        assert_eq!(
            got.iter().map(|c| c.pair).collect::<Vec<_>>(),
            vec![RevisionPair::BaseLeft]
        );
        let c1 = StableOutcome::stable([Fail, Pass, Pass, Fail]);
        let got = detect_behavior_changes([("t1", &c1, Parent::Left)]);
        assert_eq!(got.len(), 2);
        let same = StableOutcome::stable([Pass; 4]);
        assert!(detect_behavior_changes([("t2", &same, Parent::Right)]).is_empty());
    }

    #[test]
    fn classify_invalid_and_flaky() {
        let base = check(&parse("class A { pub int f() { return 1; } }").unwrap()).unwrap();
        let left = check(
            &parse("class A { pub int f() { return 1; } pub int g() { return 2; } }").unwrap(),
        )
        .unwrap();
        let t = parse_script("let a = new A(); assertEq(a.g(), 2);").unwrap();
        let c = execute_and_classify(&t, [&base, &left, &base, &left], 3);
        assert_eq!(
            c.outcome.statuses.unwrap(),
            OutcomeRow::new([Invalid, Pass, Invalid, Pass])
        );
        assert!(c.merge_trace.is_some());

        let noisy =
            check(&parse("class N { pub int f() { return nondet(1000); } }").unwrap()).unwrap();
        let mut probe = Session::new(&noisy, 0);
        let obj = probe.alloc_raw(0);
        let v = match probe
            .invoke(
                noisy.find_method(0, "f", 0).unwrap(),
                Some(Value::Ref(obj)),
                vec![],
                100,
            )
            .status
        {
            ExecStatus::Completed(Value::Int(v)) => v,
            other => panic!("{other:?}"),
        };
        let t = parse_script(&format!("let n = new N(); assertEq(n.f(), {v});")).unwrap();
        let c = execute_and_classify(&t, [&noisy, &noisy, &noisy, &noisy], 3);
        assert!(c.outcome.flaky);
        assert!(c.outcome.statuses.is_none());
    }
}
