//! Regression test generators focused on one target element.

pub mod ops;
pub mod random;
pub mod search;
pub mod sequence;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::minilang::image::ElementRef;
use crate::minilang::{
    check_script, CoverageTrace, ElementId, ExecStatus, MemberKind, ProgramImage, ScriptStatus,
    Session,
};

pub use ops::{harvest_operations, OpKind, Operation};
pub use sequence::{
    capture_assertions, render_test, Check, Expect, Input, Observer, SeqStmt, Sequence, TestCase,
};

/// Step cap for one execution of a sequence during generation. Harness runs
/// allow twice this, so statement and assertion overhead never tips a
/// generated test into a budget fault on its own image.
pub const EXEC_STEP_CAP: u64 = 5_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("target {0} does not exist in the image")]
    UnknownTarget(String),
    #[error("target {0} is a field; this generator needs a method or constructor")]
    TargetIsField(String),
    #[error("sequence raised a runtime error: {0:?}")]
    SequenceErrors(ExecStatus),
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("the differential generator needs a base image")]
    MissingBase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeneratorKind {
    #[serde(rename = "randoop")]
    Randoop,
    #[serde(rename = "randoop-clean")]
    RandoopClean,
    #[serde(rename = "search")]
    Search,
    #[serde(rename = "differential")]
    Differential,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::Randoop,
        GeneratorKind::RandoopClean,
        GeneratorKind::Search,
        GeneratorKind::Differential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Randoop => "randoop",
            GeneratorKind::RandoopClean => "randoop-clean",
            GeneratorKind::Search => "search",
            GeneratorKind::Differential => "differential",
        }
    }

    pub fn from_name(name: &str) -> Option<GeneratorKind> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorConfig {
    pub seed: u64,
    pub step_budget: u64,
    pub max_sequence_len: usize,
    pub max_suite_size: usize,
    pub null_probability: f64,
    pub target_call_interval: usize,
    pub creation_interval: usize,
    pub population: usize,
    pub tournament: usize,
    pub mutation_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            step_budget: 200_000,
            max_sequence_len: 30,
            max_suite_size: 50,
            null_probability: 0.05,
            target_call_interval: 4,
            creation_interval: 10,
            population: 40,
            tournament: 4,
            mutation_rate: 0.3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let positive = [
            ("maxSequenceLen", self.max_sequence_len),
            ("maxSuiteSize", self.max_suite_size),
            ("targetCallInterval", self.target_call_interval),
            ("creationInterval", self.creation_interval),
            ("population", self.population),
            ("tournament", self.tournament),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(GenError::InvalidConfig(format!("{name} must be positive")));
        }
        for (name, p) in [
            ("nullProbability", self.null_probability),
            ("mutationRate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenError::InvalidConfig(format!(
                    "{name} must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenMetrics {
    pub target_method_calls: u64,
    pub distinct_objects: usize,
    pub objects_logged: usize,
    pub suite_size: usize,
    /// Interpreter steps spent while generating.
    pub steps_used: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestSuite {
    pub tests: Vec<TestCase>,
    pub generator: GeneratorKind,
    pub config: GeneratorConfig,
}

impl TestSuite {
    pub fn rendered(&self) -> Vec<String> {
        self.tests.iter().map(render_test).collect()
    }
}

/// A reproducible RNG stream for a seed and a list of labels.
pub fn rng_for(seed: u64, labels: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Derives a sub-seed from a seed and labels.
pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    use rand::RngCore;
    rng_for(seed, labels).next_u64()
}

fn target_callable(image: &ProgramImage, target: &ElementId) -> Result<Option<usize>, GenError> {
    match image.resolve_element(target) {
        Some(ElementRef::Callable(c)) => Ok(Some(c)),
        Some(ElementRef::Field(..)) => Ok(None),
        None => Err(GenError::UnknownTarget(target.to_string())),
    }
}

/// Runs one generator. `base` is required by the differential generator.
pub fn generate(
    kind: GeneratorKind,
    image: &ProgramImage,
    base: Option<&ProgramImage>,
    target: &ElementId,
    cfg: &GeneratorConfig,
) -> Result<(TestSuite, GenMetrics), GenError> {
    match kind {
        GeneratorKind::Randoop => random::generate_randoop(image, target, cfg),
        GeneratorKind::RandoopClean => random::generate_randoop_clean(image, target, cfg),
        GeneratorKind::Search => search::generate_search(image, target, cfg),
        GeneratorKind::Differential => {
            search::generate_differential(image, base.ok_or(GenError::MissingBase)?, target, cfg)
        }
    }
}

pub(crate) fn require_callable(
    image: &ProgramImage,
    target: &ElementId,
) -> Result<usize, GenError> {
    if target.kind == MemberKind::Field {
        return Err(GenError::TargetIsField(target.to_string()));
    }
    target_callable(image, target)?.ok_or_else(|| GenError::TargetIsField(target.to_string()))
}

/// Executes a suite on its image and measures target calls and distinct
/// structural fingerprints of call receivers and object arguments.
pub fn measure_suite(image: &ProgramImage, tests: &[TestCase], target: &ElementId) -> GenMetrics {
    let callable = target_callable(image, target).ok().flatten();
    let mut metrics = GenMetrics {
        suite_size: tests.len(),
        ..GenMetrics::default()
    };
    let mut seen = HashSet::new();
    for t in tests {
        let Ok(script) = check_script(image, &t.script()) else {
            continue;
        };
        let mut session = Session::new(image, 0);
        session.set_object_logging(true);
        session.run_script(&script, 2 * EXEC_STEP_CAP);
        if let Some(c) = callable {
            metrics.target_method_calls += session.call_count(c);
        }
        let log = session.take_object_log();
        metrics.objects_logged += log.len();
        seen.extend(log);
    }
    metrics.distinct_objects = seen.len();
    metrics
}

/// Keeps candidates in order, dropping duplicates and any test that does
/// not check and pass on its own image, up to the suite size.
pub(crate) fn finalize(
    image: &ProgramImage,
    candidates: Vec<TestCase>,
    kind: GeneratorKind,
    cfg: &GeneratorConfig,
    target: &ElementId,
    steps_used: u64,
) -> (TestSuite, GenMetrics) {
    let mut seen = HashSet::new();
    let mut tests = Vec::new();
    for t in candidates {
        if tests.len() >= cfg.max_suite_size {
            break;
        }
        let text = render_test(&t);
        if !seen.insert(text) {
            continue;
        }
        let Ok(script) = check_script(image, &t.script()) else {
            continue;
        };
        if Session::new(image, 0)
            .run_script(&script, 2 * EXEC_STEP_CAP)
            .status
            != ScriptStatus::Pass
        {
            continue;
        }
        tests.push(t);
    }
    let mut metrics = measure_suite(image, &tests, target);
    metrics.steps_used = steps_used;
    (
        TestSuite {
            tests,
            generator: kind,
            config: cfg.clone(),
        },
        metrics,
    )
}

/// Writes `testN.mlt` files and `metrics.json` into `dir`.
pub fn write_suite(dir: &Path, suite: &TestSuite, metrics: &GenMetrics) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, text) in suite.rendered().iter().enumerate() {
        fs::write(dir.join(format!("test{i}.mlt")), text)?;
    }
    fs::write(
        dir.join("metrics.json"),
        serde_json::to_string_pretty(metrics).expect("metrics serialize"),
    )
}

/// Whether a trace covers the given branch arm.
pub(crate) fn arms_covered(trace: &CoverageTrace, branches: &[u32]) -> usize {
    branches
        .iter()
        .map(|&b| usize::from(trace.arm_hit(b, true)) + usize::from(trace.arm_hit(b, false)))
        .sum()
}
