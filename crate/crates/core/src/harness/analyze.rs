//! End-to-end analysis of one merge scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::generation::{
    derive_seed, generate, write_suite, GenError, GenMetrics, GeneratorConfig, GeneratorKind,
};
use crate::minilang::{
    coverage_report, parse_script, CoverageReport, ElementId, Flavor, Revision, TestScript,
};
use crate::scenario::{DiffError, LoadError, MergeScenario, SourceTree};
use crate::transforms::rename_script;

use super::build::{build_images, BuiltImages, SkipReason};
use super::corpus::{scenario_stats, suite_dir, StatsRow};
use super::outcome::{
    criteria_engine, detect_behavior_changes, execute_and_classify, polarity, BehaviorChange,
    Criterion, OutcomeRow, Parent, StableOutcome, DEFAULT_RUNS,
};

/// Name under which `extraTests` appear in reports.
pub const EXTRA_GENERATOR: &str = "extra";

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub generators: Vec<GeneratorKind>,
    pub flavors: Vec<Flavor>,
    /// Generator settings; `seed` is the global seed every job derives from.
    pub gen: GeneratorConfig,
    pub runs: u64,
    /// Hand-written tests run against every mutually changed element as if
    /// generated on the left parent.
    pub extra_tests: Vec<PathBuf>,
    pub jobs: usize,
    /// Where suites and `report.json` are written; nothing is written when unset.
    pub out: Option<PathBuf>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            generators: GeneratorKind::ALL.to_vec(),
            flavors: Flavor::ALL.to_vec(),
            gen: GeneratorConfig::default(),
            runs: DEFAULT_RUNS,
            extra_tests: Vec::new(),
            jobs: 1,
            out: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("extra test {path}: {message}")]
    ExtraTest { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] GenError),
    #[error("runs must be at least 1")]
    Runs,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus {0} contains no scenario with truth.json")]
    EmptyCorpus(PathBuf),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ScenarioStatus {
    Analyzed,
    FastForward,
    TextualConflict,
    NoMutualChanges,
    BuildFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConflictReport {
    pub scenario: String,
    pub element: String,
    pub flavor: Flavor,
    pub generator: String,
    pub criterion: Criterion,
    /// For C1 and C2 only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polarity: Option<String>,
    pub parent: Parent,
    pub test_id: String,
    /// Relative to the output directory for generated tests; as given for
    /// extra tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<String>,
    pub test: String,
    pub outcome: OutcomeRow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorReport {
    pub name: String,
    /// Parents for which generation did not run, with the reason.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped: BTreeMap<String, String>,
    pub conflicts: Vec<ConflictReport>,
    pub behavior_changes: Vec<BehaviorChange>,
    pub metrics: BTreeMap<String, GenMetrics>,
    pub coverage: CoverageReport,
    pub tests: usize,
    pub flaky: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FlavorReport {
    pub flavor: Flavor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
    pub generators: Vec<GeneratorReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementReport {
    pub id: String,
    pub flavors: Vec<FlavorReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioReport {
    pub scenario: String,
    pub status: ScenarioStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Files with textual conflicts.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub textual_conflicts: Vec<String>,
    pub elements: Vec<ElementReport>,
    /// Elements changed by both parents (or changed by one, removed by the
    /// other) that the merge no longer has.
    pub excluded: Vec<String>,
    pub stats: Vec<StatsRow>,
}

impl ScenarioReport {
    fn bare(scenario: &str, status: ScenarioStatus) -> Self {
        ScenarioReport {
            scenario: scenario.to_string(),
            status,
            message: None,
            textual_conflicts: Vec::new(),
            elements: Vec::new(),
            excluded: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn conflicts(&self) -> impl Iterator<Item = &ConflictReport> {
        self.elements
            .iter()
            .flat_map(|e| &e.flavors)
            .flat_map(|f| &f.generators)
            .flat_map(|g| &g.conflicts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Exit code of `analyze` for this report.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            ScenarioStatus::Analyzed if self.conflicts().next().is_some() => 2,
            ScenarioStatus::Analyzed => 0,
            ScenarioStatus::TextualConflict => 3,
            ScenarioStatus::FastForward | ScenarioStatus::NoMutualChanges => 4,
            ScenarioStatus::BuildFailure => 1,
        }
    }
}

/// File-system friendly form of an element id.
pub fn element_slug(e: &ElementId) -> String {
    e.to_string().replace('/', ".")
}

struct ExtraTest {
    label: String,
    script: TestScript,
}

fn load_extra_tests(paths: &[PathBuf]) -> Result<Vec<ExtraTest>, AnalysisError> {
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| AnalysisError::ExtraTest {
                path: p.clone(),
                message: e.to_string(),
            })?;
            let script = parse_script(&text).map_err(|e| AnalysisError::ExtraTest {
                path: p.clone(),
                message: e.to_string(),
            })?;
            Ok(ExtraTest {
                label: p.display().to_string(),
                script,
            })
        })
        .collect()
}

#[derive(Clone, Copy)]
enum JobKind {
    Generator(GeneratorKind),
    Extra,
}

struct Job<'a> {
    element: &'a ElementId,
    images: &'a BuiltImages,
    kind: JobKind,
}

struct Ctx<'a> {
    scenario: &'a str,
    cfg: &'a AnalysisConfig,
    extra: &'a [ExtraTest],
}

struct RunTest {
    id: String,
    path: Option<String>,
    text: String,
    script: TestScript,
    parent: Parent,
}

fn run_job(ctx: &Ctx, job: &Job) -> Result<GeneratorReport, AnalysisError> {
    let built = job.images;
    let flavor = built.flavor;
    let element = job.element;
    let mut report = GeneratorReport {
        name: match job.kind {
            JobKind::Generator(g) => g.name().to_string(),
            JobKind::Extra => EXTRA_GENERATOR.to_string(),
        },
        skipped: BTreeMap::new(),
        conflicts: Vec::new(),
        behavior_changes: Vec::new(),
        metrics: BTreeMap::new(),
        coverage: CoverageReport {
            statement_pct: 0.0,
            branch_pct: 0.0,
        },
        tests: 0,
        flaky: 0,
    };
    let mut tests: Vec<RunTest> = Vec::new();
    match job.kind {
        JobKind::Extra => {
            let renames = &built.renames[Revision::Merge as usize];
            for (i, t) in ctx.extra.iter().enumerate() {
                let script = rename_script(&t.script, renames);
                tests.push(RunTest {
                    id: format!("extra/{i}"),
                    path: Some(t.label.clone()),
                    text: crate::minilang::print_script(&script),
                    script,
                    parent: Parent::Left,
                });
            }
        }
        JobKind::Generator(kind) => {
            for parent in Parent::BOTH {
                let rev = parent.revision();
                let cfg = GeneratorConfig {
                    seed: derive_seed(
                        ctx.cfg.gen.seed,
                        &[
                            ctx.scenario,
                            &element.to_string(),
                            flavor.as_str(),
                            kind.name(),
                            parent.as_str(),
                        ],
                    ),
                    ..ctx.cfg.gen.clone()
                };
                let target = built.element_in(element, rev);
                let (suite, metrics) = match generate(
                    kind,
                    built.image(rev),
                    Some(built.image(Revision::Base)),
                    &target,
                    &cfg,
                ) {
                    Ok(r) => r,
                    Err(e @ GenError::InvalidConfig(_)) => return Err(e.into()),
                    Err(e) => {
                        report
                            .skipped
                            .insert(parent.as_str().to_string(), e.to_string());
                        continue;
                    }
                };
                let rel = suite_dir(ctx.scenario, flavor, kind.name(), parent.as_str(), element);
                if let Some(out) = &ctx.cfg.out {
                    let dir = out.join(&rel);
                    write_suite(&dir, &suite, &metrics).map_err(|source| AnalysisError::Io {
                        path: dir.clone(),
                        source,
                    })?;
                }
                for (i, (t, text)) in suite.tests.iter().zip(suite.rendered()).enumerate() {
                    tests.push(RunTest {
                        id: format!("{}/test{i}", parent.as_str()),
                        path: ctx.cfg.out.as_ref().map(|_| {
                            rel.join(format!("test{i}.mlt"))
                                .to_string_lossy()
                                .replace('\\', "/")
                        }),
                        text,
                        script: t.script(),
                        parent,
                    });
                }
                report.metrics.insert(parent.as_str().to_string(), metrics);
            }
        }
    }

    let images = built.refs();
    let mut outcomes: Vec<StableOutcome> = Vec::with_capacity(tests.len());
    let mut traces = Vec::new();
    for t in &tests {
        let c = execute_and_classify(&t.script, images, ctx.cfg.runs);
        traces.extend(c.merge_trace);
        outcomes.push(c.outcome);
    }
    report.tests = tests.len();
    report.flaky = outcomes.iter().filter(|o| o.flaky).count();
    for (t, o) in tests.iter().zip(&outcomes) {
        let Ok(criteria) = criteria_engine(o, t.parent) else {
            continue;
        };
        let row = o.statuses.expect("stable outcome has a row");
        for criterion in criteria {
            report.conflicts.push(ConflictReport {
                scenario: ctx.scenario.to_string(),
                element: element.to_string(),
                flavor,
                generator: report.name.clone(),
                criterion,
                polarity: matches!(
                    criterion,
                    Criterion::C1LeftDeviates | Criterion::C2RightDeviates
                )
                .then(|| polarity(&row, t.parent).to_string()),
                parent: t.parent,
                test_id: t.id.clone(),
                test_path: t.path.clone(),
                test: t.text.clone(),
                outcome: row,
            });
        }
    }
    report.behavior_changes = detect_behavior_changes(
        tests
            .iter()
            .zip(&outcomes)
            .map(|(t, o)| (t.id.as_str(), o, t.parent)),
    );
    if let Ok(c) = coverage_report(
        &traces,
        built.image(Revision::Merge),
        &built.element_in(element, Revision::Merge),
    ) {
        report.coverage = c;
    }
    Ok(report)
}

fn trees(scenario: &MergeScenario, merge: &SourceTree) -> [SourceTree; 4] {
    [
        scenario.base.clone(),
        scenario.left.clone(),
        scenario.right.clone(),
        merge.clone(),
    ]
}

/// Runs the whole pipeline on one scenario. Output is independent of
/// `cfg.jobs`.
pub fn analyze_scenario(
    scenario: &MergeScenario,
    cfg: &AnalysisConfig,
) -> Result<ScenarioReport, AnalysisError> {
    cfg.gen.validate()?;
    if cfg.runs == 0 {
        return Err(AnalysisError::Runs);
    }
    let extra = load_extra_tests(&cfg.extra_tests)?;
    let id = scenario.id.as_str();

    if scenario.is_fast_forward() {
        return Ok(ScenarioReport::bare(id, ScenarioStatus::FastForward));
    }
    let merge = match scenario.merge_tree() {
        Ok(m) => m,
        Err(conflict) => {
            let mut r = ScenarioReport::bare(id, ScenarioStatus::TextualConflict);
            r.textual_conflicts = conflict.conflicts.keys().cloned().collect();
            return Ok(r);
        }
    };
    let trees = trees(scenario, &merge);
    let tree_refs = [&trees[0], &trees[1], &trees[2], &trees[3]];
    if let Err(skip) = build_images(tree_refs, Flavor::Original, None) {
        let mut r = ScenarioReport::bare(id, ScenarioStatus::BuildFailure);
        r.message = Some(skip.to_string());
        return Ok(r);
    }
    let mutual = match scenario.mutual_changes() {
        Ok(m) => m,
        Err(DiffError::TextualConflict(files)) => {
            let mut r = ScenarioReport::bare(id, ScenarioStatus::TextualConflict);
            r.textual_conflicts = files;
            return Ok(r);
        }
        Err(e) => {
            let mut r = ScenarioReport::bare(id, ScenarioStatus::BuildFailure);
            r.message = Some(e.to_string());
            return Ok(r);
        }
    };
    let excluded: Vec<String> = mutual.excluded.iter().map(|e| e.to_string()).collect();
    if mutual.elements.is_empty() {
        let mut r = ScenarioReport::bare(id, ScenarioStatus::NoMutualChanges);
        r.excluded = excluded;
        r.stats = scenario_stats(scenario.truth.as_ref(), &r, cfg);
        return Ok(r);
    }

    let elements: Vec<&ElementId> = mutual.elements.iter().collect();
    // Images per (element, flavor); only the serialized flavor depends on
    // the element.
    let mut shared: BTreeMap<Flavor, Result<BuiltImages, SkipReason>> = BTreeMap::new();
    let mut built: Vec<Vec<(Flavor, Result<BuiltImages, SkipReason>)>> = Vec::new();
    for e in &elements {
        let mut per = Vec::new();
        for &flavor in &cfg.flavors {
            let b = if flavor == Flavor::Serialized {
                let b = build_images(tree_refs, flavor, Some(e));
                if let (
                    Ok(BuiltImages {
                        pool: Some(pool), ..
                    }),
                    Some(out),
                ) = (&b, &cfg.out)
                {
                    let dir = out.join(id).join(flavor.as_str()).join(element_slug(e));
                    let path = dir.join("pool.json");
                    fs::create_dir_all(&dir)
                        .and_then(|_| pool.save(&path))
                        .map_err(|source| AnalysisError::Io { path, source })?;
                }
                b
            } else {
                shared
                    .entry(flavor)
                    .or_insert_with(|| build_images(tree_refs, flavor, None))
                    .clone()
            };
            per.push((flavor, b));
        }
        built.push(per);
    }

    let mut kinds: Vec<JobKind> = cfg
        .generators
        .iter()
        .map(|&g| JobKind::Generator(g))
        .collect();
    if !extra.is_empty() {
        kinds.push(JobKind::Extra);
    }
    let mut jobs = Vec::new();
    for (ei, e) in elements.iter().enumerate() {
        for (_, b) in &built[ei] {
            if let Ok(images) = b {
                for &kind in &kinds {
                    jobs.push(Job {
                        element: e,
                        images,
                        kind,
                    });
                }
            }
        }
    }
    let ctx = Ctx {
        scenario: id,
        cfg,
        extra: &extra,
    };
    let results: Vec<Result<GeneratorReport, AnalysisError>> = if cfg.jobs <= 1 {
        jobs.iter().map(|j| run_job(&ctx, j)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| AnalysisError::Pool(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|j| run_job(&ctx, j)).collect())
    };
    let mut results = results.into_iter();

    let mut report = ScenarioReport::bare(id, ScenarioStatus::Analyzed);
    report.excluded = excluded;
    for (ei, e) in elements.iter().enumerate() {
        let mut flavors = Vec::new();
        for (flavor, b) in &built[ei] {
            let mut fr = FlavorReport {
                flavor: *flavor,
                skipped: None,
                generators: Vec::new(),
            };
            match b {
                Ok(_) => {
                    for _ in &kinds {
                        fr.generators
                            .push(results.next().expect("one result per job")?);
                    }
                }
                Err(skip) => fr.skipped = Some(skip.clone()),
            }
            flavors.push(fr);
        }
        report.elements.push(ElementReport {
            id: e.to_string(),
            flavors,
        });
    }
    report.stats = scenario_stats(scenario.truth.as_ref(), &report, cfg);
    Ok(report)
}

/// Writes the report as `report.json` inside `dir`.
pub fn write_report(dir: &Path, json: &str) -> Result<PathBuf, AnalysisError> {
    let path = dir.join("report.json");
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&path, json))
        .map_err(|source| AnalysisError::Io {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

/// Human-readable summary naming each conflict's element, criterion and
/// revealing test.
pub fn summary(report: &ScenarioReport, out: Option<&Path>) -> String {
    let mut s = String::new();
    let _ = write!(s, "scenario {}: ", report.scenario);
    match report.status {
        ScenarioStatus::FastForward => s.push_str("fast-forward, nothing to analyze\n"),
        ScenarioStatus::TextualConflict => {
            let _ = writeln!(
                s,
                "textual conflict in {}",
                report.textual_conflicts.join(", ")
            );
        }
        ScenarioStatus::NoMutualChanges => s.push_str("no mutually changed elements\n"),
        ScenarioStatus::BuildFailure => {
            let _ = writeln!(
                s,
                "build failure: {}",
                report.message.as_deref().unwrap_or("unknown")
            );
        }
        ScenarioStatus::Analyzed => {
            let n = report.conflicts().count();
            let _ = writeln!(
                s,
                "{} element(s) analyzed, {} conflict(s)",
                report.elements.len(),
                n
            );
            for c in report.conflicts() {
                let path = match (&c.test_path, out, c.generator == EXTRA_GENERATOR) {
                    (Some(p), Some(o), false) => o.join(p).display().to_string(),
                    (Some(p), _, _) => p.clone(),
                    (None, _, _) => c.test_id.clone(),
                };
                let _ = writeln!(
                    s,
                    "  CONFLICT {} {} {} [{}/{}/{}] test {}",
                    c.element,
                    c.criterion,
                    c.outcome,
                    c.flavor,
                    c.generator,
                    c.parent.as_str(),
                    path
                );
            }
        }
    }
    for e in &report.excluded {
        let _ = writeln!(s, "  excluded {e} (missing from merge)");
    }
    s
}
