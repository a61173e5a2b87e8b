//! Corpus runs and detection statistics against ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::minilang::Flavor;
use crate::scenario::{load_scenario, GroundTruth};

use super::analyze::{
    analyze_scenario, element_slug, AnalysisConfig, AnalysisError, ScenarioReport, ScenarioStatus,
};

/// Precision, recall and accuracy from a confusion matrix. Precision is 1
/// when nothing was reported; recall and accuracy are 1 on empty
/// denominators.
pub fn rates(tp: usize, fp: usize, tn: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    (
        ratio(tp, tp + fp),
        ratio(tp, tp + fn_),
        ratio(tp + tn, tp + fp + tn + fn_),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsRow {
    pub generator: String,
    pub flavor: Flavor,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

impl StatsRow {
    pub fn new(
        generator: &str,
        flavor: Flavor,
        tp: usize,
        fp: usize,
        tn: usize,
        fn_: usize,
    ) -> Self {
        let (precision, recall, accuracy) = rates(tp, fp, tn, fn_);
        StatsRow {
            generator: generator.to_string(),
            flavor,
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            accuracy,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn add(&mut self, other: &StatsRow) {
        *self = StatsRow::new(
            &self.generator,
            self.flavor,
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn_ + other.fn_,
        );
    }
}

/// Per (generator, flavor) confusion counts of one scenario. Scenarios that
/// were not analyzed contribute nothing; an element whose flavor was
/// skipped is left out of that flavor's rows.
pub fn scenario_stats(
    truth: Option<&GroundTruth>,
    report: &ScenarioReport,
    cfg: &AnalysisConfig,
) -> Vec<StatsRow> {
    let Some(truth) = truth else {
        return Vec::new();
    };
    if !matches!(
        report.status,
        ScenarioStatus::Analyzed | ScenarioStatus::NoMutualChanges
    ) {
        return Vec::new();
    }
    let mut rows = Vec::new();
    for g in &cfg.generators {
        for &flavor in &cfg.flavors {
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for (element, verdict) in &truth.verdicts {
                let id = element.to_string();
                let flavor_report = report
                    .elements
                    .iter()
                    .find(|e| e.id == id)
                    .and_then(|e| e.flavors.iter().find(|f| f.flavor == flavor));
                if flavor_report.is_some_and(|f| f.skipped.is_some()) {
                    continue;
                }
                let reported = flavor_report
                    .and_then(|f| f.generators.iter().find(|r| r.name == g.name()))
                    .is_some_and(|r| !r.conflicts.is_empty());
                match (reported, verdict.interference) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
            rows.push(StatsRow::new(g.name(), flavor, tp, fp, tn, fn_));
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusReport {
    pub scenarios: Vec<ScenarioReport>,
    pub stats: Vec<StatsRow>,
}

impl CorpusReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn conflict_count(&self) -> usize {
        self.scenarios.iter().map(|s| s.conflicts().count()).sum()
    }

    /// Fixed-width table of the aggregate statistics.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:<14} {:>3} {:>3} {:>3} {:>3} {:>6} {:>6} {:>6}",
            "generator", "flavor", "tp", "fp", "tn", "fn", "pr.", "re.", "ac."
        );
        for r in &self.stats {
            let _ = writeln!(
                s,
                "{:<14} {:<14} {:>3} {:>3} {:>3} {:>3} {:>6.2} {:>6.2} {:>6.2}",
                r.generator,
                r.flavor.as_str(),
                r.tp,
                r.fp,
                r.tn,
                r.fn_,
                r.precision,
                r.recall,
                r.accuracy
            );
        }
        s
    }
}

/// Sums per-scenario rows into one row per (generator, flavor), in
/// configuration order.
pub fn aggregate(reports: &[ScenarioReport], cfg: &AnalysisConfig) -> Vec<StatsRow> {
    let mut rows: Vec<StatsRow> = cfg
        .generators
        .iter()
        .flat_map(|g| {
            cfg.flavors
                .iter()
                .map(move |&f| StatsRow::new(g.name(), f, 0, 0, 0, 0))
        })
        .collect();
    for r in reports {
        for s in &r.stats {
            if let Some(row) = rows
                .iter_mut()
                .find(|x| x.generator == s.generator && x.flavor == s.flavor)
            {
                row.add(s);
            }
        }
    }
    rows
}

/// Scenario directories of a corpus, sorted by name.
pub fn scenario_dirs(corpus: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    let entries = fs::read_dir(corpus).map_err(|source| AnalysisError::Io {
        path: corpus.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("base").is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Analyzes every scenario of a corpus and aggregates statistics. Per
/// scenario reports go to `<out>/<scenario>/report.json` when `out` is set.
pub fn run_corpus(corpus: &Path, cfg: &AnalysisConfig) -> Result<CorpusReport, AnalysisError> {
    let mut scenarios = Vec::new();
    for dir in scenario_dirs(corpus)? {
        scenarios.push(load_scenario(&dir)?);
    }
    if !scenarios.iter().any(|s| s.truth.is_some()) {
        return Err(AnalysisError::EmptyCorpus(corpus.to_path_buf()));
    }
    let mut reports = Vec::new();
    for s in &scenarios {
        let report = analyze_scenario(s, cfg)?;
        if let Some(out) = &cfg.out {
            super::analyze::write_report(&out.join(&s.id), &report.to_json())?;
        }
        reports.push(report);
    }
    let stats = aggregate(&reports, cfg);
    Ok(CorpusReport {
        scenarios: reports,
        stats,
    })
}

/// Relative directory of a generated suite inside the output directory.
pub fn suite_dir(
    scenario: &str,
    flavor: Flavor,
    generator: &str,
    parent: &str,
    element: &crate::minilang::ElementId,
) -> PathBuf {
    PathBuf::from(scenario)
        .join(flavor.as_str())
        .join(generator)
        .join(parent)
        .join(element_slug(element))
}
