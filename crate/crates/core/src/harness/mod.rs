//! Scenario analysis: images, generation, execution, criteria and statistics.

pub mod analyze;
pub mod build;
pub mod corpus;
pub mod outcome;

pub use analyze::{
    analyze_scenario, element_slug, summary, write_report, AnalysisConfig, AnalysisError,
    ConflictReport, ElementReport, FlavorReport, GeneratorReport, ScenarioReport, ScenarioStatus,
    EXTRA_GENERATOR,
};
pub use build::{build_images, BuiltImages, SkipReason};
pub use corpus::{aggregate, rates, run_corpus, scenario_stats, CorpusReport, StatsRow};
pub use outcome::{
    criteria_engine, detect_behavior_changes, execute_and_classify, BehaviorChange, Classified,
    Criterion, FlakyInput, OutcomeRow, Parent, RevisionPair, StableOutcome, TestStatus,
    DEFAULT_RUNS, HARNESS_STEP_CAP,
};
