use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semamerge::generation::{GeneratorConfig, GeneratorKind};
use semamerge::harness::{analyze_scenario, run_corpus, summary, write_report, AnalysisConfig};
use semamerge::minilang::Flavor;
use semamerge::scenario::load_scenario;

#[derive(Parser)]
#[command(
    name = "semamerge",
    version,
    about = "Detects semantic merge conflicts with generated differential tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Three-way merge a scenario's parents and write the merged tree.
    Merge {
        dir: PathBuf,
        /// Where to write the merged tree (default: <dir>/merge).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analyze one merge scenario.
    Analyze {
        dir: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
    /// Analyze every scenario of a corpus and print detection statistics.
    Corpus {
        dir: PathBuf,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args)]
struct Opts {
    /// Comma-separated generators, or `none` to run only extra tests.
    #[arg(long, default_value = "randoop,randoop-clean,search,differential")]
    generators: String,
    /// Comma-separated flavors: original, testability, serialization.
    #[arg(long, default_value = "original,testability,serialization")]
    flavors: String,
    #[arg(long, env = "SEMAMERGE_SEED", default_value_t = 0)]
    seed: u64,
    /// Interpreter steps each generator run may spend.
    #[arg(long, default_value_t = 200_000)]
    budget_steps: u64,
    /// Executions per test and revision.
    #[arg(long, default_value_t = 3)]
    runs: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Hand-written test scripts to run as if generated on the left parent.
    #[arg(long, value_delimiter = ',')]
    extra_tests: Vec<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_list<T>(
    text: &str,
    what: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<T>, String> {
    if text.trim() == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| format!("unknown {what} `{s}`")))
        .collect()
}

impl Opts {
    fn config(&self) -> Result<AnalysisConfig, String> {
        let generators = parse_list(&self.generators, "generator", GeneratorKind::from_name)?;
        let flavors = parse_list(&self.flavors, "flavor", Flavor::from_name)?;
        if flavors.is_empty() {
            return Err("at least one flavor is required".into());
        }
        if self.runs == 0 {
            return Err("--runs must be at least 1".into());
        }
        Ok(AnalysisConfig {
            generators,
            flavors,
            gen: GeneratorConfig {
                seed: self.seed,
                step_budget: self.budget_steps,
                ..GeneratorConfig::default()
            },
            runs: self.runs,
            extra_tests: self.extra_tests.clone(),
            jobs: self.jobs.max(1),
            out: Some(self.out.clone()),
        })
    }
}

fn merge(dir: &Path, out: Option<PathBuf>) -> Result<u8, String> {
    let scenario = load_scenario(dir).map_err(|e| e.to_string())?;
    let merged = scenario.textual_merge();
    if !merged.is_clean() {
        for (file, hunks) in &merged.conflicts {
            for h in hunks {
                println!(
                    "CONFLICT {file}: base {}..{}, left {}..{}, right {}..{}",
                    h.base.0 + 1,
                    h.base.1,
                    h.left.0 + 1,
                    h.left.1,
                    h.right.0 + 1,
                    h.right.1
                );
                println!(
                    "<<<<<<< left\n{}||||||| base\n{}=======\n{}>>>>>>> right",
                    h.left_text, h.base_text, h.right_text
                );
            }
        }
        return Ok(3);
    }
    let out = out.unwrap_or_else(|| dir.join("merge"));
    merged
        .merged
        .write(&out)
        .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    println!("merged cleanly into {}", out.display());
    Ok(0)
}

fn analyze(dir: &Path, opts: &Opts) -> Result<u8, String> {
    let cfg = opts.config()?;
    let scenario = load_scenario(dir).map_err(|e| e.to_string())?;
    let report = analyze_scenario(&scenario, &cfg).map_err(|e| e.to_string())?;
    let path = write_report(&opts.out, &report.to_json()).map_err(|e| e.to_string())?;
    print!("{}", summary(&report, Some(&opts.out)));
    println!("report: {}", path.display());
    Ok(report.exit_code() as u8)
}

fn corpus(dir: &Path, opts: &Opts) -> Result<u8, String> {
    let cfg = opts.config()?;
    let report = run_corpus(dir, &cfg).map_err(|e| e.to_string())?;
    let path = write_report(&opts.out, &report.to_json()).map_err(|e| e.to_string())?;
    for s in &report.scenarios {
        print!("{}", summary(s, Some(&opts.out)));
    }
    print!("{}", report.table());
    println!("report: {}", path.display());
    Ok(if report.conflict_count() > 0 { 2 } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Merge { dir, out } => merge(dir, out.clone()),
        Command::Analyze { dir, opts } => analyze(dir, opts),
        Command::Corpus { dir, opts } => corpus(dir, opts),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
