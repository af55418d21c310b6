//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 runtime or
//! data error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Format, ScenarioConfig};
use crate::dataset;
use crate::design::{has_errors, randomize_cohort};
use crate::error::{Error, Result};
use crate::estimand::WeightScheme;
use crate::inference::{estimate_dataset, AnalysisConfig, VarianceModel};
use crate::montecarlo::{simulate, write_replicates_csv, Execution};
use crate::outcome::{generate_outcomes, true_estimands};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "factive", version, about = "Simulate and analyse augmented randomized trial designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Directory for output files; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of replicates.
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario and report identifiability warnings.
    Validate(Common),
    /// Print true estimand values under the scenario's model.
    Truth(Common),
    /// Randomize a cohort, generate outcomes and write the dataset CSV.
    Generate(Common),
    /// Estimate all estimands from a dataset CSV.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        /// equal | sample-size | target:FRACTION | explicit:W1,W2
        #[arg(long, value_parser = parse_weights)]
        weights: Option<WeightScheme>,
        #[arg(long)]
        adjust_covariates: bool,
        #[arg(long, value_enum)]
        variance: Option<VarianceArg>,
    },
    /// Run Monte Carlo replicates and summarize operating characteristics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Worker threads (default: all cores). Output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum VarianceArg {
    Pooled,
    CellWise,
}

fn parse_weights(s: &str) -> std::result::Result<WeightScheme, String> {
    let err = || format!("invalid weights `{s}`; expected equal, sample-size, target:F or explicit:W1,W2");
    let scheme = match s.split_once(':') {
        None if s == "equal" => WeightScheme::Equal,
        None if s == "sample-size" => WeightScheme::SampleSize,
        Some(("target", f)) => WeightScheme::TargetPopulation {
            fraction_eligible: f.parse().map_err(|_| err())?,
        },
        Some(("explicit", pair)) => {
            let (a, b) = pair.split_once(',').ok_or_else(err)?;
            WeightScheme::Explicit {
                w1: a.parse().map_err(|_| err())?,
                w2: b.parse().map_err(|_| err())?,
            }
        }
        _ => return Err(err()),
    };
    scheme.validate().map_err(|e| e.to_string())?;
    Ok(scheme)
}

/// Why a command failed, mapped onto the exit-code contract.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parse(_) => Failure::Validation(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn load(common: &Common) -> std::result::Result<ScenarioConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("--config is required".into()))?;
    let mut cfg = ScenarioConfig::from_path(path)?;
    if let Some(seed) = common.seed {
        cfg.design.seed = seed;
        cfg.simulation.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.simulation.n_reps = reps;
    }
    let diagnostics = cfg.validate();
    if has_errors(&diagnostics) {
        return Err(Failure::Validation(report::render_diagnostics(&diagnostics).trim_end().to_string()));
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: Option<&ScenarioConfig>) -> Option<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
}

fn format_of(common: &Common, cfg: Option<&ScenarioConfig>) -> Format {
    common
        .format
        .or_else(|| cfg.and_then(|c| c.output.format))
        .unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    let io = |e: std::io::Error| Failure::Runtime(e.to_string());
    match cli.command {
        Command::Validate(common) => {
            let path = common
                .config
                .as_ref()
                .ok_or_else(|| Failure::Validation("--config is required".into()))?;
            let cfg = ScenarioConfig::from_path(path)?;
            let diagnostics = cfg.validate();
            // Plain text unless JSON is asked for on the command line.
            match common.format.unwrap_or(Format::Text) {
                Format::Json => write!(stdout, "{}", json(&diagnostics)).map_err(io)?,
                _ if diagnostics.is_empty() => writeln!(stdout, "ok").map_err(io)?,
                _ => write!(stdout, "{}", report::render_diagnostics(&diagnostics)).map_err(io)?,
            }
            if has_errors(&diagnostics) {
                return Err(Failure::Validation("scenario has errors".into()));
            }
            Ok(())
        }
        Command::Truth(common) => {
            let cfg = load(&common)?;
            let truth = true_estimands(
                &cfg.model,
                &cfg.analysis.weights,
                Some(&cfg.design.expected_cell_counts()),
            )?;
            let (j, t) = (json(&truth), report::render_truth(&truth));
            match out_dir(&common, Some(&cfg)) {
                Some(dir) => {
                    write_file(&dir, "truth.json", j.as_bytes())?;
                    write_file(&dir, "truth.txt", t.as_bytes())?;
                }
                None => match format_of(&common, Some(&cfg)) {
                    Format::Text => write!(stdout, "{t}").map_err(io)?,
                    _ => write!(stdout, "{j}").map_err(io)?,
                },
            }
            Ok(())
        }
        Command::Generate(common) => {
            let cfg = load(&common)?;
            let allocated = randomize_cohort(&cfg.design)?;
            let data = generate_outcomes(&allocated, &cfg.model, cfg.design.seed)?;
            let csv = dataset::to_csv_string(&data)?;
            match out_dir(&common, Some(&cfg)) {
                Some(dir) => write_file(&dir, "dataset.csv", csv.as_bytes())?,
                None => write!(stdout, "{csv}").map_err(io)?,
            }
            Ok(())
        }
        Command::Estimate {
            common,
            data,
            alpha,
            weights,
            adjust_covariates,
            variance,
        } => {
            let cfg = match &common.config {
                Some(_) => Some(load(&common)?),
                None => None,
            };
            let mut analysis = cfg.as_ref().map(|c| c.analysis.clone()).unwrap_or_else(AnalysisConfig::default);
            if let Some(a) = alpha {
                analysis.alpha = a;
            }
            if let Some(w) = weights {
                analysis.weights = w;
            }
            if adjust_covariates {
                analysis.adjust_covariates = true;
            }
            if let Some(v) = variance {
                analysis.variance = match v {
                    VarianceArg::Pooled => VarianceModel::Pooled,
                    VarianceArg::CellWise => VarianceModel::CellWise,
                };
            }
            analysis.validate()?;
            let dataset = dataset::read_csv_file(&data)?;
            let report = estimate_dataset(&dataset, &analysis)?;
            let (j, t) = (json(&report), report::render_estimate(&report));
            match out_dir(&common, cfg.as_ref()) {
                Some(dir) => {
                    write_file(&dir, "estimate.json", j.as_bytes())?;
                    write_file(&dir, "estimate.txt", t.as_bytes())?;
                }
                None => match format_of(&common, cfg.as_ref()) {
                    Format::Text => write!(stdout, "{t}").map_err(io)?,
                    _ => write!(stdout, "{j}").map_err(io)?,
                },
            }
            Ok(())
        }
        Command::Simulate { common, threads } => {
            let cfg = load(&common)?;
            let scenario = cfg.scenario();
            let reps = cfg.simulation.n_reps;
            let seed = cfg.simulation.seed;
            let run = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Runtime(e.to_string()))?
                    .install(|| simulate(&scenario, reps, seed, Execution::Parallel))?,
                None => simulate(&scenario, reps, seed, Execution::Parallel)?,
            };
            let j = json(&run.summary);
            let t = report::render_summary(&run.summary);
            let mut csv = Vec::new();
            write_replicates_csv(&run, cfg.analysis.alpha, &mut csv)?;
            match out_dir(&common, Some(&cfg)) {
                Some(dir) => {
                    write_file(&dir, "summary.json", j.as_bytes())?;
                    write_file(&dir, "summary.txt", t.as_bytes())?;
                    write_file(&dir, "replicates.csv", &csv)?;
                }
                None => match format_of(&common, Some(&cfg)) {
                    Format::Json => write!(stdout, "{j}").map_err(io)?,
                    Format::Text => write!(stdout, "{t}").map_err(io)?,
                    Format::Csv => stdout.write_all(&csv).map_err(io)?,
                },
            }
            Ok(())
        }
    }
}
