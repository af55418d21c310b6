//! Replication engine for operating characteristics.
//!
//! Replicate `r` uses the seed `derive_seed(master, r)` for both allocation
//! and outcomes, so results do not depend on scheduling. Replicates run in
//! parallel; aggregation is a sequential pass in replicate order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{Cell, CellCounts, N_CELLS};
use crate::dataset::format_f64;
use crate::design::{randomize_cohort, DesignSpec, Part};
use crate::error::{Error, Result};
use crate::estimand::{build_contrast, EstimandName, WeightScheme};
use crate::gate::{apply_gate, interim_subset};
use crate::inference::{estimate_dataset, AnalysisConfig, EstimateRow};
use crate::outcome::{generate_outcomes, OutcomeModelSpec};
use crate::rng::derive_seed;

/// Number of replicate error messages kept in a summary.
const KEPT_ERRORS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub design: DesignSpec,
    pub model: OutcomeModelSpec,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub index: u64,
    pub seed: u64,
    pub part_b_activated: bool,
    pub posterior_probability: Option<f64>,
    pub cell_counts: CellCounts,
    pub rows: Vec<EstimateRow>,
}

/// Run one replicate with an explicit seed.
pub fn run_replicate(scenario: &Scenario, index: u64, seed: u64) -> Result<ReplicateResult> {
    let design = DesignSpec {
        seed,
        ..scenario.design.clone()
    };
    let allocated = randomize_cohort(&design)?;
    let mut data = generate_outcomes(&allocated, &scenario.model, seed)?;
    let mut activated = true;
    let mut posterior_probability = None;
    if let Some(rule) = &design.part_b_gate {
        let interim = interim_subset(&data, rule.interim_fraction);
        let decision = apply_gate(&interim, rule)?;
        posterior_probability = Some(decision.posterior.prob_positive);
        if !decision.activate_part_b {
            activated = false;
            data = data.filtered(|p| p.part == Part::A);
        }
    }
    let report = estimate_dataset(&data, &scenario.analysis)?;
    Ok(ReplicateResult {
        index,
        seed,
        part_b_activated: activated,
        posterior_probability,
        cell_counts: *data.cell_counts(),
        rows: report.estimates,
    })
}

/// True value of each estimand under the scenario, with sample-size weights
/// bound to the design's expected cell counts. `None` where undefined.
pub fn scenario_truth(scenario: &Scenario) -> Result<Vec<(EstimandName, Option<f64>)>> {
    scenario.model.validate()?;
    let means = scenario.model.expected_cell_means();
    let counts = scenario.design.expected_cell_counts();
    let set = scenario.analysis.estimand_set();
    Ok(EstimandName::ALL
        .into_iter()
        .map(|n| {
            let v = build_contrast(n, set.scheme_for(n), Some(&counts))
                .ok()
                .map(|s| s.contrast.apply(&means));
            (n, v)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub estimand: EstimandName,
    pub truth: Option<f64>,
    /// Replicates in which the estimand was estimable.
    pub n_estimable: u64,
    pub mc_mean: Option<f64>,
    pub mc_se: Option<f64>,
    pub bias: Option<f64>,
    pub empirical_se: Option<f64>,
    pub mean_model_se: Option<f64>,
    pub coverage: Option<f64>,
    pub rejection_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCountSummary {
    pub cell: String,
    pub label: String,
    pub mean_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n_reps: u64,
    pub master_seed: u64,
    pub alpha: f64,
    pub weights: WeightScheme,
    pub estimands: Vec<EstimandSummary>,
    pub part_b_activation_rate: f64,
    pub mean_cell_counts: Vec<CellCountSummary>,
    pub n_errors: u64,
    pub error_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl SimulationSummary {
    pub fn estimand(&self, name: EstimandName) -> &EstimandSummary {
        self.estimands
            .iter()
            .find(|s| s.estimand == name)
            .expect("every estimand is summarized")
    }
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub summary: SimulationSummary,
    /// Per-replicate outcomes in replicate order.
    pub replicates: Vec<std::result::Result<ReplicateResult, String>>,
    pub truth: Vec<(EstimandName, Option<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

pub fn run_replicates(scenario: &Scenario, n_reps: u64, master_seed: u64) -> Result<SimulationSummary> {
    Ok(simulate(scenario, n_reps, master_seed, Execution::Parallel)?.summary)
}

pub fn simulate(scenario: &Scenario, n_reps: u64, master_seed: u64, execution: Execution) -> Result<SimulationRun> {
    if n_reps == 0 {
        return Err(Error::config("n_reps", "must be at least 1"));
    }
    if let Some(d) = crate::design::validate_design_with(&scenario.design, &scenario.analysis.estimand_set())
        .into_iter()
        .find(|d| d.severity == crate::design::Severity::Error)
    {
        return Err(Error::config(d.field.unwrap_or_default(), d.message));
    }
    scenario.model.validate()?;
    scenario.analysis.validate()?;
    let truth = scenario_truth(scenario)?;

    let one = |r: u64| {
        run_replicate(scenario, r, derive_seed(master_seed, r)).map_err(|e| e.to_string())
    };
    let replicates: Vec<_> = match execution {
        Execution::Sequential => (0..n_reps).map(one).collect(),
        Execution::Parallel => (0..n_reps).into_par_iter().map(one).collect(),
    };
    let summary = summarize(scenario, &truth, &replicates, master_seed);
    Ok(SimulationRun {
        summary,
        replicates,
        truth,
    })
}

#[derive(Default)]
struct Accumulator {
    n: u64,
    sum: f64,
    sum_sq_dev: f64,
    n_se: u64,
    se_sum: f64,
    n_ci: u64,
    covered: u64,
    n_p: u64,
    rejected: u64,
}

fn summarize(
    scenario: &Scenario,
    truth: &[(EstimandName, Option<f64>)],
    replicates: &[std::result::Result<ReplicateResult, String>],
    master_seed: u64,
) -> SimulationSummary {
    let alpha = scenario.analysis.alpha;
    let ok: Vec<&ReplicateResult> = replicates.iter().filter_map(|r| r.as_ref().ok()).collect();
    let errors: Vec<String> = replicates
        .iter()
        .filter_map(|r| r.as_ref().err())
        .take(KEPT_ERRORS)
        .cloned()
        .collect();
    let n_errors = (replicates.len() - ok.len()) as u64;

    let mut estimands = Vec::with_capacity(truth.len());
    for (k, &(name, truth_value)) in truth.iter().enumerate() {
        let mut acc = Accumulator::default();
        // two passes in replicate order: mean, then squared deviations
        for rep in &ok {
            let row = &rep.rows[k];
            debug_assert_eq!(row.estimand, name);
            if let Some(est) = row.estimate {
                acc.n += 1;
                acc.sum += est;
            }
        }
        let mean = (acc.n > 0).then(|| acc.sum / acc.n as f64);
        for rep in &ok {
            let row = &rep.rows[k];
            let Some(est) = row.estimate else { continue };
            let m = mean.expect("n > 0");
            acc.sum_sq_dev += (est - m) * (est - m);
            if let Some(se) = row.se {
                acc.n_se += 1;
                acc.se_sum += se;
            }
            if let Some(c) = truth_value.and_then(|t| row.covers(t)) {
                acc.n_ci += 1;
                acc.covered += u64::from(c);
            }
            if let Some(rej) = row.rejects(alpha) {
                acc.n_p += 1;
                acc.rejected += u64::from(rej);
            }
        }
        let empirical_se = (acc.n > 1).then(|| (acc.sum_sq_dev / (acc.n - 1) as f64).sqrt());
        estimands.push(EstimandSummary {
            estimand: name,
            truth: truth_value,
            n_estimable: acc.n,
            mc_mean: mean,
            mc_se: empirical_se.map(|s| s / (acc.n as f64).sqrt()),
            bias: mean.zip(truth_value).map(|(m, t)| m - t),
            empirical_se,
            mean_model_se: (acc.n_se > 0).then(|| acc.se_sum / acc.n_se as f64),
            coverage: (acc.n_ci > 0).then(|| acc.covered as f64 / acc.n_ci as f64),
            rejection_rate: (acc.n_p > 0).then(|| acc.rejected as f64 / acc.n_p as f64),
        });
    }

    let n_ok = ok.len().max(1) as f64;
    let mut counts = [0.0; N_CELLS];
    let mut activated = 0u64;
    for rep in &ok {
        for (c, v) in counts.iter_mut().zip(rep.cell_counts) {
            *c += v as f64;
        }
        activated += u64::from(rep.part_b_activated);
    }
    let mean_cell_counts = Cell::ALL
        .iter()
        .map(|c| CellCountSummary {
            cell: c.key(),
            label: c.to_string(),
            mean_count: if ok.is_empty() { 0.0 } else { counts[c.index()] / n_ok },
        })
        .collect();

    SimulationSummary {
        n_reps: replicates.len() as u64,
        master_seed,
        alpha,
        weights: scenario.analysis.weights,
        estimands,
        part_b_activation_rate: if ok.is_empty() { 0.0 } else { activated as f64 / n_ok },
        mean_cell_counts,
        n_errors,
        error_rate: n_errors as f64 / replicates.len() as f64,
        errors,
    }
}

/// Long-format per-replicate CSV:
/// `replicate,estimand,estimate,se,covered,rejected`.
pub fn write_replicates_csv<W: std::io::Write>(run: &SimulationRun, alpha: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let e = |e: csv::Error| Error::data(e.to_string());
    w.write_record(["replicate", "estimand", "estimate", "se", "covered", "rejected"])
        .map_err(e)?;
    let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
    let flag = |v: Option<bool>| match v {
        Some(true) => "1".to_string(),
        Some(false) => "0".to_string(),
        None => String::new(),
    };
    for rep in run.replicates.iter().filter_map(|r| r.as_ref().ok()) {
        for (row, (_, truth)) in rep.rows.iter().zip(&run.truth) {
            let covered = truth.and_then(|t| row.covers(t));
            w.write_record([
                rep.index.to_string(),
                row.estimand.to_string(),
                opt(row.estimate),
                opt(row.se),
                flag(covered),
                flag(row.rejects(alpha)),
            ])
            .map_err(e)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::GatingRule;
    use crate::inference::estimate_dataset;

    fn scenario(gate: Option<GatingRule>) -> Scenario {
        Scenario {
            design: DesignSpec {
                n_eligible: 120,
                n_broader: 80,
                part_b_gate: gate,
                seed: 0,
                ..DesignSpec::default()
            },
            model: OutcomeModelSpec::from_means([1.5, 0.0, 1.0, 0.0, 1.5, 0.0, 1.0, 0.0], 1.0),
            analysis: AnalysisConfig::default(),
        }
    }

    #[test]
    fn single_replicate_summary_matches_its_report() {
        let sc = scenario(None);
        let summary = run_replicates(&sc, 1, 77).unwrap();
        let seed = derive_seed(77, 0);
        let design = DesignSpec { seed, ..sc.design.clone() };
        let data = generate_outcomes(&randomize_cohort(&design).unwrap(), &sc.model, seed).unwrap();
        let report = estimate_dataset(&data, &sc.analysis).unwrap();
        for row in &report.estimates {
            let s = summary.estimand(row.estimand);
            assert_eq!(s.mc_mean, row.estimate);
            assert_eq!(s.mean_model_se, row.se);
            assert_eq!(s.n_estimable, 1);
            assert_eq!(s.empirical_se, None);
        }
        assert_eq!(summary.part_b_activation_rate, 1.0);
        assert_eq!(summary.mean_cell_counts[0].mean_count, data.cell_counts()[0] as f64);
    }

    #[test]
    fn parallel_and_sequential_agree_exactly() {
        let sc = scenario(Some(GatingRule {
            interim_fraction: 0.5,
            prior_mean: 0.0,
            prior_sd: 1.0,
            threshold: 0.9,
        }));
        let a = simulate(&sc, 64, 5, Execution::Sequential).unwrap().summary;
        let b = simulate(&sc, 64, 5, Execution::Parallel).unwrap().summary;
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn threshold_zero_gate_equals_ungated_run() {
        let gated = scenario(Some(GatingRule {
            interim_fraction: 0.3,
            prior_mean: -1.0,
            prior_sd: 0.5,
            threshold: 0.0,
        }));
        let a = run_replicates(&gated, 50, 9).unwrap();
        let b = run_replicates(&scenario(None), 50, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failed_gate_reduces_replicate_to_plain_rct() {
        let sc = scenario(Some(GatingRule {
            interim_fraction: 1.0,
            prior_mean: 0.0,
            prior_sd: 1.0,
            threshold: 1.0,
        }));
        let run = simulate(&sc, 5, 3, Execution::Sequential).unwrap();
        for rep in run.replicates.iter().map(|r| r.as_ref().unwrap()) {
            assert!(!rep.part_b_activated);
            assert!(rep.rows[0].is_estimable());
            assert!(rep.rows[2..].iter().all(|r| !r.is_estimable()));
        }
        assert_eq!(run.summary.part_b_activation_rate, 0.0);
        assert_eq!(run.summary.estimand(EstimandName::Theta8).n_estimable, 0);
    }

    #[test]
    fn replicate_errors_are_counted() {
        let mut sc = scenario(None);
        sc.design.n_eligible = 0;
        sc.design.n_broader = 0;
        let s = run_replicates(&sc, 4, 1).unwrap();
        assert_eq!(s.n_errors, 4);
        assert_eq!(s.error_rate, 1.0);
        assert!(s.errors[0].contains("no observations"));
    }

    #[test]
    fn zero_reps_is_a_config_error() {
        assert!(matches!(run_replicates(&scenario(None), 0, 1), Err(Error::Config { .. })));
    }

    #[test]
    fn replicate_csv_layout() {
        let sc = scenario(None);
        let run = simulate(&sc, 2, 1, Execution::Sequential).unwrap();
        let mut buf = Vec::new();
        write_replicates_csv(&run, 0.05, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replicate,estimand,estimate,se,covered,rejected");
        assert_eq!(lines.len(), 1 + 2 * 9);
        assert!(lines[1].starts_with("0,theta1,"));
    }
}
