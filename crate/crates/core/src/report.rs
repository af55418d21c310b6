//! Plain-text renderings of reports.

use std::fmt::Write;

use crate::design::{Diagnostic, Severity};
use crate::estimand::EstimandName;
use crate::inference::EstimateReport;
use crate::montecarlo::SimulationSummary;
use crate::outcome::TrueEstimands;

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

fn pval(v: Option<f64>) -> String {
    match v {
        Some(p) if p < 1e-4 => format!("{p:.1e}"),
        Some(p) => format!("{p:.4}"),
        None => "-".into(),
    }
}

pub fn render_estimate(report: &EstimateReport) -> String {
    let mut s = String::new();
    let level = 100.0 * (1.0 - report.alpha);
    let _ = writeln!(
        s,
        "n = {} (P=1: {}, P=0: {})  df = {}  variance = {}  covariates = {}",
        report.n,
        report.n_rct,
        report.n_crw,
        report.df,
        report.variance.as_str(),
        if report.adjust_covariates { "adjusted" } else { "unadjusted" }
    );
    let _ = writeln!(s, "residual variance = {}", num(report.residual_variance));
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<13} {:>10} {:>9} {:>10} {:>10} {:>9}",
        "estimand", "estimate", "se", "ci_low", "ci_high", "p_value"
    );
    for row in &report.estimates {
        match &row.inestimable_reason {
            Some(reason) => {
                let _ = writeln!(s, "{:<13} inestimable: {reason}", row.estimand.as_str());
            }
            None => {
                let _ = writeln!(
                    s,
                    "{:<13} {:>10} {:>9} {:>10} {:>10} {:>9}",
                    row.estimand.as_str(),
                    num(row.estimate),
                    num(row.se),
                    num(row.ci_low),
                    num(row.ci_high),
                    pval(row.p_value)
                );
            }
        }
    }
    let _ = writeln!(s, "(intervals at {level:.1}%)");
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:>7} {:>10} {:>10}", "cell", "count", "mean", "fitted");
    for c in &report.cells {
        let _ = writeln!(s, "{:<10} {:>7} {:>10} {:>10}", c.label, c.count, num(c.mean), num(c.fitted_mean));
    }
    if !report.resolved_weights.is_empty() {
        let _ = writeln!(s);
        for (name, w) in &report.resolved_weights {
            let _ = writeln!(s, "weights {:<13} w1 = {:.4}  w2 = {:.4}", name.as_str(), w.w1, w.w2);
        }
    }
    for n in &report.notices {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

pub fn render_summary(summary: &SimulationSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "replicates = {}  master seed = {}  errors = {}  Part B activation = {:.4}",
        summary.n_reps, summary.master_seed, summary.n_errors, summary.part_b_activation_rate
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<13} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
        "estimand", "truth", "mc_mean", "bias", "mc_se", "emp_se", "model_se", "coverage", "reject"
    );
    for e in &summary.estimands {
        let _ = writeln!(
            s,
            "{:<13} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
            e.estimand.as_str(),
            num(e.truth),
            num(e.mc_mean),
            num(e.bias),
            num(e.mc_se),
            num(e.empirical_se),
            num(e.mean_model_se),
            num(e.coverage),
            num(e.rejection_rate)
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:>12}", "cell", "mean count");
    for c in &summary.mean_cell_counts {
        let _ = writeln!(s, "{:<10} {:>12.2}", c.label, c.mean_count);
    }
    for e in &summary.errors {
        let _ = writeln!(s, "error: {e}");
    }
    s
}

pub fn render_truth(truth: &TrueEstimands) -> String {
    let mut s = String::new();
    for name in EstimandName::ALL {
        let _ = writeln!(s, "{:<13} {:>12.6}  {}", name.as_str(), truth.get(name), name.describe());
    }
    let w = &truth.weights_used;
    let _ = writeln!(s);
    for (label, pair) in [("theta1_tilde", w.theta1_tilde), ("theta2", w.theta2), ("theta8", w.theta8)] {
        let _ = writeln!(s, "weights {label:<13} w1 = {:.4}  w2 = {:.4}", pair.w1, pair.w2);
    }
    s
}

pub fn render_diagnostics(diagnostics: &[Diagnostic]) -> String {
    let mut s = String::new();
    for d in diagnostics {
        let level = match d.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &d.field {
            Some(f) => {
                let _ = writeln!(s, "{level}: {f}: {}", d.message);
            }
            None => {
                let _ = writeln!(s, "{level}: {}", d.message);
            }
        }
    }
    s
}
