//! Saturated cell-means least squares and contrast inference.
//!
//! Each patient contributes one row: the indicator of its (P, 1(x ∈ C), T)
//! cell among the eight saturated cell columns, optionally followed by
//! covariates. Covariates are centred within eligibility class before the
//! fit, so an adjusted cell coefficient is the cell mean at its class's
//! average covariate profile and class contrasts keep their marginal meaning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cell::{Cell, CellCounts, CellValues, Conditions, Eligibility, N_CELLS};
use crate::dataset;
use crate::design::TrialDataset;
use crate::error::{Error, Result};
use crate::estimand::{build_contrast, EstimandName, EstimandSet, WeightScheme, Weights};
use crate::linalg::{Cholesky, SquareMatrix};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceModel {
    /// One residual variance pooled over all cells.
    #[default]
    Pooled,
    /// A residual variance per cell.
    CellWise,
}

impl VarianceModel {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceModel::Pooled => "pooled",
            VarianceModel::CellWise => "cell-wise",
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub weights: WeightScheme,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weight_overrides: BTreeMap<EstimandName, WeightScheme>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub adjust_covariates: bool,
    #[serde(default)]
    pub variance: VarianceModel,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            weights: WeightScheme::Equal,
            weight_overrides: BTreeMap::new(),
            alpha: 0.05,
            adjust_covariates: false,
            variance: VarianceModel::Pooled,
        }
    }
}

impl AnalysisConfig {
    pub fn estimand_set(&self) -> EstimandSet {
        EstimandSet {
            weights: self.weights,
            overrides: self.weight_overrides.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        self.estimand_set().validate()
    }
}

/// The regression design: one cell per row plus optional covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrixBundle {
    pub ids: Vec<u64>,
    pub cells: Vec<Cell>,
    /// `n × k`, empty rows when covariates are not adjusted for.
    pub covariates: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

impl DesignMatrixBundle {
    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.first().map_or(0, Vec::len)
    }

    /// Rows under RCT conditions (`z1 = 1`).
    pub fn n_rct(&self) -> usize {
        self.cells.iter().filter(|c| c.conditions == Conditions::Rct).count()
    }

    pub fn n_crw(&self) -> usize {
        self.n() - self.n_rct()
    }

    /// `(z1, z2, z3) = (P, 1(x ∈ C), T)` for row `i`.
    pub fn z(&self, i: usize) -> [u8; 3] {
        let c = self.cells[i];
        [c.conditions.indicator(), c.eligibility.indicator(), c.treatment.indicator()]
    }

    /// The eight cell-indicator entries of row `i`.
    pub fn indicators(&self, i: usize) -> [f64; N_CELLS] {
        let mut row = [0.0; N_CELLS];
        row[self.cells[i].index()] = 1.0;
        row
    }

    /// Full dense row: indicators followed by covariates.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut row = self.indicators(i).to_vec();
        row.extend_from_slice(&self.covariates[i]);
        row
    }
}

pub fn build_design_matrix(data: &TrialDataset, adjust_covariates: bool) -> Result<DesignMatrixBundle> {
    let n = data.len();
    let mut bundle = DesignMatrixBundle {
        ids: Vec::with_capacity(n),
        cells: Vec::with_capacity(n),
        covariates: Vec::with_capacity(n),
        response: Vec::with_capacity(n),
    };
    for p in data.patients() {
        let y = p
            .outcome
            .ok_or_else(|| Error::data(format!("patient {} has no outcome", p.id)))?;
        bundle.ids.push(p.id);
        bundle.cells.push(p.cell());
        bundle
            .covariates
            .push(if adjust_covariates { p.covariates.clone() } else { Vec::new() });
        bundle.response.push(y);
    }
    Ok(bundle)
}

/// Covariance of the eight fitted cell means. Entries for empty cells are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCovariance {
    pub matrix: [[f64; N_CELLS]; N_CELLS],
    /// Cells whose variance could be estimated.
    pub available: [bool; N_CELLS],
}

impl CellCovariance {
    /// `sqrt(cᵀ Σ c)`, or `None` when a supporting cell lacks a variance.
    pub fn contrast_se(&self, c: &CellValues) -> Option<f64> {
        if c.iter().zip(&self.available).any(|(v, ok)| *v != 0.0 && !ok) {
            return None;
        }
        let mut q = 0.0;
        for i in 0..N_CELLS {
            if c[i] == 0.0 {
                continue;
            }
            for j in 0..N_CELLS {
                q += c[i] * self.matrix[i][j] * c[j];
            }
        }
        Some(q.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedFit {
    pub counts: CellCounts,
    pub sample_means: [Option<f64>; N_CELLS],
    /// Least-squares cell means (covariate-adjusted when slopes are fitted).
    pub cell_means: [Option<f64>; N_CELLS],
    pub slopes: Vec<f64>,
    /// `None` when there are no residual degrees of freedom.
    pub covariance: Option<CellCovariance>,
    pub residual_variance: Option<f64>,
    pub df: u64,
    pub n: usize,
    pub n_rct: usize,
    pub n_crw: usize,
    pub variance: VarianceModel,
}

impl SaturatedFit {
    pub fn counts_f64(&self) -> CellValues {
        self.counts.map(|c| c as f64)
    }

    pub fn adjusted(&self) -> bool {
        !self.slopes.is_empty()
    }
}

pub fn fit_saturated(bundle: &DesignMatrixBundle, variance: VarianceModel) -> Result<SaturatedFit> {
    let n = bundle.n();
    if n == 0 {
        return Err(Error::data("no observations"));
    }
    let k = bundle.n_covariates();
    if bundle.covariates.iter().any(|r| r.len() != k) {
        return Err(Error::data("rows have differing covariate counts"));
    }

    let mut counts = [0u64; N_CELLS];
    let mut sums = [0.0; N_CELLS];
    for (c, y) in bundle.cells.iter().zip(&bundle.response) {
        counts[c.index()] += 1;
        sums[c.index()] += y;
    }
    let mut sample_means = [None; N_CELLS];
    for i in 0..N_CELLS {
        if counts[i] > 0 {
            sample_means[i] = Some(sums[i] / counts[i] as f64);
        }
    }
    let nonempty: Vec<usize> = (0..N_CELLS).filter(|i| counts[*i] > 0).collect();
    let m = nonempty.len();
    let p = m + k;
    let df = (n as u64).saturating_sub(p as u64);

    let mut cell_means = sample_means;
    let mut slopes = Vec::new();
    let mut residuals = Vec::with_capacity(n);
    // (XᵀX)⁻¹ over [nonempty cells, centred covariates], for k > 0
    let mut xtx_inv: Option<SquareMatrix> = None;
    let mut centred: Vec<Vec<f64>> = Vec::new();
    let mut col_of = [usize::MAX; N_CELLS];
    for (col, &cell) in nonempty.iter().enumerate() {
        col_of[cell] = col;
    }

    if k == 0 {
        for (c, y) in bundle.cells.iter().zip(&bundle.response) {
            residuals.push(y - sample_means[c.index()].expect("nonempty"));
        }
    } else {
        let mut class_sum = [vec![0.0; k], vec![0.0; k]];
        let mut class_n = [0usize; 2];
        let class = |c: &Cell| match c.eligibility {
            Eligibility::Eligible => 0,
            Eligibility::Broader => 1,
        };
        for (c, x) in bundle.cells.iter().zip(&bundle.covariates) {
            let g = class(c);
            class_n[g] += 1;
            for (s, v) in class_sum[g].iter_mut().zip(x) {
                *s += v;
            }
        }
        let class_mean: Vec<Vec<f64>> = (0..2)
            .map(|g| class_sum[g].iter().map(|s| s / class_n[g].max(1) as f64).collect())
            .collect();
        centred = bundle
            .cells
            .iter()
            .zip(&bundle.covariates)
            .map(|(c, x)| x.iter().zip(&class_mean[class(c)]).map(|(v, mu)| v - mu).collect())
            .collect();

        let mut xtx = SquareMatrix::zeros(p);
        let mut xty = vec![0.0; p];
        let mut row = vec![0.0; p];
        for i in 0..n {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[col_of[bundle.cells[i].index()]] = 1.0;
            row[m..].copy_from_slice(&centred[i]);
            xtx.add_outer(&row, 1.0);
            for (t, v) in xty.iter_mut().zip(&row) {
                *t += v * bundle.response[i];
            }
        }
        let chol = Cholesky::factor(&xtx, RANK_TOL).map_err(|cols| {
            let names: Vec<String> = cols
                .iter()
                .map(|&c| if c >= m { format!("x{}", c - m + 1) } else { Cell::from_index(nonempty[c]).to_string() })
                .collect();
            Error::Estimation(format!(
                "design is rank deficient: {} linearly dependent on preceding columns",
                names.join(", ")
            ))
        })?;
        let beta = chol.solve(&xty);
        for (col, &cell) in nonempty.iter().enumerate() {
            cell_means[cell] = Some(beta[col]);
        }
        slopes = beta[m..].to_vec();
        for i in 0..n {
            let fitted = beta[col_of[bundle.cells[i].index()]]
                + centred[i].iter().zip(&slopes).map(|(x, b)| x * b).sum::<f64>();
            residuals.push(bundle.response[i] - fitted);
        }
        xtx_inv = Some(chol.inverse());
    }

    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let residual_variance = (df > 0).then(|| rss / df as f64);

    let covariance = residual_variance.map(|s2| {
        let mut matrix = [[0.0; N_CELLS]; N_CELLS];
        let mut available = [false; N_CELLS];
        // per-cell residual variances for the cell-wise model
        let mut cell_rss = [0.0; N_CELLS];
        for (c, e) in bundle.cells.iter().zip(&residuals) {
            cell_rss[c.index()] += e * e;
        }
        let cell_var: [Option<f64>; N_CELLS] =
            std::array::from_fn(|i| (counts[i] >= 2).then(|| cell_rss[i] / (counts[i] - 1) as f64));

        match (&xtx_inv, variance) {
            (None, VarianceModel::Pooled) => {
                for &i in &nonempty {
                    matrix[i][i] = s2 / counts[i] as f64;
                    available[i] = true;
                }
            }
            (None, VarianceModel::CellWise) => {
                for &i in &nonempty {
                    if let Some(v) = cell_var[i] {
                        matrix[i][i] = v / counts[i] as f64;
                        available[i] = true;
                    }
                }
            }
            (Some(inv), model) => {
                let cov = match model {
                    VarianceModel::Pooled => Some(inv.scaled(s2)),
                    VarianceModel::CellWise => {
                        if nonempty.iter().all(|i| cell_var[*i].is_some()) {
                            let mut meat = SquareMatrix::zeros(p);
                            let mut row = vec![0.0; p];
                            for i in 0..n {
                                let cell = bundle.cells[i].index();
                                row.iter_mut().for_each(|v| *v = 0.0);
                                row[col_of[cell]] = 1.0;
                                row[m..].copy_from_slice(&centred[i]);
                                meat.add_outer(&row, cell_var[cell].expect("checked"));
                            }
                            Some(inv.mul(&meat).mul(inv))
                        } else {
                            None
                        }
                    }
                };
                if let Some(cov) = cov {
                    for &a in &nonempty {
                        available[a] = true;
                        for &b in &nonempty {
                            matrix[a][b] = cov.get(col_of[a], col_of[b]);
                        }
                    }
                }
            }
        }
        CellCovariance { matrix, available }
    });

    Ok(SaturatedFit {
        counts,
        sample_means,
        cell_means,
        slopes,
        covariance,
        residual_variance,
        df,
        n,
        n_rct: bundle.n_rct(),
        n_crw: bundle.n_crw(),
        variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimand: EstimandName,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// `estimate / se`.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub df: Option<u64>,
    pub inestimable_reason: Option<String>,
}

impl EstimateRow {
    fn inestimable(estimand: EstimandName, reason: String) -> Self {
        Self {
            estimand,
            estimate: None,
            se: None,
            ci_low: None,
            ci_high: None,
            statistic: None,
            p_value: None,
            df: None,
            inestimable_reason: Some(reason),
        }
    }

    pub fn is_estimable(&self) -> bool {
        self.estimate.is_some()
    }

    /// Two-sided rejection of `θ = 0` at `alpha`.
    pub fn rejects(&self, alpha: f64) -> Option<bool> {
        self.p_value.map(|p| p < alpha)
    }

    pub fn covers(&self, truth: f64) -> Option<bool> {
        Some(self.ci_low? <= truth && truth <= self.ci_high?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub label: String,
    pub count: u64,
    pub mean: Option<f64>,
    pub fitted_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub alpha: f64,
    pub variance: VarianceModel,
    pub adjust_covariates: bool,
    pub n: usize,
    pub n_rct: usize,
    pub n_crw: usize,
    pub df: u64,
    pub residual_variance: Option<f64>,
    pub weights: WeightScheme,
    /// Resolved weight pairs per weighted estimand.
    pub resolved_weights: BTreeMap<EstimandName, Weights>,
    pub slopes: Vec<f64>,
    pub cells: Vec<CellSummary>,
    pub estimates: Vec<EstimateRow>,
    pub notices: Vec<String>,
}

impl EstimateReport {
    pub fn row(&self, name: EstimandName) -> &EstimateRow {
        self.estimates
            .iter()
            .find(|r| r.estimand == name)
            .expect("every estimand has a row")
    }
}

pub fn estimate_estimands(fit: &SaturatedFit, set: &EstimandSet, alpha: f64) -> Result<EstimateReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    set.validate()?;
    let counts = fit.counts_f64();
    let t_dist = (fit.df > 0).then(|| StudentsT::new(0.0, 1.0, fit.df as f64).expect("df > 0"));
    let crit = t_dist.as_ref().map(|t| t.inverse_cdf(1.0 - alpha / 2.0));

    let mut resolved_weights = BTreeMap::new();
    let mut estimates = Vec::with_capacity(EstimandName::ALL.len());
    for name in EstimandName::ALL {
        let spec = match build_contrast(name, set.scheme_for(name), Some(&counts)) {
            Ok(s) => s,
            Err(e) => {
                estimates.push(EstimateRow::inestimable(name, e.to_string()));
                continue;
            }
        };
        if let Some(w) = spec.weights {
            resolved_weights.insert(name, w);
        }
        let empty: Vec<String> = spec
            .contrast
            .support()
            .filter(|c| fit.counts[c.index()] == 0)
            .map(|c| c.to_string())
            .collect();
        if !empty.is_empty() {
            estimates.push(EstimateRow::inestimable(name, format!("empty cell {}", empty.join(", "))));
            continue;
        }
        let coef = spec.contrast.coefficients();
        let estimate: f64 = coef
            .iter()
            .zip(&fit.cell_means)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, m)| c * m.expect("nonempty cell"))
            .sum();
        let se = fit.covariance.as_ref().and_then(|cov| cov.contrast_se(coef));
        let mut row = EstimateRow {
            estimand: name,
            estimate: Some(estimate),
            se,
            ci_low: None,
            ci_high: None,
            statistic: None,
            p_value: None,
            df: (fit.df > 0).then_some(fit.df),
            inestimable_reason: None,
        };
        if let (Some(se), Some(crit), Some(t)) = (se, crit, t_dist.as_ref()) {
            row.ci_low = Some(estimate - crit * se);
            row.ci_high = Some(estimate + crit * se);
            if se > 0.0 {
                let stat = estimate / se;
                row.statistic = Some(stat);
                row.p_value = Some((2.0 * t.sf(stat.abs())).min(1.0));
            } else {
                row.p_value = Some(if estimate == 0.0 { 1.0 } else { 0.0 });
            }
        }
        estimates.push(row);
    }

    let mut notices = Vec::new();
    if fit.covariance.is_none() {
        notices.push("no residual degrees of freedom; standard errors unavailable".to_string());
    }
    if matches!(set.weights, WeightScheme::SampleSize) || set.overrides.values().any(|w| matches!(w, WeightScheme::SampleSize)) {
        notices.push(
            "sample-size weights use class proportions within each estimand's stratum \
             (P=1 for theta1_tilde, P=0 for theta8, treated patients for theta2)"
                .to_string(),
        );
    }
    if !set.overrides.is_empty() {
        notices.push("per-estimand weight overrides in effect; estimator identities are not guaranteed".to_string());
    }

    let cells = Cell::ALL
        .iter()
        .map(|c| CellSummary {
            cell: c.key(),
            label: c.to_string(),
            count: fit.counts[c.index()],
            mean: fit.sample_means[c.index()],
            fitted_mean: fit.cell_means[c.index()],
        })
        .collect();

    Ok(EstimateReport {
        alpha,
        variance: fit.variance,
        adjust_covariates: fit.adjusted(),
        n: fit.n,
        n_rct: fit.n_rct,
        n_crw: fit.n_crw,
        df: fit.df,
        residual_variance: fit.residual_variance,
        weights: set.weights,
        resolved_weights,
        slopes: fit.slopes.clone(),
        cells,
        estimates,
        notices,
    })
}

/// Build, fit and estimate in one step.
pub fn estimate_dataset(data: &TrialDataset, analysis: &AnalysisConfig) -> Result<EstimateReport> {
    analysis.validate()?;
    if data.is_empty() {
        return Err(Error::data("no observations"));
    }
    let bundle = build_design_matrix(data, analysis.adjust_covariates)?;
    let fit = fit_saturated(&bundle, analysis.variance)?;
    let mut report = estimate_estimands(&fit, &analysis.estimand_set(), analysis.alpha)?;
    if analysis.adjust_covariates && data.n_covariates() == 0 {
        report
            .notices
            .push("covariate adjustment requested but the dataset has no covariates".into());
        report.adjust_covariates = false;
    }
    Ok(report)
}

pub fn estimate_from_csv(path: &Path, analysis: &AnalysisConfig) -> Result<EstimateReport> {
    let data = dataset::read_csv_file(path)?;
    estimate_dataset(&data, analysis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::Treatment;
    use crate::design::{ablate_to_plain_rct, randomize_cohort, DesignSpec, Part, PatientRecord};
    use crate::outcome::{generate_outcomes, OutcomeModelSpec};

    fn patient(id: u64, cell: Cell, y: f64, x: Vec<f64>) -> PatientRecord {
        let part = if cell.eligibility == Eligibility::Eligible && cell.conditions == Conditions::Rct {
            Part::A
        } else {
            Part::B
        };
        PatientRecord {
            id,
            eligibility: cell.eligibility,
            part,
            conditions: cell.conditions,
            treatment: cell.treatment,
            covariates: x,
            outcome: Some(y),
            ice_occurred: false,
        }
    }

    fn one_per_cell(y: impl Fn(usize) -> f64) -> TrialDataset {
        let ps = Cell::ALL
            .iter()
            .enumerate()
            .map(|(i, c)| patient(i as u64 + 1, *c, y(i), vec![]))
            .collect();
        TrialDataset::new(ps, None).unwrap()
    }

    fn simulated(seed: u64, n_eligible: u64, n_broader: u64, k: usize) -> TrialDataset {
        let spec = DesignSpec {
            n_eligible,
            n_broader,
            seed,
            ..DesignSpec::default()
        };
        let model = OutcomeModelSpec {
            covariate_slopes: vec![0.7; k],
            ..OutcomeModelSpec::from_means([1.0, 0.2, 0.4, 0.1, 2.0, 1.1, -0.5, 0.3], 1.0)
        };
        generate_outcomes(&randomize_cohort(&spec).unwrap(), &model, seed).unwrap()
    }

    #[test]
    fn single_patient_row() {
        let c = Cell::new(Eligibility::Eligible, Conditions::Rct, Treatment::Experimental);
        let d = TrialDataset::new(vec![patient(1, c, 2.0, vec![])], None).unwrap();
        let b = build_design_matrix(&d, false).unwrap();
        assert_eq!(b.n(), 1);
        assert_eq!(b.indicators(0), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.z(0), [1, 1, 1]);
    }

    #[test]
    fn one_per_cell_is_a_permutation_block() {
        let d = one_per_cell(|i| i as f64);
        let b = build_design_matrix(&d, false).unwrap();
        for i in 0..8 {
            let row = b.indicators(i);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row[i], 1.0);
        }
        let fit = fit_saturated(&b, VarianceModel::Pooled).unwrap();
        assert_eq!(fit.df, 0);
        assert!(fit.covariance.is_none());
        let r = estimate_estimands(&fit, &EstimandSet::default(), 0.05).unwrap();
        // points without SEs
        assert_eq!(r.row(EstimandName::Theta1).estimate, Some(-1.0));
        assert_eq!(r.row(EstimandName::Theta1).se, None);
    }

    #[test]
    fn part_a_rows_never_hit_eligible_crw_columns() {
        let d = simulated(3, 200, 100, 0);
        let b = build_design_matrix(&d, false).unwrap();
        let col = Cell::new(Eligibility::Eligible, Conditions::Crw, Treatment::Experimental).index();
        for (i, p) in d.patients().iter().enumerate() {
            if p.part == Part::A {
                assert_eq!(b.indicators(i)[col], 0.0);
            }
        }
        assert_eq!(b.n(), b.n_rct() + b.n_crw());
    }

    #[test]
    fn missing_outcome_names_patient() {
        let mut p = patient(42, Cell::ALL[0], 0.0, vec![]);
        p.outcome = None;
        let d = TrialDataset::new(vec![p], None).unwrap();
        let err = build_design_matrix(&d, false).unwrap_err();
        assert!(err.to_string().contains("42"));
    }

    #[test]
    fn constant_outcomes() {
        let ps: Vec<PatientRecord> = (0..40)
            .map(|i| patient(i + 1, Cell::ALL[(i % 8) as usize], 7.0, vec![]))
            .collect();
        let d = TrialDataset::new(ps, None).unwrap();
        let fit = fit_saturated(&build_design_matrix(&d, false).unwrap(), VarianceModel::Pooled).unwrap();
        assert!(fit.cell_means.iter().all(|m| *m == Some(7.0)));
        assert_eq!(fit.residual_variance, Some(0.0));
        let r = estimate_estimands(&fit, &EstimandSet::default(), 0.05).unwrap();
        for row in &r.estimates {
            assert_eq!(row.estimate, Some(0.0));
            assert_eq!(row.se, Some(0.0));
            assert_eq!((row.ci_low, row.ci_high), (Some(0.0), Some(0.0)));
        }
    }

    #[test]
    fn fitted_means_match_group_averages() {
        let d = simulated(5, 300, 200, 0);
        let fit = fit_saturated(&build_design_matrix(&d, false).unwrap(), VarianceModel::Pooled).unwrap();
        for cell in Cell::ALL {
            let ys: Vec<f64> = d
                .patients()
                .iter()
                .filter(|p| p.cell() == cell)
                .map(|p| p.outcome.unwrap())
                .collect();
            let avg = ys.iter().sum::<f64>() / ys.len() as f64;
            let got = fit.cell_means[cell.index()].unwrap();
            assert!((got - avg).abs() <= 1e-10 * avg.abs().max(1.0));
        }
    }

    #[test]
    fn covariate_equal_to_treatment_is_rank_deficient() {
        let d = simulated(6, 100, 100, 0);
        let with_t: Vec<PatientRecord> = d
            .patients()
            .iter()
            .map(|p| PatientRecord {
                covariates: vec![f64::from(p.treatment.indicator())],
                ..p.clone()
            })
            .collect();
        let d = TrialDataset::new(with_t, None).unwrap();
        let err = fit_saturated(&build_design_matrix(&d, true).unwrap(), VarianceModel::Pooled).unwrap_err();
        assert!(matches!(err, Error::Estimation(_)));
        assert!(err.to_string().contains("x1"), "{err}");
    }

    #[test]
    fn covariate_adjustment_matches_dense_least_squares() {
        let d = simulated(8, 150, 150, 2);
        let b = build_design_matrix(&d, true).unwrap();
        let fit = fit_saturated(&b, VarianceModel::Pooled).unwrap();
        assert_eq!(fit.slopes.len(), 2);
        // Independent check: slopes from within-cell demeaned regression.
        let k = 2;
        let mut means_x = [[0.0; 2]; 8];
        let mut means_y = [0.0; 8];
        let counts = fit.counts;
        for i in 0..b.n() {
            let c = b.cells[i].index();
            for j in 0..k {
                means_x[c][j] += b.covariates[i][j] / counts[c] as f64;
            }
            means_y[c] += b.response[i] / counts[c] as f64;
        }
        let (mut w, mut r) = ([[0.0; 2]; 2], [0.0; 2]);
        for i in 0..b.n() {
            let c = b.cells[i].index();
            let dx = [b.covariates[i][0] - means_x[c][0], b.covariates[i][1] - means_x[c][1]];
            let dy = b.response[i] - means_y[c];
            for a in 0..2 {
                r[a] += dx[a] * dy;
                for bb in 0..2 {
                    w[a][bb] += dx[a] * dx[bb];
                }
            }
        }
        let det = w[0][0] * w[1][1] - w[0][1] * w[1][0];
        let g0 = (w[1][1] * r[0] - w[0][1] * r[1]) / det;
        let g1 = (w[0][0] * r[1] - w[1][0] * r[0]) / det;
        assert!((fit.slopes[0] - g0).abs() < 1e-10);
        assert!((fit.slopes[1] - g1).abs() < 1e-10);
        // treatment contrasts are the usual adjusted within-class differences
        let report = estimate_estimands(&fit, &EstimandSet::default(), 0.05).unwrap();
        let adj = |c: usize| means_y[c] - means_x[c][0] * g0 - means_x[c][1] * g1;
        let theta1 = report.row(EstimandName::Theta1).estimate.unwrap();
        assert!((theta1 - (adj(0) - adj(1))).abs() < 1e-10);
    }

    #[test]
    fn cell_wise_variance_without_covariates() {
        let d = simulated(9, 200, 200, 0);
        let fit = fit_saturated(&build_design_matrix(&d, false).unwrap(), VarianceModel::CellWise).unwrap();
        let cov = fit.covariance.as_ref().unwrap();
        for cell in Cell::ALL {
            let ys: Vec<f64> = d
                .patients()
                .iter()
                .filter(|p| p.cell() == cell)
                .map(|p| p.outcome.unwrap())
                .collect();
            let n = ys.len() as f64;
            let m = ys.iter().sum::<f64>() / n;
            let s2 = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0);
            let i = cell.index();
            assert!((cov.matrix[i][i] - s2 / n).abs() < 1e-12);
        }
        // the sandwich with covariates reduces to the same thing when slopes are zero-width
        let fit_x = fit_saturated(&build_design_matrix(&simulated(9, 200, 200, 1), true).unwrap(), VarianceModel::CellWise).unwrap();
        assert!(fit_x.covariance.is_some());
    }

    #[test]
    fn ablated_dataset_reports_theta1_only() {
        let spec = ablate_to_plain_rct(&DesignSpec {
            n_eligible: 200,
            n_broader: 100,
            seed: 2,
            ..DesignSpec::default()
        });
        let data = generate_outcomes(
            &randomize_cohort(&spec).unwrap(),
            &OutcomeModelSpec::from_means([1.0; 8], 1.0),
            2,
        )
        .unwrap();
        let r = estimate_dataset(&data, &AnalysisConfig::default()).unwrap();
        assert!(r.row(EstimandName::Theta1).is_estimable());
        for n in &EstimandName::ALL[2..] {
            let row = r.row(*n);
            assert!(!row.is_estimable());
            assert!(row.inestimable_reason.as_deref().unwrap().starts_with("empty cell"), "{n}");
        }
    }

    #[test]
    fn empty_dataset_has_no_observations() {
        let d = TrialDataset::new(vec![], None).unwrap();
        let err = estimate_dataset(&d, &AnalysisConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no observations"));
    }

    #[test]
    fn ci_half_width_is_critical_value_times_se() {
        let d = simulated(10, 100, 100, 0);
        let r = estimate_dataset(&d, &AnalysisConfig::default()).unwrap();
        let t = StudentsT::new(0.0, 1.0, r.df as f64).unwrap();
        let q = t.inverse_cdf(0.975);
        for row in r.estimates.iter().filter(|r| r.is_estimable()) {
            let (lo, hi, se, est) = (row.ci_low.unwrap(), row.ci_high.unwrap(), row.se.unwrap(), row.estimate.unwrap());
            assert!(lo <= est && est <= hi);
            assert!(((hi - lo) / 2.0 - q * se).abs() < 1e-12);
            assert_eq!(row.df, Some(r.df));
        }
        assert_eq!(r.df, 200 - 8);
    }

    #[test]
    fn bad_alpha_is_rejected() {
        let d = simulated(10, 20, 20, 0);
        let a = AnalysisConfig {
            alpha: 1.0,
            ..AnalysisConfig::default()
        };
        assert!(matches!(estimate_dataset(&d, &a), Err(Error::Config { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn location_shift_changes_no_estimate(seed in 0u64..1000, shift in -50.0f64..50.0) {
                let d = simulated(seed, 60, 60, 0);
                let shifted: Vec<PatientRecord> = d.patients().iter()
                    .map(|p| PatientRecord { outcome: p.outcome.map(|y| y + shift), ..p.clone() })
                    .collect();
                let d2 = TrialDataset::new(shifted, None).unwrap();
                let a = estimate_dataset(&d, &AnalysisConfig::default()).unwrap();
                let b = estimate_dataset(&d2, &AnalysisConfig::default()).unwrap();
                for (x, y) in a.estimates.iter().zip(&b.estimates) {
                    match (x.estimate, y.estimate) {
                        (Some(u), Some(v)) => {
                            prop_assert!((u - v).abs() < 1e-9);
                            prop_assert!((x.se.unwrap() - y.se.unwrap()).abs() < 1e-9);
                        }
                        (None, None) => {}
                        _ => prop_assert!(false),
                    }
                }
            }
        }
    }
}
