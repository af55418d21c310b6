//! Interim gating of Part B on accumulating Part A evidence.
//!
//! At the interim the Part A treatment effect is estimated from the first
//! `interim_fraction` of Part A patients. A normal prior on θ₁ is updated with
//! a normal likelihood centred at the estimate, and Part B starts iff
//! `Pr(θ₁ > 0 | interim data) ≥ threshold`.

use serde::{Deserialize, Serialize};

use crate::cell::{Cell, Conditions, Eligibility, Treatment};
use crate::design::{Part, TrialDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatingRule {
    /// Fraction of Part A patients (in enrollment order) observed at the
    /// interim, in (0, 1].
    pub interim_fraction: f64,
    #[serde(default)]
    pub prior_mean: f64,
    pub prior_sd: f64,
    /// Posterior probability bound in [0, 1]; 0 always activates.
    pub threshold: f64,
}

impl GatingRule {
    /// `(field, message)` per violated invariant.
    pub fn validate(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.interim_fraction > 0.0 && self.interim_fraction <= 1.0) {
            out.push((
                "part_b_gate.interim_fraction".into(),
                format!("must lie in (0, 1], got {}", self.interim_fraction),
            ));
        }
        if !self.prior_mean.is_finite() {
            out.push(("part_b_gate.prior_mean".into(), "must be finite".into()));
        }
        if !(self.prior_sd > 0.0 && self.prior_sd.is_finite()) {
            out.push((
                "part_b_gate.prior_sd".into(),
                format!("must be positive, got {}", self.prior_sd),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            out.push((
                "part_b_gate.threshold".into(),
                format!("must lie in [0, 1], got {}", self.threshold),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    /// Zero for a point-mass posterior.
    pub sd: f64,
    pub prob_positive: f64,
}

/// Conjugate normal-normal update of `N(prior_mean, prior_sd²)` with a
/// likelihood `N(estimate, se²)`. `se = 0` gives a point mass at `estimate`.
pub fn posterior(prior_mean: f64, prior_sd: f64, estimate: f64, se: f64) -> Result<Posterior> {
    if !(prior_sd > 0.0 && prior_sd.is_finite()) {
        return Err(Error::config("prior_sd", format!("must be positive, got {prior_sd}")));
    }
    if !(se >= 0.0) || !estimate.is_finite() {
        return Err(Error::Estimation(format!("invalid interim estimate {estimate} with SE {se}")));
    }
    if se == 0.0 {
        return Ok(Posterior {
            mean: estimate,
            sd: 0.0,
            prob_positive: if estimate > 0.0 { 1.0 } else { 0.0 },
        });
    }
    let prior_precision = 1.0 / (prior_sd * prior_sd);
    let data_precision = 1.0 / (se * se);
    let precision = prior_precision + data_precision;
    let mean = (prior_mean * prior_precision + estimate * data_precision) / precision;
    let sd = precision.sqrt().recip();
    Ok(Posterior {
        mean,
        sd,
        prob_positive: prob_positive(mean, sd),
    })
}

fn prob_positive(mean: f64, sd: f64) -> f64 {
    // Pr(N(mean, sd²) > 0) = Φ(mean / sd). statrs' erf loses about five
    // digits here, so go through libm's erfc.
    0.5 * libm::erfc(-(mean / sd) / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub activate_part_b: bool,
    pub posterior: Posterior,
    /// Interim θ₁ estimate and SE, when the interim data support one.
    pub interim_estimate: Option<f64>,
    pub interim_se: Option<f64>,
    pub interim_n: usize,
}

/// Interim Part A estimate of θ₁ with its pooled-variance SE. `None` when an
/// arm is empty or there is no residual degree of freedom.
pub fn interim_theta1(data: &TrialDataset) -> Result<Option<(f64, f64)>> {
    let treated = Cell::new(Eligibility::Eligible, Conditions::Rct, Treatment::Experimental);
    let control = Cell::new(Eligibility::Eligible, Conditions::Rct, Treatment::Control);
    let mut arms: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for p in data.patients().iter().filter(|p| p.part == Part::A) {
        let y = p
            .outcome
            .ok_or_else(|| Error::data(format!("patient {} has no outcome at the interim", p.id)))?;
        let cell = p.cell();
        if cell == treated {
            arms[0].push(y);
        } else if cell == control {
            arms[1].push(y);
        }
    }
    let (n1, n0) = (arms[0].len(), arms[1].len());
    if n1 == 0 || n0 == 0 || n1 + n0 < 3 {
        return Ok(None);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m1, m0) = (mean(&arms[0]), mean(&arms[1]));
    let ss = |v: &[f64], m: f64| v.iter().map(|y| (y - m) * (y - m)).sum::<f64>();
    let s2 = (ss(&arms[0], m1) + ss(&arms[1], m0)) / (n1 + n0 - 2) as f64;
    let se = (s2 * (1.0 / n1 as f64 + 1.0 / n0 as f64)).sqrt();
    Ok(Some((m1 - m0, se)))
}

/// Evaluate `rule` on interim Part A data.
pub fn apply_gate(interim: &TrialDataset, rule: &GatingRule) -> Result<GateDecision> {
    if let Some((field, message)) = rule.validate().into_iter().next() {
        return Err(Error::config(field, message));
    }
    let est = interim_theta1(interim)?;
    let posterior = match est {
        Some((theta, se)) => posterior(rule.prior_mean, rule.prior_sd, theta, se)?,
        None => Posterior {
            mean: rule.prior_mean,
            sd: rule.prior_sd,
            prob_positive: prob_positive(rule.prior_mean, rule.prior_sd),
        },
    };
    Ok(GateDecision {
        activate_part_b: posterior.prob_positive >= rule.threshold,
        posterior,
        interim_estimate: est.map(|e| e.0),
        interim_se: est.map(|e| e.1),
        interim_n: interim.patients().iter().filter(|p| p.part == Part::A).count(),
    })
}

/// The first `ceil(fraction · n_A)` Part A patients by id.
pub fn interim_subset(data: &TrialDataset, fraction: f64) -> TrialDataset {
    let n_a = data.patients().iter().filter(|p| p.part == Part::A).count();
    let take = ((fraction * n_a as f64).ceil() as usize).min(n_a);
    let mut ids: Vec<u64> = data
        .patients()
        .iter()
        .filter(|p| p.part == Part::A)
        .map(|p| p.id)
        .collect();
    ids.sort_unstable();
    let cutoff = ids.get(take.wrapping_sub(1)).copied();
    data.filtered(|p| p.part == Part::A && take > 0 && Some(p.id) <= cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::PatientRecord;

    fn part_a(outcomes: &[(Treatment, f64)]) -> TrialDataset {
        let patients = outcomes
            .iter()
            .enumerate()
            .map(|(i, &(t, y))| PatientRecord {
                id: i as u64 + 1,
                eligibility: Eligibility::Eligible,
                part: Part::A,
                conditions: Conditions::Rct,
                treatment: t,
                covariates: vec![],
                outcome: Some(y),
                ice_occurred: false,
            })
            .collect();
        TrialDataset::new(patients, None).unwrap()
    }

    fn rule(threshold: f64) -> GatingRule {
        GatingRule {
            interim_fraction: 0.5,
            prior_mean: 0.0,
            prior_sd: 1.0,
            threshold,
        }
    }

    #[test]
    fn no_data_returns_prior() {
        let empty = TrialDataset::new(vec![], None).unwrap();
        let d = apply_gate(&empty, &rule(0.6)).unwrap();
        assert_eq!(d.posterior.prob_positive, 0.5);
        assert_eq!(d.posterior.mean, 0.0);
        assert_eq!(d.posterior.sd, 1.0);
        assert!(!d.activate_part_b);
        assert!(apply_gate(&empty, &rule(0.5)).unwrap().activate_part_b);
    }

    #[test]
    fn precise_positive_estimate() {
        let p = posterior(0.0, 1e6, 10.0, 0.01).unwrap();
        assert!(p.prob_positive > 1.0 - 1e-12);
    }

    #[test]
    fn worked_conjugate_case() {
        // precision 1 + 4 = 5, mean = (0·1 + 0.5·4) / 5 = 0.4, sd = sqrt(1/5)
        let p = posterior(0.0, 1.0, 0.5, 0.5).unwrap();
        assert!((p.mean - 0.4).abs() < 1e-15);
        assert!((p.sd - 0.2f64.sqrt()).abs() < 1e-15);
        // Φ(0.4 / sqrt(0.2)) to 30 digits: 0.814453315238651213104934948133
        assert!((p.prob_positive - 0.814_453_315_238_651_2).abs() < 1e-15, "{}", p.prob_positive);
    }

    #[test]
    fn zero_variance_interim_is_point_mass() {
        let d = part_a(&[
            (Treatment::Experimental, 3.0),
            (Treatment::Experimental, 3.0),
            (Treatment::Control, 3.0),
            (Treatment::Control, 3.0),
        ]);
        let g = apply_gate(&d, &rule(0.5)).unwrap();
        assert_eq!(g.interim_se, Some(0.0));
        assert_eq!(g.posterior.prob_positive, 0.0);
        assert!(!g.activate_part_b);

        let d = part_a(&[
            (Treatment::Experimental, 4.0),
            (Treatment::Experimental, 4.0),
            (Treatment::Control, 3.0),
            (Treatment::Control, 3.0),
        ]);
        assert_eq!(apply_gate(&d, &rule(0.99)).unwrap().posterior.prob_positive, 1.0);
    }

    #[test]
    fn interim_estimate_matches_hand_computation() {
        let d = part_a(&[
            (Treatment::Experimental, 1.0),
            (Treatment::Experimental, 3.0),
            (Treatment::Control, 0.0),
            (Treatment::Control, 1.0),
            (Treatment::Control, 2.0),
        ]);
        let (est, se) = interim_theta1(&d).unwrap().unwrap();
        assert!((est - 1.0).abs() < 1e-15);
        // SS = 2 + 2, df = 3
        assert!((se - (4.0_f64 / 3.0 * (0.5 + 1.0 / 3.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn interim_subset_takes_leading_ids() {
        let d = part_a(&[(Treatment::Control, 0.0); 10]);
        let s = interim_subset(&d, 0.25);
        let ids: Vec<u64> = s.patients().iter().map(|p| p.id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(interim_subset(&d, 1.0).len(), 10);
    }

    #[test]
    fn invalid_rule_is_rejected() {
        let empty = TrialDataset::new(vec![], None).unwrap();
        let bad = GatingRule { prior_sd: 0.0, ..rule(0.5) };
        assert!(matches!(apply_gate(&empty, &bad), Err(Error::Config { .. })));
        assert_eq!(GatingRule { interim_fraction: 0.0, threshold: 1.5, ..rule(0.5) }.validate().len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn probability_is_monotone_in_estimate(
                prior_mean in -2.0f64..2.0,
                prior_sd in 0.1f64..5.0,
                se in 0.01f64..3.0,
                start in -5.0f64..5.0,
            ) {
                let mut last = 0.0;
                for k in 0..50 {
                    let est = start + 0.2 * k as f64;
                    let p = posterior(prior_mean, prior_sd, est, se).unwrap().prob_positive;
                    prop_assert!(p >= last);
                    last = p;
                }
            }
        }
    }
}
