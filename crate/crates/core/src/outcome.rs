//! Data-generating model over the eight cells and closed-form true
//! estimand values.
//!
//! `Y = μ(cell) + βᵀx + ε`, `ε ~ N(0, σ²)`, with covariates `x` drawn
//! independently per component from a normal law whose means may differ by
//! eligibility class. An intercurrent event occurs with a per-cell
//! probability; under the composite strategy it shifts `Y` by `ice_effect`.

use serde::{Deserialize, Serialize};

use crate::cell::{Cell, CellValues, Conditions, Eligibility, Treatment, N_CELLS};
use crate::design::{PatientRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::estimand::{build_contrast, EstimandName, WeightScheme, Weights};
use crate::rng::{CounterRng, Purpose};

const DECISION_ICE: u32 = 0;
const DECISION_NOISE: u32 = 1;
const DECISION_COVARIATE_BASE: u32 = 16;

fn partial_table<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<CellTable, D::Error> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Partial {
        #[serde(default)]
        eligible_rct: ArmPair,
        #[serde(default)]
        eligible_crw: ArmPair,
        #[serde(default)]
        broader_rct: ArmPair,
        #[serde(default)]
        broader_crw: ArmPair,
    }
    let p = Partial::deserialize(d)?;
    Ok(CellTable {
        eligible_rct: p.eligible_rct,
        eligible_crw: p.eligible_crw,
        broader_rct: p.broader_rct,
        broader_crw: p.broader_crw,
    })
}

/// Experimental/control pair for one (eligibility, conditions) stratum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmPair {
    pub experimental: f64,
    pub control: f64,
}

/// A value per cell, laid out the way scenario files spell it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTable {
    pub eligible_rct: ArmPair,
    pub eligible_crw: ArmPair,
    pub broader_rct: ArmPair,
    pub broader_crw: ArmPair,
}

impl CellTable {
    pub fn values(&self) -> CellValues {
        let mut out = [0.0; N_CELLS];
        for cell in Cell::ALL {
            let pair = match (cell.eligibility, cell.conditions) {
                (Eligibility::Eligible, Conditions::Rct) => self.eligible_rct,
                (Eligibility::Eligible, Conditions::Crw) => self.eligible_crw,
                (Eligibility::Broader, Conditions::Rct) => self.broader_rct,
                (Eligibility::Broader, Conditions::Crw) => self.broader_crw,
            };
            out[cell.index()] = match cell.treatment {
                Treatment::Experimental => pair.experimental,
                Treatment::Control => pair.control,
            };
        }
        out
    }

    pub fn from_values(v: &CellValues) -> Self {
        let pair = |i: usize| ArmPair {
            experimental: v[i],
            control: v[i + 1],
        };
        Self {
            eligible_rct: pair(0),
            eligible_crw: pair(2),
            broader_rct: pair(4),
            broader_crw: pair(6),
        }
    }
}

/// Independent normal covariates. Empty vectors mean zero means and unit
/// standard deviations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateLaw {
    #[serde(default)]
    pub eligible_means: Vec<f64>,
    #[serde(default)]
    pub broader_means: Vec<f64>,
    #[serde(default)]
    pub sds: Vec<f64>,
}

impl CovariateLaw {
    fn component(v: &[f64], j: usize, default: f64) -> f64 {
        v.get(j).copied().unwrap_or(default)
    }

    pub fn mean(&self, eligibility: Eligibility, j: usize) -> f64 {
        match eligibility {
            Eligibility::Eligible => Self::component(&self.eligible_means, j, 0.0),
            Eligibility::Broader => Self::component(&self.broader_means, j, 0.0),
        }
    }

    pub fn sd(&self, j: usize) -> f64 {
        Self::component(&self.sds, j, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IceStrategy {
    /// The event is recorded; `Y` is generated and analysed regardless.
    #[default]
    TreatmentPolicy,
    /// The event shifts `Y` by `ice_effect`.
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModelSpec {
    pub cell_means: CellTable,
    #[serde(default)]
    pub covariate_slopes: Vec<f64>,
    #[serde(default)]
    pub covariate_law: CovariateLaw,
    pub noise_sd: f64,
    /// Cells left out of the table have probability zero.
    #[serde(default, deserialize_with = "partial_table")]
    pub ice_probability: CellTable,
    #[serde(default)]
    pub ice_effect: f64,
    #[serde(default)]
    pub ice_strategy: IceStrategy,
}

impl OutcomeModelSpec {
    /// A covariate-free model with the given cell means.
    pub fn from_means(means: CellValues, noise_sd: f64) -> Self {
        Self {
            cell_means: CellTable::from_values(&means),
            covariate_slopes: Vec::new(),
            covariate_law: CovariateLaw::default(),
            noise_sd,
            ice_probability: CellTable::default(),
            ice_effect: 0.0,
            ice_strategy: IceStrategy::TreatmentPolicy,
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_slopes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise_sd", format!("must be positive, got {}", self.noise_sd)));
        }
        if self.cell_means.values().iter().any(|m| !m.is_finite()) {
            return Err(Error::config("cell_means", "must be finite"));
        }
        for (cell, p) in Cell::ALL.iter().zip(self.ice_probability.values()) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(
                    format!("ice_probability.{}", cell.key()),
                    format!("must lie in [0, 1], got {p}"),
                ));
            }
        }
        if !self.ice_effect.is_finite() {
            return Err(Error::config("ice_effect", "must be finite"));
        }
        let k = self.n_covariates();
        if self.covariate_slopes.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("covariate_slopes", "must be finite"));
        }
        let law = &self.covariate_law;
        for (name, v) in [
            ("covariate_law.eligible_means", &law.eligible_means),
            ("covariate_law.broader_means", &law.broader_means),
            ("covariate_law.sds", &law.sds),
        ] {
            if !v.is_empty() && v.len() != k {
                return Err(Error::config(name, format!("has {} entries, expected {k} (one per slope)", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::config(name, "must be finite"));
            }
        }
        if law.sds.iter().any(|s| *s <= 0.0) {
            return Err(Error::config("covariate_law.sds", "must be positive"));
        }
        Ok(())
    }

    /// `E[Y | cell]`, including covariate and composite-ICE contributions.
    pub fn expected_cell_means(&self) -> CellValues {
        let mu = self.cell_means.values();
        let ice = self.ice_probability.values();
        let mut out = [0.0; N_CELLS];
        for cell in Cell::ALL {
            let i = cell.index();
            let covariate: f64 = self
                .covariate_slopes
                .iter()
                .enumerate()
                .map(|(j, b)| b * self.covariate_law.mean(cell.eligibility, j))
                .sum();
            let shift = match self.ice_strategy {
                IceStrategy::TreatmentPolicy => 0.0,
                IceStrategy::Composite => ice[i] * self.ice_effect,
            };
            out[i] = mu[i] + covariate + shift;
        }
        out
    }
}

/// Draw covariates, intercurrent events and outcomes for every patient.
/// A pure function of `(data, model, seed)`.
pub fn generate_outcomes(data: &TrialDataset, model: &OutcomeModelSpec, seed: u64) -> Result<TrialDataset> {
    if data.has_outcomes() {
        return Err(Error::State("dataset already has outcomes".into()));
    }
    model.validate()?;
    let rng = CounterRng::new(seed, Purpose::Outcome);
    let mu = model.cell_means.values();
    let ice_p = model.ice_probability.values();
    let k = model.n_covariates();
    let patients = data
        .patients()
        .iter()
        .map(|p| {
            let cell = p.cell();
            let covariates: Vec<f64> = (0..k)
                .map(|j| {
                    let z = rng.standard_normal(p.id, DECISION_COVARIATE_BASE + j as u32);
                    model.covariate_law.mean(cell.eligibility, j) + model.covariate_law.sd(j) * z
                })
                .collect();
            let ice = rng.bernoulli(p.id, DECISION_ICE, ice_p[cell.index()]);
            let linear: f64 = model.covariate_slopes.iter().zip(&covariates).map(|(b, x)| b * x).sum();
            let mut y = mu[cell.index()] + linear + model.noise_sd * rng.standard_normal(p.id, DECISION_NOISE);
            if ice && model.ice_strategy == IceStrategy::Composite {
                y += model.ice_effect;
            }
            PatientRecord {
                covariates,
                outcome: Some(y),
                ice_occurred: ice,
                ..p.clone()
            }
        })
        .collect();
    TrialDataset::new(patients, data.design().cloned())
}

/// Resolved weight pairs behind the weighted estimands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightsUsed {
    pub scheme: WeightScheme,
    pub theta1_tilde: Weights,
    pub theta2: Weights,
    pub theta8: Weights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEstimands {
    pub theta1: f64,
    pub theta1_tilde: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub theta5: f64,
    pub theta6: f64,
    pub theta7: f64,
    pub theta8: f64,
    pub weights_used: WeightsUsed,
}

impl TrueEstimands {
    pub fn get(&self, name: EstimandName) -> f64 {
        match name {
            EstimandName::Theta1 => self.theta1,
            EstimandName::Theta1Tilde => self.theta1_tilde,
            EstimandName::Theta2 => self.theta2,
            EstimandName::Theta3 => self.theta3,
            EstimandName::Theta4 => self.theta4,
            EstimandName::Theta5 => self.theta5,
            EstimandName::Theta6 => self.theta6,
            EstimandName::Theta7 => self.theta7,
            EstimandName::Theta8 => self.theta8,
        }
    }
}

/// Closed-form estimand values under `model`. `counts` (expected cell counts,
/// usually from the design) is needed only for sample-size weights.
pub fn true_estimands(model: &OutcomeModelSpec, weights: &WeightScheme, counts: Option<&CellValues>) -> Result<TrueEstimands> {
    model.validate()?;
    let means = model.expected_cell_means();
    let mut vals = [0.0; 9];
    let mut resolved = [None; 9];
    for (i, name) in EstimandName::ALL.into_iter().enumerate() {
        let spec = build_contrast(name, weights, counts)?;
        vals[i] = spec.contrast.apply(&means);
        resolved[i] = spec.weights;
    }
    let w = |n: EstimandName| resolved[n as usize].expect("weighted estimand");
    Ok(TrueEstimands {
        theta1: vals[0],
        theta1_tilde: vals[1],
        theta2: vals[2],
        theta3: vals[3],
        theta4: vals[4],
        theta5: vals[5],
        theta6: vals[6],
        theta7: vals[7],
        theta8: vals[8],
        weights_used: WeightsUsed {
            scheme: *weights,
            theta1_tilde: w(EstimandName::Theta1Tilde),
            theta2: w(EstimandName::Theta2),
            theta8: w(EstimandName::Theta8),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{randomize_cohort, DesignSpec};

    /// Cell means indexed as μ(c, p, t) by hand, independently of the
    /// contrast machinery.
    fn interaction_means() -> CellValues {
        // μ(c,p,1) − μ(c,p,0) = 1 + 0.5·p, treated means equal across classes
        let mut m = [0.0; 8];
        for cell in Cell::ALL {
            let p = f64::from(cell.conditions.indicator());
            m[cell.index()] = match cell.treatment {
                Treatment::Experimental => 3.0,
                Treatment::Control => 3.0 - (1.0 + 0.5 * p),
            };
        }
        m
    }

    #[test]
    fn equal_means_give_zero_effects() {
        let model = OutcomeModelSpec::from_means([4.2; 8], 1.0);
        let t = true_estimands(&model, &WeightScheme::Equal, None).unwrap();
        for n in EstimandName::ALL {
            assert_eq!(t.get(n), 0.0);
        }
    }

    #[test]
    fn interaction_model_enumeration() {
        let model = OutcomeModelSpec::from_means(interaction_means(), 1.0);
        let t = true_estimands(&model, &WeightScheme::Equal, None).unwrap();
        assert!((t.theta1 - 1.5).abs() < 1e-15);
        assert!((t.theta7 - 1.5).abs() < 1e-15);
        assert!((t.theta1_tilde - 1.5).abs() < 1e-15);
        assert!((t.theta8 - 1.0).abs() < 1e-15);
        assert!((t.theta3 - 0.5).abs() < 1e-15);
        assert_eq!(t.theta4, 0.0);
    }

    #[test]
    fn degenerate_weights_collapse_to_eligible_cate() {
        let m = [5.0, 1.0, 4.0, 2.5, 9.0, 3.0, 7.0, -1.0];
        let model = OutcomeModelSpec::from_means(m, 1.0);
        let t = true_estimands(&model, &WeightScheme::Explicit { w1: 1.0, w2: 0.0 }, None).unwrap();
        assert_eq!(t.theta1_tilde, t.theta1);
        assert_eq!(t.theta8, 4.0 - 2.5);
    }

    #[test]
    fn covariates_with_shared_law_cancel() {
        let m = [5.0, 1.0, 4.0, 2.5, 9.0, 3.0, 7.0, -1.0];
        let plain = OutcomeModelSpec::from_means(m, 1.0);
        let adjusted = OutcomeModelSpec {
            covariate_slopes: vec![2.0, -1.0],
            covariate_law: CovariateLaw {
                eligible_means: vec![0.3, 1.0],
                broader_means: vec![0.3, 1.0],
                sds: vec![],
            },
            ..plain.clone()
        };
        let a = true_estimands(&plain, &WeightScheme::Equal, None).unwrap();
        let b = true_estimands(&adjusted, &WeightScheme::Equal, None).unwrap();
        for n in EstimandName::ALL {
            assert!((a.get(n) - b.get(n)).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn class_specific_covariate_means_enter_theta4() {
        let plain = OutcomeModelSpec::from_means([0.0; 8], 1.0);
        let model = OutcomeModelSpec {
            covariate_slopes: vec![2.0],
            covariate_law: CovariateLaw {
                eligible_means: vec![1.0],
                broader_means: vec![0.0],
                sds: vec![],
            },
            ..plain
        };
        let t = true_estimands(&model, &WeightScheme::Equal, None).unwrap();
        assert_eq!(t.theta4, 2.0);
        assert_eq!(t.theta1, 0.0);
    }

    #[test]
    fn near_zero_noise_reproduces_cell_mean() {
        let spec = DesignSpec {
            n_eligible: 50,
            n_broader: 50,
            seed: 11,
            ..DesignSpec::default()
        };
        let data = randomize_cohort(&spec).unwrap();
        let model = OutcomeModelSpec::from_means([5.0; 8], 1e-12);
        let out = generate_outcomes(&data, &model, 11).unwrap();
        assert!(out.patients().iter().all(|p| (p.outcome.unwrap() - 5.0).abs() < 1e-9));
    }

    #[test]
    fn regenerating_is_a_state_error() {
        let data = randomize_cohort(&DesignSpec {
            n_eligible: 4,
            ..DesignSpec::default()
        })
        .unwrap();
        let model = OutcomeModelSpec::from_means([0.0; 8], 1.0);
        let once = generate_outcomes(&data, &model, 1).unwrap();
        assert!(matches!(generate_outcomes(&once, &model, 1), Err(Error::State(_))));
        assert_eq!(once, generate_outcomes(&data, &model, 1).unwrap());
    }

    #[test]
    fn invalid_models() {
        let ok = OutcomeModelSpec::from_means([0.0; 8], 1.0);
        assert!(OutcomeModelSpec { noise_sd: 0.0, ..ok.clone() }.validate().is_err());
        let mut bad = ok.clone();
        bad.ice_probability.eligible_crw.control = 1.2;
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "ice_probability.eligible_crw_control"),
            other => panic!("{other:?}"),
        }
        let bad = OutcomeModelSpec {
            covariate_slopes: vec![1.0],
            covariate_law: CovariateLaw {
                sds: vec![1.0, 2.0],
                ..CovariateLaw::default()
            },
            ..ok
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cell_table_round_trip() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_eq!(CellTable::from_values(&v).values(), v);
        assert_eq!(CellTable::from_values(&v).broader_crw.control, 8.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn closed_form_identities(
                means in proptest::array::uniform8(-50.0f64..50.0),
                w1 in 0.0f64..=1.0,
                shift in -100.0f64..100.0,
            ) {
                let model = OutcomeModelSpec::from_means(means, 1.0);
                let w = Weights { w1, w2: 1.0 - w1 };
                let scheme = WeightScheme::Explicit { w1, w2: w.w2 };
                let t = true_estimands(&model, &scheme, None).unwrap();
                let scale = 1.0 + t.theta3.abs().max(t.theta1_tilde.abs());
                prop_assert!((t.theta3 - (t.theta1_tilde - t.theta8)).abs() <= 1e-12 * scale);
                prop_assert!((t.theta1_tilde - (w.w1 * t.theta1 + w.w2 * t.theta7)).abs() <= 1e-12 * scale);

                let shifted = OutcomeModelSpec::from_means(means.map(|m| m + shift), 1.0);
                let s = true_estimands(&shifted, &scheme, None).unwrap();
                for n in EstimandName::ALL {
                    prop_assert!((s.get(n) - t.get(n)).abs() <= 1e-9);
                }
            }
        }
    }
}
