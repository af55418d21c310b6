//! Population structure and nested randomization.
//!
//! Eligible patients go to Part A (RCT conditions) or Part B (cRW
//! conditions). Broader patients go to Part B only and are randomized between
//! RCT and cRW conditions. Every patient is then randomized to experimental
//! treatment or control. All assignments are independent Bernoulli draws.

use serde::{Deserialize, Serialize};

use crate::cell::{Cell, CellCounts, CellValues, Conditions, Eligibility, Treatment, N_CELLS};
use crate::error::{Error, Result};
use crate::estimand::{EstimandName, EstimandSet, WeightScheme};
use crate::gate::GatingRule;
use crate::rng::{CounterRng, Purpose};

/// Decision slots on the allocation stream.
const DECISION_PART: u32 = 0;
const DECISION_CONDITIONS: u32 = 1;
const DECISION_TREATMENT: u32 = 2;

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub n_eligible: u64,
    pub n_broader: u64,
    /// Pr(Part A) for an eligible patient.
    #[serde(default = "half")]
    pub p_part_a: f64,
    /// Pr(P = 1) for a broader patient.
    #[serde(default = "half")]
    pub p_rct_conditions_broader: f64,
    /// Pr(T = 1) in every cell.
    #[serde(default = "half")]
    pub p_treatment: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_b_gate: Option<GatingRule>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            n_eligible: 0,
            n_broader: 0,
            p_part_a: 0.5,
            p_rct_conditions_broader: 0.5,
            p_treatment: 0.5,
            part_b_gate: None,
            seed: 0,
        }
    }
}

impl DesignSpec {
    pub fn n_patients(&self) -> u64 {
        self.n_eligible + self.n_broader
    }

    /// Expected patient count per cell.
    pub fn expected_cell_counts(&self) -> CellValues {
        let ne = self.n_eligible as f64;
        let nb = self.n_broader as f64;
        let mut out = [0.0; N_CELLS];
        for cell in Cell::ALL {
            let base = match (cell.eligibility, cell.conditions) {
                (Eligibility::Eligible, Conditions::Rct) => ne * self.p_part_a,
                (Eligibility::Eligible, Conditions::Crw) => ne * (1.0 - self.p_part_a),
                (Eligibility::Broader, Conditions::Rct) => nb * self.p_rct_conditions_broader,
                (Eligibility::Broader, Conditions::Crw) => nb * (1.0 - self.p_rct_conditions_broader),
            };
            let pt = match cell.treatment {
                Treatment::Experimental => self.p_treatment,
                Treatment::Control => 1.0 - self.p_treatment,
            };
            out[cell.index()] = base * pt;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: Option<String>,
    pub message: String,
    /// Estimands affected by an identifiability warning.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimands: Vec<EstimandName>,
}

impl Diagnostic {
    fn error(field: &str, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field: Some(field.to_string()),
            message: message.into(),
            estimands: Vec::new(),
        }
    }
}

pub fn has_errors(diagnostics: &[Diagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

/// Check `spec` against its invariants, with identifiability warnings for the
/// default equal weights.
pub fn validate_design(spec: &DesignSpec) -> Vec<Diagnostic> {
    validate_design_with(spec, &EstimandSet::new(WeightScheme::Equal))
}

/// As [`validate_design`], enumerating inestimable estimands under
/// `estimands`' weight scheme.
pub fn validate_design_with(spec: &DesignSpec, estimands: &EstimandSet) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let unit = |field: &str, v: f64, out: &mut Vec<Diagnostic>| {
        if !(0.0..=1.0).contains(&v) {
            out.push(Diagnostic::error(field, format!("probability must lie in [0, 1], got {v}")));
        }
    };
    unit("p_part_a", spec.p_part_a, &mut out);
    unit("p_rct_conditions_broader", spec.p_rct_conditions_broader, &mut out);
    let pt = spec.p_treatment;
    if pt.is_nan() || pt <= 0.0 {
        out.push(Diagnostic::error(
            "p_treatment",
            format!("must lie in (0, 1), got {pt}: no experimental arm, so no treatment effect is defined"),
        ));
    } else if pt >= 1.0 {
        out.push(Diagnostic::error(
            "p_treatment",
            format!("must lie in (0, 1), got {pt}: no control arm, so no treatment effect is defined"),
        ));
    }
    if let Some(gate) = &spec.part_b_gate {
        out.extend(gate.validate().into_iter().map(|(f, m)| Diagnostic::error(&f, m)));
    }
    if let Err(e) = estimands.validate() {
        out.push(Diagnostic {
            severity: Severity::Error,
            field: Some("weights".into()),
            message: e.to_string(),
            estimands: Vec::new(),
        });
    }
    if has_errors(&out) {
        return out;
    }

    let expected = spec.expected_cell_counts();
    let empty: Vec<Cell> = Cell::ALL.into_iter().filter(|c| expected[c.index()] <= 0.0).collect();
    if !empty.is_empty() {
        let mut affected = Vec::new();
        for (name, built) in estimands.build(Some(&expected)) {
            let inestimable = match built {
                Ok(s) => s.contrast.support().any(|c| empty.contains(&c)),
                Err(_) => true,
            };
            if inestimable {
                affected.push(name);
            }
        }
        if !affected.is_empty() {
            let cells: Vec<String> = empty.iter().map(|c| c.to_string()).collect();
            let names: Vec<&str> = affected.iter().map(|n| n.as_str()).collect();
            out.push(Diagnostic {
                severity: Severity::Warning,
                field: None,
                message: format!(
                    "cells {} have expected count 0; inestimable: {}",
                    cells.join(", "),
                    names.join(", ")
                ),
                estimands: affected,
            });
        }
    }
    out
}

fn check(spec: &DesignSpec) -> Result<()> {
    match validate_design(spec).into_iter().find(|d| d.severity == Severity::Error) {
        Some(d) => Err(Error::config(d.field.unwrap_or_default(), d.message)),
        None => Ok(()),
    }
}

/// The design with its cRW components removed: a two-arm RCT on eligible
/// patients.
pub fn ablate_to_plain_rct(spec: &DesignSpec) -> DesignSpec {
    DesignSpec {
        n_broader: 0,
        p_part_a: 1.0,
        part_b_gate: None,
        ..spec.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: u64,
    pub eligibility: Eligibility,
    pub part: Part,
    pub conditions: Conditions,
    pub treatment: Treatment,
    pub covariates: Vec<f64>,
    pub outcome: Option<f64>,
    pub ice_occurred: bool,
}

impl PatientRecord {
    pub fn cell(&self) -> Cell {
        Cell::new(self.eligibility, self.conditions, self.treatment)
    }

    /// Structural constraints of the nested randomization.
    pub fn check_structure(&self) -> std::result::Result<(), &'static str> {
        match (self.eligibility, self.part, self.conditions) {
            (Eligibility::Broader, Part::A, _) => Err("broader patients cannot be in Part A"),
            (_, Part::A, Conditions::Crw) => Err("Part A patients are treated under RCT conditions"),
            (Eligibility::Eligible, Part::B, Conditions::Rct) => {
                Err("eligible patients in Part B are treated under cRW conditions")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    patients: Vec<PatientRecord>,
    /// Absent for imported data.
    design: Option<DesignSpec>,
    cell_counts: CellCounts,
}

impl TrialDataset {
    /// Assemble a dataset, checking patient structure, unique ids and a
    /// common covariate dimension.
    pub fn new(patients: Vec<PatientRecord>, design: Option<DesignSpec>) -> Result<Self> {
        let mut counts = [0u64; N_CELLS];
        let mut ids = std::collections::HashSet::with_capacity(patients.len());
        let dim = patients.first().map(|p| p.covariates.len());
        for (row, p) in patients.iter().enumerate() {
            p.check_structure()
                .map_err(|m| Error::data(format!("patient {} (row {}): {m}", p.id, row + 1)))?;
            if !ids.insert(p.id) {
                return Err(Error::data(format!("duplicate patient id {}", p.id)));
            }
            if Some(p.covariates.len()) != dim {
                return Err(Error::data(format!("patient {} has {} covariates, expected {}", p.id, p.covariates.len(), dim.unwrap_or(0))));
            }
            counts[p.cell().index()] += 1;
        }
        Ok(Self {
            patients,
            design,
            cell_counts: counts,
        })
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn design(&self) -> Option<&DesignSpec> {
        self.design.as_ref()
    }

    pub fn cell_counts(&self) -> &CellCounts {
        &self.cell_counts
    }

    pub fn cell_counts_f64(&self) -> CellValues {
        self.cell_counts.map(|c| c as f64)
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.patients.first().map_or(0, |p| p.covariates.len())
    }

    pub fn has_outcomes(&self) -> bool {
        self.patients.iter().any(|p| p.outcome.is_some())
    }

    pub fn into_patients(self) -> Vec<PatientRecord> {
        self.patients
    }

    /// Keep patients matching `keep`, recomputing counts.
    pub fn filtered(&self, keep: impl Fn(&PatientRecord) -> bool) -> TrialDataset {
        let patients: Vec<PatientRecord> = self.patients.iter().filter(|p| keep(p)).cloned().collect();
        let mut counts = [0u64; N_CELLS];
        for p in &patients {
            counts[p.cell().index()] += 1;
        }
        TrialDataset {
            patients,
            design: self.design.clone(),
            cell_counts: counts,
        }
    }
}

/// Randomize the screened cohort. Eligible patients get ids
/// `1..=n_eligible`, broader patients the following ids.
pub fn randomize_cohort(spec: &DesignSpec) -> Result<TrialDataset> {
    check(spec)?;
    let rng = CounterRng::new(spec.seed, Purpose::Allocation);
    let n = spec.n_patients();
    let mut patients = Vec::with_capacity(n as usize);
    for id in 1..=n {
        let eligibility = if id <= spec.n_eligible {
            Eligibility::Eligible
        } else {
            Eligibility::Broader
        };
        let (part, conditions) = match eligibility {
            Eligibility::Eligible => {
                if rng.bernoulli(id, DECISION_PART, spec.p_part_a) {
                    (Part::A, Conditions::Rct)
                } else {
                    (Part::B, Conditions::Crw)
                }
            }
            Eligibility::Broader => {
                if rng.bernoulli(id, DECISION_CONDITIONS, spec.p_rct_conditions_broader) {
                    (Part::B, Conditions::Rct)
                } else {
                    (Part::B, Conditions::Crw)
                }
            }
        };
        let treatment = if rng.bernoulli(id, DECISION_TREATMENT, spec.p_treatment) {
            Treatment::Experimental
        } else {
            Treatment::Control
        };
        patients.push(PatientRecord {
            id,
            eligibility,
            part,
            conditions,
            treatment,
            covariates: Vec::new(),
            outcome: None,
            ice_occurred: false,
        });
    }
    TrialDataset::new(patients, Some(spec.clone()))
}
