//! Estimands as weighted linear contrasts over the eight design cells.
//!
//! Every estimand is a coefficient vector `c` in canonical cell order (see
//! [`Cell::ALL`]); its value under cell means `μ` is `⟨c, μ⟩`. The marginal
//! estimands combine the eligible (`C`) and broader (`C'`) class CATEs with a
//! convex weight pair `(w1, w2)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cell::{Cell, CellValues, Conditions, Eligibility, Treatment, N_CELLS};
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandName {
    Theta1,
    Theta1Tilde,
    Theta2,
    Theta3,
    Theta4,
    Theta5,
    Theta6,
    Theta7,
    Theta8,
}

impl EstimandName {
    pub const ALL: [EstimandName; 9] = [
        EstimandName::Theta1,
        EstimandName::Theta1Tilde,
        EstimandName::Theta2,
        EstimandName::Theta3,
        EstimandName::Theta4,
        EstimandName::Theta5,
        EstimandName::Theta6,
        EstimandName::Theta7,
        EstimandName::Theta8,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimandName::Theta1 => "theta1",
            EstimandName::Theta1Tilde => "theta1_tilde",
            EstimandName::Theta2 => "theta2",
            EstimandName::Theta3 => "theta3",
            EstimandName::Theta4 => "theta4",
            EstimandName::Theta5 => "theta5",
            EstimandName::Theta6 => "theta6",
            EstimandName::Theta7 => "theta7",
            EstimandName::Theta8 => "theta8",
        }
    }

    /// Whether the contrast depends on the weight pair.
    pub fn is_weighted(self) -> bool {
        matches!(
            self,
            EstimandName::Theta1Tilde | EstimandName::Theta2 | EstimandName::Theta3 | EstimandName::Theta8
        )
    }

    /// One-line description of the quantity.
    pub fn describe(self) -> &'static str {
        match self {
            EstimandName::Theta1 => "treatment effect, eligible patients, RCT conditions",
            EstimandName::Theta1Tilde => "treatment effect under RCT conditions",
            EstimandName::Theta2 => "effect of conditions (RCT vs cRW) on the treated",
            EstimandName::Theta3 => "difference of treatment effects between conditions",
            EstimandName::Theta4 => "eligible vs broader, treated under RCT conditions",
            EstimandName::Theta5 => "effect of conditions on the treated, eligible patients",
            EstimandName::Theta6 => "effect of conditions on the treated, broader patients",
            EstimandName::Theta7 => "treatment effect, broader patients, RCT conditions",
            EstimandName::Theta8 => "treatment effect under cRW conditions",
        }
    }
}

impl fmt::Display for EstimandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimandName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimandName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::config("estimand", format!("unknown estimand `{s}`")))
    }
}

/// How the eligible/broader class CATEs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightScheme {
    #[default]
    Equal,
    /// Realized (or expected) class proportions within the stratum the
    /// estimand conditions on.
    SampleSize,
    TargetPopulation { fraction_eligible: f64 },
    Explicit { w1: f64, w2: f64 },
}

/// A resolved convex weight pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite()) || w1 < 0.0 || w2 < 0.0 {
            return Err(Error::config("weights", format!("weights must be finite and non-negative, got ({w1}, {w2})")));
        }
        if (w1 + w2 - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::config("weights", format!("weights must sum to 1, got {w1} + {w2} = {}", w1 + w2)));
        }
        Ok(Self { w1, w2 })
    }
}

/// The population stratum whose class proportions size-based weights use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
    /// All patients under `P = 1`.
    RctConditions,
    /// All patients under `P = 0`.
    CrwConditions,
    /// All treated patients (`T = 1`), both conditions.
    Treated,
}

impl Stratum {
    fn contains(self, cell: Cell) -> bool {
        match self {
            Stratum::RctConditions => cell.conditions == Conditions::Rct,
            Stratum::CrwConditions => cell.conditions == Conditions::Crw,
            Stratum::Treated => cell.treatment == Treatment::Experimental,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Stratum::RctConditions => "patients under P=1",
            Stratum::CrwConditions => "patients under P=0",
            Stratum::Treated => "treated patients",
        }
    }

    /// Stratum used by `SampleSize` for a weighted estimand, or `None` for
    /// estimands whose contrasts carry no weights of their own.
    pub fn for_estimand(name: EstimandName) -> Option<Stratum> {
        match name {
            EstimandName::Theta1Tilde => Some(Stratum::RctConditions),
            EstimandName::Theta8 => Some(Stratum::CrwConditions),
            EstimandName::Theta2 => Some(Stratum::Treated),
            _ => None,
        }
    }
}

impl WeightScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightScheme::Equal | WeightScheme::SampleSize => Ok(()),
            WeightScheme::TargetPopulation { fraction_eligible } => {
                if !(0.0..=1.0).contains(&fraction_eligible) {
                    return Err(Error::config(
                        "fraction_eligible",
                        format!("must lie in [0, 1], got {fraction_eligible}"),
                    ));
                }
                Ok(())
            }
            WeightScheme::Explicit { w1, w2 } => Weights::new(w1, w2).map(|_| ()),
        }
    }

    /// Resolve to a concrete pair. `counts` (realized or expected cell
    /// counts) is needed only by `SampleSize`.
    pub fn resolve(&self, stratum: Stratum, counts: Option<&CellValues>) -> Result<Weights> {
        self.validate()?;
        match *self {
            WeightScheme::Equal => Ok(Weights { w1: 0.5, w2: 0.5 }),
            WeightScheme::TargetPopulation { fraction_eligible } => Ok(Weights {
                w1: fraction_eligible,
                w2: 1.0 - fraction_eligible,
            }),
            WeightScheme::Explicit { w1, w2 } => Weights::new(w1, w2),
            WeightScheme::SampleSize => {
                let counts = counts.ok_or_else(|| {
                    Error::Identifiability("sample-size weights need cell counts".into())
                })?;
                let (mut eligible, mut broader) = (0.0, 0.0);
                for cell in Cell::ALL.into_iter().filter(|c| stratum.contains(*c)) {
                    match cell.eligibility {
                        Eligibility::Eligible => eligible += counts[cell.index()],
                        Eligibility::Broader => broader += counts[cell.index()],
                    }
                }
                let total = eligible + broader;
                if total <= 0.0 {
                    let cells: Vec<String> = Cell::ALL
                        .into_iter()
                        .filter(|c| stratum.contains(*c))
                        .map(|c| c.to_string())
                        .collect();
                    return Err(Error::Identifiability(format!(
                        "sample-size weights need {}, but cells {} are empty",
                        stratum.describe(),
                        cells.join(", ")
                    )));
                }
                Ok(Weights {
                    w1: eligible / total,
                    w2: broader / total,
                })
            }
        }
    }
}

/// Coefficients over the eight cells.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Contrast(pub CellValues);

impl Contrast {
    fn with(entries: &[(Cell, f64)]) -> Self {
        let mut c = [0.0; N_CELLS];
        for &(cell, v) in entries {
            c[cell.index()] += v;
        }
        Contrast(c)
    }

    pub fn coefficients(&self) -> &CellValues {
        &self.0
    }

    pub fn apply(&self, means: &CellValues) -> f64 {
        self.0.iter().zip(means).map(|(c, m)| c * m).sum()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Cells with a nonzero coefficient.
    pub fn support(&self) -> impl Iterator<Item = Cell> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| Cell::from_index(i))
    }

    pub fn scaled(&self, a: f64) -> Contrast {
        Contrast(self.0.map(|c| a * c))
    }

    pub fn plus(&self, other: &Contrast) -> Contrast {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o += b;
        }
        Contrast(out)
    }

    pub fn minus(&self, other: &Contrast) -> Contrast {
        self.plus(&other.scaled(-1.0))
    }

    pub fn max_abs_diff(&self, other: &Contrast) -> f64 {
        self.0
            .iter()
            .zip(other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A named estimand bound to its resolved contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub name: EstimandName,
    pub contrast: Contrast,
    /// Resolved weights, for the weighted estimands.
    pub weights: Option<Weights>,
}

/// Build the contrast for `name`.
///
/// `counts` is consulted only when `weights` is `SampleSize`. For `theta3`
/// the two halves resolve their own strata.
pub fn build_contrast(name: EstimandName, weights: &WeightScheme, counts: Option<&CellValues>) -> Result<EstimandSpec> {
    use Conditions::{Crw, Rct};
    use Eligibility::{Broader, Eligible};
    use Treatment::{Control, Experimental};
    let cell = Cell::new;

    let resolve = |n: EstimandName| weights.resolve(Stratum::for_estimand(n).expect("weighted"), counts);

    let (contrast, resolved) = match name {
        EstimandName::Theta1 => (
            Contrast::with(&[(cell(Eligible, Rct, Experimental), 1.0), (cell(Eligible, Rct, Control), -1.0)]),
            None,
        ),
        EstimandName::Theta7 => (
            Contrast::with(&[(cell(Broader, Rct, Experimental), 1.0), (cell(Broader, Rct, Control), -1.0)]),
            None,
        ),
        EstimandName::Theta4 => (
            Contrast::with(&[(cell(Eligible, Rct, Experimental), 1.0), (cell(Broader, Rct, Experimental), -1.0)]),
            None,
        ),
        EstimandName::Theta5 => (
            Contrast::with(&[(cell(Eligible, Rct, Experimental), 1.0), (cell(Eligible, Crw, Experimental), -1.0)]),
            None,
        ),
        EstimandName::Theta6 => (
            Contrast::with(&[(cell(Broader, Rct, Experimental), 1.0), (cell(Broader, Crw, Experimental), -1.0)]),
            None,
        ),
        EstimandName::Theta1Tilde => {
            let w = resolve(name)?;
            (
                Contrast::with(&[
                    (cell(Eligible, Rct, Experimental), w.w1),
                    (cell(Eligible, Rct, Control), -w.w1),
                    (cell(Broader, Rct, Experimental), w.w2),
                    (cell(Broader, Rct, Control), -w.w2),
                ]),
                Some(w),
            )
        }
        EstimandName::Theta2 => {
            let w = resolve(name)?;
            (
                Contrast::with(&[
                    (cell(Eligible, Rct, Experimental), w.w1),
                    (cell(Eligible, Crw, Experimental), -w.w1),
                    (cell(Broader, Rct, Experimental), w.w2),
                    (cell(Broader, Crw, Experimental), -w.w2),
                ]),
                Some(w),
            )
        }
        EstimandName::Theta8 => {
            let w = resolve(name)?;
            (
                Contrast::with(&[
                    (cell(Eligible, Crw, Experimental), w.w1),
                    (cell(Eligible, Crw, Control), -w.w1),
                    (cell(Broader, Crw, Experimental), w.w2),
                    (cell(Broader, Crw, Control), -w.w2),
                ]),
                Some(w),
            )
        }
        EstimandName::Theta3 => {
            // Δ(P=1) − Δ(P=0), written out cell by cell
            let a = resolve(EstimandName::Theta1Tilde)?;
            let b = resolve(EstimandName::Theta8)?;
            let contrast = Contrast::with(&[
                (cell(Eligible, Rct, Experimental), a.w1),
                (cell(Eligible, Rct, Control), -a.w1),
                (cell(Broader, Rct, Experimental), a.w2),
                (cell(Broader, Rct, Control), -a.w2),
                (cell(Eligible, Crw, Experimental), -b.w1),
                (cell(Eligible, Crw, Control), b.w1),
                (cell(Broader, Crw, Experimental), -b.w2),
                (cell(Broader, Crw, Control), b.w2),
            ]);
            // theta3 mixes two strata; report the P=1 half when they agree
            (contrast, (a == b).then_some(a))
        }
    };
    Ok(EstimandSpec {
        name,
        contrast,
        weights: resolved,
    })
}

/// The nine estimands with one shared weight scheme and optional
/// per-estimand overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimandSet {
    pub weights: WeightScheme,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<EstimandName, WeightScheme>,
}

impl EstimandSet {
    pub fn new(weights: WeightScheme) -> Self {
        Self {
            weights,
            overrides: BTreeMap::new(),
        }
    }

    pub fn scheme_for(&self, name: EstimandName) -> &WeightScheme {
        self.overrides.get(&name).unwrap_or(&self.weights)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        for w in self.overrides.values() {
            w.validate()?;
        }
        Ok(())
    }

    /// Build every contrast; unbuildable ones carry their error.
    pub fn build(&self, counts: Option<&CellValues>) -> Vec<(EstimandName, Result<EstimandSpec>)> {
        EstimandName::ALL
            .into_iter()
            .map(|n| (n, build_contrast(n, self.scheme_for(n), counts)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// theta1_tilde = w1·theta1 + w2·theta7
    Theta1TildeDecomposition,
    /// theta3 = theta1_tilde − theta8
    Theta3Difference,
    /// theta2 = w1·theta5 + w2·theta6
    Theta2Decomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub identity: Identity,
    pub passed: bool,
    pub max_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
    /// Set when the checks were skipped.
    pub notice: Option<String>,
}

/// Check the decomposition identities in coefficient space.
pub fn verify_identities(set: &EstimandSet, counts: Option<&CellValues>) -> Result<IdentityReport> {
    set.validate()?;
    if !set.overrides.is_empty() {
        return Ok(IdentityReport {
            checks: Vec::new(),
            notice: Some("per-estimand weight overrides are in effect; identity checks skipped".into()),
        });
    }
    let scheme = &set.weights;
    let get = |n| build_contrast(n, scheme, counts);
    let t1 = get(EstimandName::Theta1)?;
    let t1t = get(EstimandName::Theta1Tilde)?;
    let t2 = get(EstimandName::Theta2)?;
    let t3 = get(EstimandName::Theta3)?;
    let t5 = get(EstimandName::Theta5)?;
    let t6 = get(EstimandName::Theta6)?;
    let t7 = get(EstimandName::Theta7)?;
    let t8 = get(EstimandName::Theta8)?;

    let w1t = t1t.weights.expect("weighted");
    let w2 = t2.weights.expect("weighted");
    let checks = [
        (
            Identity::Theta1TildeDecomposition,
            t1.contrast.scaled(w1t.w1).plus(&t7.contrast.scaled(w1t.w2)),
            t1t.contrast,
        ),
        (Identity::Theta3Difference, t1t.contrast.minus(&t8.contrast), t3.contrast),
        (
            Identity::Theta2Decomposition,
            t5.contrast.scaled(w2.w1).plus(&t6.contrast.scaled(w2.w2)),
            t2.contrast,
        ),
    ]
    .into_iter()
    .map(|(identity, lhs, rhs)| {
        let d = lhs.max_abs_diff(&rhs);
        IdentityCheck {
            identity,
            passed: d <= 1e-12,
            max_discrepancy: d,
        }
    })
    .collect();
    Ok(IdentityReport { checks, notice: None })
}

/// Write the 9×8 coefficient matrix as CSV. Unbuildable rows have empty
/// coefficients.
pub fn write_contrast_matrix<W: std::io::Write>(set: &EstimandSet, counts: Option<&CellValues>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["estimand".to_string()];
    header.extend(Cell::ALL.iter().map(|c| c.key()));
    w.write_record(&header).map_err(csv_err)?;
    for (name, spec) in set.build(counts) {
        let mut row = vec![name.to_string()];
        match spec {
            Ok(s) => row.extend(s.contrast.0.iter().map(|c| crate::dataset::format_f64(*c))),
            Err(_) => row.extend(std::iter::repeat_n(String::new(), N_CELLS)),
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::data(e.to_string())
}
