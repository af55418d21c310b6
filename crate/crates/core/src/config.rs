//! Scenario files.
//!
//! ```toml
//! [design]
//! n_eligible = 400
//! n_broader = 200
//! seed = 1
//!
//! [model]
//! noise_sd = 1.0
//! [model.cell_means]
//! eligible_rct = { experimental = 1.5, control = 0.0 }
//! eligible_crw = { experimental = 1.0, control = 0.0 }
//! broader_rct = { experimental = 1.5, control = 0.0 }
//! broader_crw = { experimental = 1.0, control = 0.0 }
//!
//! [analysis]
//! weights = { kind = "equal" }
//!
//! [simulation]
//! n_reps = 1000
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::{validate_design_with, Diagnostic, DesignSpec, Severity};
use crate::error::{Error, Result};
use crate::inference::AnalysisConfig;
use crate::montecarlo::Scenario;
use crate::outcome::OutcomeModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
    Csv,
}

fn default_reps() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_reps")]
    pub n_reps: u64,
    /// Master seed for replicate seed derivation.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_reps: default_reps(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub design: DesignSpec,
    pub model: OutcomeModelSpec,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            design: self.design.clone(),
            model: self.model.clone(),
            analysis: self.analysis.clone(),
        }
    }

    /// All validators, including identifiability warnings.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out: Vec<Diagnostic> = validate_design_with(&self.design, &self.analysis.estimand_set())
            .into_iter()
            .map(|mut d| {
                if let Some(f) = d.field.take() {
                    let scope = if f == "weights" { "analysis" } else { "design" };
                    d.field = Some(format!("{scope}.{f}"));
                }
                d
            })
            .collect();
        let mut push = |field: String, message: String| {
            out.push(Diagnostic {
                severity: Severity::Error,
                field: Some(field),
                message,
                estimands: Vec::new(),
            })
        };
        if let Err(Error::Config { field, message }) = self.model.validate() {
            push(format!("model.{field}"), message);
        }
        if !(self.analysis.alpha > 0.0 && self.analysis.alpha < 1.0) {
            push("analysis.alpha".into(), format!("must lie in (0, 1), got {}", self.analysis.alpha));
        }
        if self.simulation.n_reps == 0 {
            push("simulation.n_reps".into(), "must be at least 1".into());
        }
        out
    }
}
