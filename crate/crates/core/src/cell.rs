//! The eight design cells: eligibility × conditions × treatment.

use serde::{Deserialize, Serialize};
use std::fmt;

/// RCT eligibility class of a patient: `x ∈ C` or `x ∈ C'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    Eligible,
    Broader,
}

/// Treatment conditions `P`: strictly controlled (`P = 1`) or close to real
/// world (`P = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditions {
    Rct,
    Crw,
}

/// Treatment indicator `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Experimental,
    Control,
}

impl Conditions {
    pub fn indicator(self) -> u8 {
        match self {
            Conditions::Rct => 1,
            Conditions::Crw => 0,
        }
    }
}

impl Treatment {
    pub fn indicator(self) -> u8 {
        match self {
            Treatment::Experimental => 1,
            Treatment::Control => 0,
        }
    }
}

impl Eligibility {
    pub fn indicator(self) -> u8 {
        match self {
            Eligibility::Eligible => 1,
            Eligibility::Broader => 0,
        }
    }
}

pub const N_CELLS: usize = 8;

/// One of the eight design cells.
///
/// Canonical order (used by every coefficient vector in the crate):
/// `(C,1,1) (C,1,0) (C,0,1) (C,0,0) (C',1,1) (C',1,0) (C',0,1) (C',0,0)`
/// where the triple is (eligibility, P, T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub eligibility: Eligibility,
    pub conditions: Conditions,
    pub treatment: Treatment,
}

impl Cell {
    pub const fn new(eligibility: Eligibility, conditions: Conditions, treatment: Treatment) -> Self {
        Self {
            eligibility,
            conditions,
            treatment,
        }
    }

    pub const ALL: [Cell; N_CELLS] = {
        use Conditions::*;
        use Eligibility::*;
        use Treatment::*;
        [
            Cell::new(Eligible, Rct, Experimental),
            Cell::new(Eligible, Rct, Control),
            Cell::new(Eligible, Crw, Experimental),
            Cell::new(Eligible, Crw, Control),
            Cell::new(Broader, Rct, Experimental),
            Cell::new(Broader, Rct, Control),
            Cell::new(Broader, Crw, Experimental),
            Cell::new(Broader, Crw, Control),
        ]
    };

    pub fn index(self) -> usize {
        let e = match self.eligibility {
            Eligibility::Eligible => 0,
            Eligibility::Broader => 4,
        };
        let p = match self.conditions {
            Conditions::Rct => 0,
            Conditions::Crw => 2,
        };
        let t = match self.treatment {
            Treatment::Experimental => 0,
            Treatment::Control => 1,
        };
        e + p + t
    }

    pub fn from_index(i: usize) -> Cell {
        Cell::ALL[i]
    }

    /// Column-friendly name, e.g. `eligible_rct_experimental`.
    pub fn key(self) -> String {
        let e = match self.eligibility {
            Eligibility::Eligible => "eligible",
            Eligibility::Broader => "broader",
        };
        let p = match self.conditions {
            Conditions::Rct => "rct",
            Conditions::Crw => "crw",
        };
        let t = match self.treatment {
            Treatment::Experimental => "experimental",
            Treatment::Control => "control",
        };
        format!("{e}_{p}_{t}")
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self.eligibility {
            Eligibility::Eligible => "C",
            Eligibility::Broader => "C'",
        };
        write!(
            f,
            "({e},{},{})",
            self.conditions.indicator(),
            self.treatment.indicator()
        )
    }
}

/// Per-cell values in canonical order.
pub type CellValues = [f64; N_CELLS];

/// Per-cell patient counts in canonical order.
pub type CellCounts = [u64; N_CELLS];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trips() {
        for (i, c) in Cell::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(Cell::from_index(i), *c);
        }
        assert_eq!(Cell::ALL[4].to_string(), "(C',1,1)");
        assert_eq!(Cell::ALL[3].key(), "eligible_crw_control");
    }
}
