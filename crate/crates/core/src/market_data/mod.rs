//! Market models, objective-measure simulation and training windows.

mod io;
mod model;
mod simulate;
mod windows;

pub use io::{load_prices, parse_prices, write_prices};
pub use model::{ImpliedVolFn, SdeModel, KNEE_TOLERANCE};
pub use simulate::{
    simulate_paths, simulate_trajectory, simulate_with_noise, Noise, PriceTrajectory,
    POSITIVITY_FLOOR,
};
pub use windows::{extract_windows, steps_for_maturity, WindowSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

/// A European vanilla option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Result<Self> {
        let spec = Self {
            kind,
            strike,
            maturity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::Domain(format!(
                "strike must be positive, got {}",
                self.strike
            )));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::Domain(format!(
                "maturity must be positive, got {}",
                self.maturity
            )));
        }
        Ok(())
    }

    pub fn with_kind(self, kind: OptionKind) -> Self {
        Self { kind, ..self }
    }

    pub fn with_maturity(self, maturity: f64) -> Self {
        Self { maturity, ..self }
    }
}
