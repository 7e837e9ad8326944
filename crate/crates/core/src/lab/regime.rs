use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance of the regime boundaries `m alpha = 1` and `m alpha = sqrt 2`.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Position of `m alpha` relative to `1` and `sqrt 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeLabel {
    SubUnit,
    UnitBoundary,
    Intermediate,
    Sqrt2Boundary,
    SuperSqrt2,
}

impl RegimeLabel {
    /// Whether the bound carries an `exp(c'' ...)` prefactor and holds for every depth.
    pub fn has_prefactor(self) -> bool {
        matches!(self, RegimeLabel::SubUnit | RegimeLabel::UnitBoundary)
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::SubUnit => "sub-unit",
            RegimeLabel::UnitBoundary => "unit-boundary",
            RegimeLabel::Intermediate => "intermediate",
            RegimeLabel::Sqrt2Boundary => "sqrt2-boundary",
            RegimeLabel::SuperSqrt2 => "super-sqrt2",
        })
    }
}

fn near(x: f64, target: f64) -> bool {
    (x - target).abs() <= BOUNDARY_TOLERANCE * target.abs()
}

/// Requires `m > sqrt 2` and `0 <= alpha < 1`.
pub fn classify_regime(m: f64, alpha: f64) -> Result<RegimeLabel> {
    if !(m > std::f64::consts::SQRT_2) {
        return Err(Error::NotStronglySupercritical(m));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha, "[0, 1)"));
    }
    let x = m * alpha;
    let s = std::f64::consts::SQRT_2;
    Ok(if near(x, 1.0) {
        RegimeLabel::UnitBoundary
    } else if near(x, s) {
        RegimeLabel::Sqrt2Boundary
    } else if x < 1.0 {
        RegimeLabel::SubUnit
    } else if x < s {
        RegimeLabel::Intermediate
    } else {
        RegimeLabel::SuperSqrt2
    })
}
