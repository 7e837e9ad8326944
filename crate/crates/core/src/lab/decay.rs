use serde::Serialize;

use super::bounds::h_r;
use super::experiment::DeviationEstimate;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::stats::SetKind;

/// Abscissa of a decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayTransform {
    VsR,
    VsHr { m: f64, set_kind: SetKind },
}

impl DecayTransform {
    fn abscissa(self, r: u32) -> f64 {
        match self {
            DecayTransform::VsR => r as f64,
            DecayTransform::VsHr { m, set_kind } => h_r(m, r, set_kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayPoint {
    pub depth: u32,
    pub x: f64,
    /// `-log p_hat`.
    pub y: f64,
}

/// A zero-count estimate left out of the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcludedPoint {
    pub depth: u32,
    pub delta: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub transform: DecayTransform,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub used: Vec<DecayPoint>,
    pub excluded: Vec<ExcludedPoint>,
}

/// Least-squares slope of `-log p_hat` against `r` or `h_r`, over estimates
/// with `p_hat > 0`.
pub fn decay_fit(estimates: &[DeviationEstimate], transform: DecayTransform) -> Result<DecayFit> {
    let (positive, zero): (Vec<&DeviationEstimate>, Vec<&DeviationEstimate>) = estimates.iter().partition(|e| e.p_hat > 0.0);
    if positive.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: positive.len() });
    }
    let used: Vec<DecayPoint> =
        positive.iter().map(|e| DecayPoint { depth: e.depth, x: transform.abscissa(e.depth), y: -e.p_hat.ln() }).collect();
    let xs: Vec<f64> = used.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.y).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(DecayFit {
        transform,
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        used,
        excluded: zero.iter().map(|e| ExcludedPoint { depth: e.depth, delta: e.delta, ci_high: e.ci_high }).collect(),
    })
}
