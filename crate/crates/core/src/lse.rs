//! Least-squares estimation of the eight BAR parameters.
//!
//! With `T_n^{1,0}`, `T_n^0`, `T_n^1` the cells of `T_n*` with both, only the
//! new-pole, or only the old-pole daughter alive, `(alpha_eta, beta_eta)` is the
//! regression of `X_{2i+eta}` on `X_i` over `T_n^{1,0}` and
//! `(alpha_eta', beta_eta')` the same regression over `T_n^eta`. Only the
//! subtree `T_{n+1}*` is read.

use serde::Serialize;

use crate::bar::{BarParams, PopulationSample};
use crate::chain::StationaryMoments;
use crate::error::{Error, Result};
use crate::sum::{sum, CompensatedSum};
use crate::tree::{OffspringLaw, Pole};

/// Why a class produced no estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegenerateClass {
    Empty,
    Singleton,
    /// All regressor values coincide.
    ZeroVariance,
}

/// One of the four regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regression {
    /// `X_2i` on `X_i` over two-daughter mothers.
    BothNew,
    /// `X_2i+1` on `X_i` over two-daughter mothers.
    BothOld,
    /// `X_2i` on `X_i` over new-pole-only mothers.
    NewOnly,
    /// `X_2i+1` on `X_i` over old-pole-only mothers.
    OldOnly,
}

impl Regression {
    pub const ALL: [Regression; 4] = [Regression::BothNew, Regression::BothOld, Regression::NewOnly, Regression::OldOnly];

    /// Names of the `(slope, intercept)` pair, as in [`BarParams::NAMES`].
    pub fn names(self) -> (&'static str, &'static str) {
        let i = self as usize;
        (BarParams::NAMES[2 * i], BarParams::NAMES[2 * i + 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub count: usize,
    /// Empirical variance of the regressor, `1/N` normalization; always `> 0`.
    pub x_variance: f64,
}

/// Least-squares line through `(x, y)` pairs.
pub fn regress(points: &[(f64, f64)]) -> Result<RegressionFit, DegenerateClass> {
    match points.len() {
        0 => return Err(DegenerateClass::Empty),
        1 => return Err(DegenerateClass::Singleton),
        _ => {}
    }
    let n = points.len() as f64;
    let mx = sum(points.iter().map(|p| p.0)) / n;
    let my = sum(points.iter().map(|p| p.1)) / n;
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(DegenerateClass::ZeroVariance);
    }
    let vx = sum(points.iter().map(|p| (p.0 - mx) * (p.0 - mx))) / n;
    if !(vx > 0.0) {
        return Err(DegenerateClass::ZeroVariance);
    }
    let cxy = sum(points.iter().map(|p| (p.0 - mx) * (p.1 - my))) / n;
    let slope = cxy / vx;
    Ok(RegressionFit { slope, intercept: my - slope * mx, count: points.len(), x_variance: vx })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaEstimate {
    pub n: u32,
    /// Fits in [`Regression::ALL`] order.
    pub fits: [Result<RegressionFit, DegenerateClass>; 4],
    /// `|T_n^{1,0}|`, `|T_n^0|`, `|T_n^1|`.
    pub class_sizes: [usize; 3],
    /// `|T_n*|`.
    pub total_cells: usize,
}

impl ThetaEstimate {
    pub fn fit(&self, which: Regression) -> Result<RegressionFit, DegenerateClass> {
        self.fits[which as usize]
    }

    /// The eight estimates in [`BarParams::NAMES`] order; `None` when unavailable.
    pub fn components(&self) -> [Option<f64>; 8] {
        let mut out = [None; 8];
        for (i, fit) in self.fits.iter().enumerate() {
            if let Ok(f) = fit {
                out[2 * i] = Some(f.slope);
                out[2 * i + 1] = Some(f.intercept);
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.fits.iter().all(|f| f.is_ok())
    }

    /// The estimate as raw parameter values, without the `|slope| < 1` check.
    pub fn theta(&self) -> Result<[f64; 8]> {
        let mut out = [0.0; 8];
        for (i, c) in self.components().into_iter().enumerate() {
            out[i] = c.ok_or(Error::Unavailable(BarParams::NAMES[i]))?;
        }
        Ok(out)
    }

    /// `name,value` lines; unavailable components are written as `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value\n");
        for (name, c) in BarParams::NAMES.iter().zip(self.components()) {
            match c {
                Some(v) => out.push_str(&format!("{name},{v:?}\n")),
                None => out.push_str(&format!("{name},NA\n")),
            }
        }
        out
    }
}

/// Regression points per class, class sizes and total cells.
type ClassPoints = ([Vec<(f64, f64)>; 4], [usize; 3], usize);

fn class_points(sample: &PopulationSample, n: u32) -> Result<ClassPoints> {
    let tree = sample.tree();
    let [both, new_only, old_only] = tree.class_indices(n)?;
    let pair = |idx: usize, pole: Pole| -> Result<(f64, f64)> {
        let d = tree.daughter_index(idx, pole).ok_or(Error::Unresolvable(tree.nodes()[idx].label.0))?;
        Ok((sample.value_at(idx), sample.value_at(d)))
    };
    let collect = |v: &[usize], pole| v.iter().map(|&i| pair(i, pole)).collect::<Result<Vec<_>>>();
    let points = [collect(&both, Pole::New)?, collect(&both, Pole::Old)?, collect(&new_only, Pole::New)?, collect(&old_only, Pole::Old)?];
    let sizes = [both.len(), new_only.len(), old_only.len()];
    Ok((points, sizes, tree.cumulative_size(n)?))
}

/// LSE from the observation of `T_{n+1}*`. Requires `n < max_depth`.
pub fn lse(sample: &PopulationSample, n: u32) -> Result<ThetaEstimate> {
    let (points, class_sizes, total_cells) = class_points(sample, n)?;
    Ok(ThetaEstimate { n, fits: points.map(|p| regress(&p)), class_sizes, total_cells })
}

/// Euclidean distance between a complete estimate and the truth.
pub fn estimation_error(est: &ThetaEstimate, truth: &BarParams) -> Result<f64> {
    let theta = est.theta()?;
    let sq = sum(theta.iter().zip(truth.to_array()).map(|(a, b)| (a - b) * (a - b)));
    Ok(sq.sqrt())
}

/// Bar averages over `T_n*` of the functionals behind the `alpha_0` error:
/// `g1 = (x y - x (alpha0 x + beta0)) 1_{S^3}`, `g2 = (y - alpha0 x - beta0) 1_{S^3}`,
/// `h1 = x 1_{S^3}`, `h2 = x^2 1_{S^3}`, with `y` the new-pole daughter value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionFunctionals {
    pub g1: f64,
    pub g2: f64,
    pub h1: f64,
    pub h2: f64,
    /// `|T_n^{1,0}| / |T_n*|`.
    pub both_fraction: f64,
    /// `|T_n^{1,0}| / |T_n*| * h2 - h1^2`.
    pub b_n: f64,
}

impl RegressionFunctionals {
    /// `alpha0_hat - alpha0` rebuilt from the functionals.
    pub fn alpha0_error(&self) -> f64 {
        (self.both_fraction * self.g1 - self.h1 * self.g2) / self.b_n
    }
}

pub fn regression_functionals(sample: &PopulationSample, n: u32, truth: &BarParams) -> Result<RegressionFunctionals> {
    let (points, class_sizes, total) = class_points(sample, n)?;
    let (a, b) = (truth.alpha0, truth.beta0);
    let mut acc = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    for &(x, y) in &points[0] {
        let resid = y - a * x - b;
        acc[0].add(x * resid);
        acc[1].add(resid);
        acc[2].add(x);
        acc[3].add(x * x);
    }
    let total = total as f64;
    let [g1, g2, h1, h2] = acc.map(|s| s.value() / total);
    let both_fraction = class_sizes[0] as f64 / total;
    Ok(RegressionFunctionals { g1, g2, h1, h2, both_fraction, b_n: both_fraction * h2 - h1 * h1 })
}

/// Population limit `p10^2 (mu2 - mu1^2)` of `B_n`.
pub fn b_n_target(law: &OffspringLaw, moments: &StationaryMoments) -> f64 {
    law.p10 * law.p10 * moments.variance()
}
