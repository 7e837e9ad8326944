//! Closed-form deviation bounds.
//!
//! Every bound is evaluated in log space; [`Bound::value`] exponentiates once.
//! Constants are explicit inputs (default `1`).

use serde::{Deserialize, Serialize};

use super::regime::{classify_regime, RegimeLabel};
use crate::error::{Error, Result};
use crate::stats::SetKind;
use crate::tree::{expected_sizes, OffspringLaw};

/// Constants of the deviation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConstants {
    /// Ergodicity constant of the embedded chain.
    pub c: f64,
    pub c_prime: f64,
    pub c_second: f64,
    pub c0: f64,
    /// `0` or `1`.
    pub k0: u8,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `1/2` or `1`.
    pub p: f64,
    /// `0`, `1/2` or `1`.
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { c: 1.0, c_prime: 1.0, c_second: 1.0, c0: 1.0, k0: 0, c1: 1.0, c2: 1.0, c3: 1.0, p: 1.0, q: 1.0, a: 1.0, b: 1.0, gamma: 1.0 }
    }
}

impl BoundConstants {
    /// Every violated requirement, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("c", self.c),
            ("c_prime", self.c_prime),
            ("c_second", self.c_second),
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("a", self.a),
            ("b", self.b),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} = {v} must be a positive finite number"));
            }
        }
        if self.k0 > 1 {
            out.push(format!("k0 = {} must be 0 or 1", self.k0));
        }
        if self.p != 0.5 && self.p != 1.0 {
            out.push(format!("p = {} must be 1/2 or 1", self.p));
        }
        if self.q != 0.0 && self.q != 0.5 && self.q != 1.0 {
            out.push(format!("q = {} must be 0, 1/2 or 1", self.q));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(v) => Err(Error::Constraint(v)),
            None => Ok(()),
        }
    }

    /// `b < a / (delta + 1)`, the constraint of the conditional bounds.
    pub fn check_conditioning(&self, delta: f64) -> Result<()> {
        let limit = self.a / (delta + 1.0);
        if self.b < limit {
            Ok(())
        } else {
            Err(Error::Constraint(format!(
                "conditional deviation bound (W >= a) requires b < a/(delta+1): b = {}, a/(delta+1) = {limit}",
                self.b
            )))
        }
    }

    /// `gamma < min(c1/(1+delta), c1/(1+sqrt delta))`, the constraint of the estimator bound.
    pub fn check_gamma(&self, delta: f64) -> Result<()> {
        let limit = (self.c1 / (1.0 + delta)).min(self.c1 / (1.0 + delta.sqrt()));
        if self.gamma < limit {
            Ok(())
        } else {
            Err(Error::Constraint(format!(
                "estimator deviation bound requires gamma < min(c1/(1+delta), c1/(1+sqrt(delta))): gamma = {}, limit = {limit}",
                self.gamma
            )))
        }
    }
}

/// A positive bound value kept as its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub ln: f64,
    pub value: f64,
}

impl Bound {
    pub fn from_ln(ln: f64) -> Self {
        Self { ln, value: ln.exp() }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Sum of two bounds.
    pub fn plus(self, other: Bound) -> Bound {
        let (hi, lo) = if self.ln >= other.ln { (self.ln, other.ln) } else { (other.ln, self.ln) };
        if hi == f64::NEG_INFINITY {
            return Bound::from_ln(hi);
        }
        Bound::from_ln(hi + (lo - hi).exp().ln_1p())
    }

    fn scaled(self, factor: f64) -> Bound {
        Bound::from_ln(self.ln + factor.ln())
    }
}

/// A bound, or the depth the bound starts to hold beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum BoundOutcome {
    Value(Bound),
    /// The bound requires a depth strictly greater than `threshold`.
    Inapplicable {
        threshold: f64,
    },
}

impl BoundOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoundOutcome::Value(b) => Some(b.value),
            BoundOutcome::Inapplicable { .. } => None,
        }
    }

    pub fn bound(&self) -> Option<Bound> {
        match *self {
            BoundOutcome::Value(b) => Some(b),
            BoundOutcome::Inapplicable { .. } => None,
        }
    }

    fn map(self, f: impl FnOnce(Bound) -> Bound) -> Self {
        match self {
            BoundOutcome::Value(b) => BoundOutcome::Value(f(b)),
            other => other,
        }
    }
}

/// `(m^2/2)^r` for generations, `(m^2/2)^{r+1}` for subtrees.
pub fn h_r(m: f64, r: u32, kind: SetKind) -> f64 {
    ln_h_r(m, r, kind).exp()
}

fn ln_h_r(m: f64, r: u32, kind: SetKind) -> f64 {
    let e = match kind {
        SetKind::Generation => r,
        SetKind::Tree => r + 1,
    };
    e as f64 * (m * m / 2.0).ln()
}

/// `log(delta/c0) / log(alpha) - k0`.
pub fn r0_threshold(delta: f64, alpha: f64, constants: &BoundConstants) -> Result<f64> {
    threshold(delta, alpha, constants.c0, constants.k0 as f64)
}

fn threshold(x: f64, alpha: f64, c0: f64, k0: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha, "(0, 1)"));
    }
    if !(x > 0.0) || !(c0 > 0.0) {
        return Err(Error::Constraint(format!("threshold needs delta > 0 and c0 > 0, got {x} and {c0}")));
    }
    Ok((x / c0).ln() / alpha.ln() - k0)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Constraint(format!("delta = {delta} must be positive")))
    }
}

/// Shared case split, with deviation `x` and threshold shift `k0`.
fn case_ln(x: f64, r: u32, m: f64, alpha: f64, kind: SetKind, k: &BoundConstants, k0: f64) -> Result<BoundOutcome> {
    let regime = classify_regime(m, alpha)?;
    let (cp, cs) = (k.c_prime, k.c_second);
    let x2 = x * x;
    let lh = ln_h_r(m, r, kind);
    let rf = r as f64;
    let applicable = |floor: f64| -> Result<Option<f64>> {
        let r0 = threshold(x, alpha, k.c0, k0)?.max(floor);
        Ok(if rf > r0 { None } else { Some(r0) })
    };
    let ln = match regime {
        RegimeLabel::SubUnit => cs * x - cp * x2 * lh.exp(),
        RegimeLabel::UnitBoundary => match kind {
            SetKind::Generation => cs * x - cp * x2 * lh.exp(),
            SetKind::Tree => cs * x * (rf + 1.0) - cp * x2 * lh.exp(),
        },
        RegimeLabel::Intermediate => {
            if let Some(t) = applicable(f64::NEG_INFINITY)? {
                return Ok(BoundOutcome::Inapplicable { threshold: t });
            }
            -cp * x2 * lh.exp()
        }
        RegimeLabel::Sqrt2Boundary => {
            if let Some(t) = applicable(0.0)? {
                return Ok(BoundOutcome::Inapplicable { threshold: t });
            }
            -cp * x2 * (lh - rf.ln()).exp()
        }
        RegimeLabel::SuperSqrt2 => {
            if let Some(t) = applicable(0.0)? {
                return Ok(BoundOutcome::Inapplicable { threshold: t });
            }
            -cp * x2 * (-2.0 * rf * alpha.ln()).exp()
        }
    };
    Ok(BoundOutcome::Value(Bound::from_ln(ln)))
}

/// Bound on `P(tilde M_{H_r*}(f) > delta)` for centered `f`.
pub fn bound_centered(delta: f64, r: u32, m: f64, alpha: f64, kind: SetKind, constants: &BoundConstants) -> Result<BoundOutcome> {
    check_delta(delta)?;
    case_ln(delta, r, m, alpha, kind, constants, constants.k0 as f64)
}

fn a_r_ln(x: f64, r: u32, m: f64, kind: SetKind, k: &BoundConstants) -> Result<f64> {
    let x23 = x.powf(2.0 / 3.0);
    Ok(match kind {
        SetKind::Generation => k.c_prime.ln() - k.c_second * x23 * (r as f64 * m.ln() / 3.0).exp(),
        SetKind::Tree => {
            let (_, t) = expected_sizes(m, r)?;
            let rp1 = r as f64 + 1.0;
            k.c_prime * x23 - k.c_second * x23 * (t / (rp1 * rp1)).cbrt()
        }
    })
}

/// Galton-Watson fluctuation term `A_r`. Requires (H3).
pub fn a_r_term(delta: f64, r: u32, law: &OffspringLaw, kind: SetKind, constants: &BoundConstants) -> Result<Bound> {
    law.require_h3()?;
    check_delta(delta)?;
    Ok(Bound::from_ln(a_r_ln(delta, r, law.mean(), kind, constants)?))
}

/// Bound on `P(tilde M_{H_r*}(f) - <mu,f> W > delta)`: the centered bound plus `A_r`.
pub fn bound_uncentered(
    delta: f64,
    r: u32,
    law: &OffspringLaw,
    alpha: f64,
    kind: SetKind,
    constants: &BoundConstants,
) -> Result<BoundOutcome> {
    let a = a_r_term(delta, r, law, kind, constants)?;
    Ok(bound_centered(delta, r, law.mean(), alpha, kind, constants)?.map(|b| b.plus(a)))
}

/// Bound on `P(bar M_{H_r*}(f) - <mu,f> > delta | W >= a)`: `delta` replaced by
/// `delta b` throughout, threshold included. Requires `b < a/(delta+1)`.
pub fn bound_conditional(
    delta: f64,
    r: u32,
    law: &OffspringLaw,
    alpha: f64,
    kind: SetKind,
    constants: &BoundConstants,
) -> Result<BoundOutcome> {
    check_delta(delta)?;
    constants.check_conditioning(delta)?;
    let x = delta * constants.b;
    let a = a_r_term(x, r, law, kind, constants)?;
    Ok(case_ln(x, r, law.mean(), alpha, kind, constants, constants.k0 as f64)?.map(|b| b.plus(a)))
}

/// Bound on `P(||theta_hat_n - theta|| > delta | W >= a)`, with deviation
/// `x = gamma^q delta^p b` and threshold `n0 = log(x/c0)/log(alpha) - 1`.
pub fn bound_theta(delta: f64, n: u32, law: &OffspringLaw, alpha: f64, constants: &BoundConstants) -> Result<BoundOutcome> {
    check_delta(delta)?;
    constants.validate()?;
    constants.check_conditioning(delta)?;
    constants.check_gamma(delta)?;
    law.require_h3()?;
    let x = constants.gamma.powf(constants.q) * delta.powf(constants.p) * constants.b;
    let main = case_ln(x, n, law.mean(), alpha, SetKind::Tree, constants, 1.0)?;
    let a = Bound::from_ln(a_r_ln(x, n, law.mean(), SetKind::Tree, constants)?).scaled(constants.c3);
    Ok(main.map(|b| b.scaled(constants.c2).plus(a)))
}

/// Which constant a calibration adjusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibratedConstant {
    CSecond,
    CPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub constants: BoundConstants,
    pub adjusted: CalibratedConstant,
    pub pivot: u32,
    pub target: f64,
}

/// Tightest constants for which [`bound_centered`] at depth `pivot` is at
/// least `target`.
///
/// With a prefactor (`m alpha <= 1`) `c'` is kept and `c''` is the smallest
/// admissible value; otherwise `c'` is the largest admissible value.
pub fn calibrate_centered(
    target: f64,
    delta: f64,
    pivot: u32,
    m: f64,
    alpha: f64,
    kind: SetKind,
    base: &BoundConstants,
) -> Result<Calibration> {
    check_delta(delta)?;
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Constraint(format!("target probability {target} outside [0, 1]")));
    }
    let regime = classify_regime(m, alpha)?;
    let mut k = *base;
    let lh = ln_h_r(m, pivot, kind);
    let ln_t = target.ln();
    let adjusted = if regime.has_prefactor() {
        let factor = match (regime, kind) {
            (RegimeLabel::UnitBoundary, SetKind::Tree) => delta * (pivot as f64 + 1.0),
            _ => delta,
        };
        let needed = (ln_t + k.c_prime * delta * delta * lh.exp()) / factor;
        k.c_second = needed.max(f64::EPSILON);
        CalibratedConstant::CSecond
    } else {
        k.c_prime = 1.0;
        let unit = match bound_centered(delta, pivot, m, alpha, kind, &k)? {
            BoundOutcome::Value(b) => -b.ln,
            BoundOutcome::Inapplicable { threshold } => {
                return Err(Error::Constraint(format!("pivot depth {pivot} does not exceed the threshold {threshold}")))
            }
        };
        k.c_prime = (-ln_t / unit).clamp(f64::EPSILON, f64::MAX);
        CalibratedConstant::CPrime
    };
    Ok(Calibration { constants: k, adjusted, pivot, target })
}
