//! Ordinary least-squares line fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sum::sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual sum of squares.
    pub residual: f64,
}

/// Least-squares line `y = slope x + intercept` through at least two points
/// with distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Constraint(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = sum(xs.iter().copied()) / n;
    let my = sum(ys.iter().copied()) / n;
    let sxx = sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    if !(sxx > 0.0) {
        return Err(Error::Constraint("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = sum(xs.iter().zip(ys).map(|(x, y)| {
        let e = y - slope * x - intercept;
        e * e
    }));
    Ok(LinearFit { slope, intercept, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear() {
        let f = linear_fit(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-15);
        assert!(f.intercept.abs() < 1e-15);
        assert!(f.residual < 1e-28);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(linear_fit(&[1.0, 2.0], &[1.0]).is_err());
    }
}
