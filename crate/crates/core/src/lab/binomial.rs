use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
///
/// Interior counts use the `(1 - level)/2` tail quantiles of the Beta laws.
/// For `k = 0` the upper end is the one-sided `1 - (1 - level)^{1/n}` and for
/// `k = n` the lower end is `(1 - level)^{1/n}`.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Empty("binomial sample"));
    }
    if k > n {
        return Err(Error::Constraint(format!("{k} successes out of {n} trials")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Constraint(format!("confidence level {level} outside (0, 1)")));
    }
    let miss = 1.0 - level;
    let nf = n as f64;
    if k == 0 {
        return Ok((0.0, 1.0 - miss.powf(1.0 / nf)));
    }
    if k == n {
        return Ok((miss.powf(1.0 / nf), 1.0));
    }
    let kf = k as f64;
    let lo = beta_quantile(kf, nf - kf + 1.0, miss / 2.0);
    let hi = beta_quantile(kf + 1.0, nf - kf, 1.0 - miss / 2.0);
    Ok((lo, hi))
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta.
fn beta_quantile(a: f64, b: f64, prob: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
