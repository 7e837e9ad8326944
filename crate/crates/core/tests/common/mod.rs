//! Exhaustive enumeration of a depth-2 BAR system with two-point noise.
//!
//! Written against the model definition only: no simulation code is reused.

#![allow(dead_code)]

/// Law, parameters, noise scales and root value of an enumerable system.
#[derive(Debug, Clone, Copy)]
pub struct System {
    pub p10: f64,
    pub p0: f64,
    pub p1: f64,
    /// `alpha0, beta0, alpha1, beta1, alpha0', beta0', alpha1', beta1'`.
    pub theta: [f64; 8],
    pub sigma: f64,
    pub rho: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub x0: f64,
}

/// One joint outcome of kinds and noise signs up to generation 2.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub prob: f64,
    pub generations: [Vec<f64>; 3],
}

impl System {
    pub fn mean(&self) -> f64 {
        2.0 * self.p10 + self.p0 + self.p1
    }

    /// Daughter values of one mother with their probabilities.
    fn daughters(&self, x: f64) -> Vec<(f64, Vec<f64>)> {
        let t = self.theta;
        let mut out = Vec::new();
        let p_none = 1.0 - self.p10 - self.p0 - self.p1;
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                let agree = if s1 == s2 { (1.0 + self.rho) / 2.0 } else { (1.0 - self.rho) / 2.0 };
                let p = self.p10 * 0.5 * agree;
                if p > 0.0 {
                    out.push((p, vec![t[0] * x + t[1] + self.sigma * s1, t[2] * x + t[3] + self.sigma * s2]));
                }
            }
        }
        for s in [-1.0, 1.0] {
            if self.p0 > 0.0 {
                out.push((self.p0 * 0.5, vec![t[4] * x + t[5] + self.sigma0 * s]));
            }
            if self.p1 > 0.0 {
                out.push((self.p1 * 0.5, vec![t[6] * x + t[7] + self.sigma1 * s]));
            }
        }
        if p_none > 1e-15 {
            out.push((p_none, vec![]));
        }
        out
    }

    /// Joint daughter generation of a list of mothers.
    fn next_generation(&self, mothers: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let mut acc = vec![(1.0, Vec::new())];
        for &x in mothers {
            let options = self.daughters(x);
            let mut next = Vec::with_capacity(acc.len() * options.len());
            for (p, vals) in &acc {
                for (q, d) in &options {
                    let mut v = vals.clone();
                    v.extend_from_slice(d);
                    next.push((p * q, v));
                }
            }
            acc = next;
        }
        acc
    }

    pub fn enumerate(&self) -> Vec<Outcome> {
        let mut out = Vec::new();
        for (p1, g1) in self.next_generation(&[self.x0]) {
            for (p2, g2) in self.next_generation(&g1) {
                out.push(Outcome { prob: p1 * p2, generations: [vec![self.x0], g1.clone(), g2] });
            }
        }
        out
    }

    /// Exact law of `sum_{G_r} f(X) / m^r` as `(value, probability)` atoms.
    pub fn tilde_law(&self, r: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        let norm = self.mean().powi(r as i32);
        self.enumerate().into_iter().map(|o| (o.generations[r].iter().map(|&x| f(x)).sum::<f64>() / norm, o.prob)).collect()
    }
}

/// `P(V > delta)` for a discrete law.
pub fn exceedance(law: &[(f64, f64)], delta: f64) -> f64 {
    law.iter().filter(|(v, _)| *v > delta).map(|(_, p)| p).sum()
}

/// `count` thresholds at midpoints between distinct atoms, spread over the support.
pub fn midpoint_grid(law: &[(f64, f64)], count: usize) -> Vec<f64> {
    let mut atoms: Vec<f64> = law.iter().map(|a| a.0).collect();
    atoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    atoms.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let gaps = atoms.len() - 1;
    (1..=count)
        .map(|i| {
            let j = i * gaps / (count + 1);
            0.5 * (atoms[j] + atoms[j + 1])
        })
        .collect()
}

/// Criterion system: law (0.5, 0.25, 0.25), two-point noise.
pub fn reference_system() -> System {
    System {
        p10: 0.5,
        p0: 0.25,
        p1: 0.25,
        theta: [0.5, 1.0, 0.3, 0.8, 0.4, 0.9, 0.2, 1.1],
        sigma: 0.3,
        rho: 0.2,
        sigma0: 0.2,
        sigma1: 0.4,
        x0: 0.5,
    }
}
