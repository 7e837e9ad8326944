//! The embedded single-lineage chain.
//!
//! Following one uniformly chosen alive daughter at each step gives a Markov
//! chain with kernel `(P0* + P1*) / m`. For the BAR model it is a random
//! coefficient autoregression `Y' = a Y + b' + s e` whose coefficients
//! `(a, b', s)` are drawn from four atoms weighted by `p10/m, p10/m, p0/m, p1/m`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::bar::{BarParams, NoiseMode, NoiseSource, NoiseSpec, PairCoordinate};
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::rng::{self, Domain};
use crate::sum::CompensatedSum;
use crate::tree::OffspringLaw;

/// Default burn-in of long-run averages.
pub const DEFAULT_BURN_IN: u64 = 1_000;
/// Default length of long-run averages.
pub const DEFAULT_LENGTH: u64 = 1_000_000;

const BATCHES: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub slope: f64,
    pub intercept: f64,
    pub scale: f64,
    pub weight: f64,
    #[serde(skip)]
    pub source: NoiseSource,
}

/// Law of the chain's random coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientLaw {
    atoms: [Atom; 4],
    noise: NoiseSpec,
}

impl CoefficientLaw {
    pub fn new(params: &BarParams, noise: &NoiseSpec, law: &OffspringLaw) -> Result<Self> {
        params.validate()?;
        noise.validate()?;
        law.validate()?;
        let m = law.mean();
        if !(m > 0.0) {
            return Err(Error::NotSupercritical(m));
        }
        let atom = |slope, intercept, source, p: f64| Atom { slope, intercept, scale: noise.scale(source), weight: p / m, source };
        Ok(Self {
            atoms: [
                atom(params.alpha0, params.beta0, NoiseSource::Pair(PairCoordinate::First), law.p10),
                atom(params.alpha1, params.beta1, NoiseSource::Pair(PairCoordinate::Second), law.p10),
                atom(params.alpha0p, params.beta0p, NoiseSource::NewOnly, law.p0),
                atom(params.alpha1p, params.beta1p, NoiseSource::OldOnly, law.p1),
            ],
            noise: *noise,
        })
    }

    pub fn atoms(&self) -> &[Atom; 4] {
        &self.atoms
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn weights(&self) -> [f64; 4] {
        self.atoms.map(|a| a.weight)
    }

    /// Index of a randomly chosen atom.
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, a) in self.atoms.iter().enumerate() {
            if a.weight <= 0.0 {
                continue;
            }
            acc += a.weight;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    pub fn draw_coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> &Atom {
        &self.atoms[self.draw_index(rng)]
    }

    /// `E[e^2]` for the standardized noise of `source`, truncation included.
    pub fn noise_second_moment(&self, source: NoiseSource) -> f64 {
        standardized_second_moment(&self.noise, source)
    }

    pub fn moment_bars(&self) -> MomentBars {
        let mut bars = MomentBars::default();
        for a in &self.atoms {
            let s2 = a.scale * a.scale * self.noise_second_moment(a.source);
            bars.alpha += a.weight * a.slope;
            bars.alpha2 += a.weight * a.slope * a.slope;
            bars.beta += a.weight * a.intercept;
            bars.bprime2 += a.weight * a.intercept * a.intercept;
            bars.sigma2 += a.weight * s2;
            bars.alpha_beta += a.weight * a.slope * a.intercept;
        }
        bars.beta2 = bars.bprime2 + bars.sigma2;
        bars
    }

    /// One step of the chain from `y`.
    pub fn step<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> Result<f64> {
        let atom = *self.draw_coefficients(rng);
        let noise = self.noise.sample_source(atom.source, rng)?;
        Ok(atom.slope * y + atom.intercept + noise)
    }
}

/// `a y + b' + s e`.
pub fn chain_step(y: f64, slope: f64, intercept: f64, scale: f64, e: f64) -> f64 {
    slope * y + intercept + scale * e
}

/// First and second moments of the coefficient law, with `b = b' + s e`.
///
/// `sigma2` is `E[s^2 e^2]`: the truncated second moment of the noise, not
/// the nominal `sigma^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MomentBars {
    pub alpha: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub beta2: f64,
    pub alpha_beta: f64,
    pub sigma2: f64,
    pub bprime2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryMoments {
    pub mu1: f64,
    pub mu2: f64,
}

impl StationaryMoments {
    pub fn variance(&self) -> f64 {
        self.mu2 - self.mu1 * self.mu1
    }
}

/// Mean and second moment of the stationary law.
///
/// `mu1 = beta / (1 - alpha)` and, from `Z = a Z' + b` with `Z'` independent of
/// `(a, b)`, `mu2 = (2 alpha_beta mu1 + beta2) / (1 - alpha2)`. A commonly
/// printed variant adds `alpha2` to that numerator; long-run chain averages
/// agree with the expression used here.
pub fn stationary_moments(params: &BarParams, noise: &NoiseSpec, law: &OffspringLaw) -> Result<StationaryMoments> {
    law.require_h3()?;
    let bars = CoefficientLaw::new(params, noise, law)?.moment_bars();
    moments_from_bars(&bars)
}

pub fn moments_from_bars(bars: &MomentBars) -> Result<StationaryMoments> {
    if bars.alpha2 >= 1.0 {
        return Err(Error::InvalidParams(format!("E[a^2] = {} must be < 1", bars.alpha2)));
    }
    let mu1 = bars.beta / (1.0 - bars.alpha);
    let mu2 = (2.0 * bars.alpha_beta * mu1 + bars.beta2) / (1.0 - bars.alpha2);
    Ok(StationaryMoments { mu1, mu2 })
}

/// Largest absolute slope; the geometric ergodicity rate of the chain.
pub fn ergodicity_alpha(params: &BarParams) -> f64 {
    params.max_abs_slope()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[Z^2 | |Z| <= k]` for a standard normal `Z`.
pub fn truncated_normal_second_moment(k: f64) -> f64 {
    let mass = 2.0 * std_normal_cdf(k) - 1.0;
    1.0 - 2.0 * k * std_normal_pdf(k) / mass
}

/// `E[Z1^2 | |Z1| <= k, |Z2| <= k]` for standard normals with correlation `rho`.
pub fn truncated_pair_second_moment(rho: f64, k: f64) -> f64 {
    if rho == 0.0 {
        return truncated_normal_second_moment(k);
    }
    let c = (1.0 - rho * rho).sqrt();
    // P(|rho z + c Z2| <= k) given Z1 = z
    let inner = |z: f64| std_normal_cdf((k - rho * z) / c) - std_normal_cdf((-k - rho * z) / c);
    let num = simpson(|z| z * z * std_normal_pdf(z) * inner(z), -k, k, 20_000);
    let den = simpson(|z| std_normal_pdf(z) * inner(z), -k, k, 20_000);
    num / den
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = CompensatedSum::new();
    acc.add(f(a));
    acc.add(f(b));
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * f(a + i as f64 * h));
    }
    acc.value() * h / 3.0
}

fn standardized_second_moment(noise: &NoiseSpec, source: NoiseSource) -> f64 {
    match noise.mode {
        NoiseMode::Noiseless => 0.0,
        NoiseMode::TwoPoint => 1.0,
        NoiseMode::Gaussian => match source {
            NoiseSource::Pair(_) => truncated_pair_second_moment(noise.rho, noise.trunc_k),
            _ => truncated_normal_second_moment(noise.trunc_k),
        },
    }
}

/// The single-lineage chain.
#[derive(Debug, Clone)]
pub struct EmbeddedChain {
    law: CoefficientLaw,
}

impl EmbeddedChain {
    pub fn new(params: &BarParams, noise: &NoiseSpec, law: &OffspringLaw) -> Result<Self> {
        Ok(Self { law: CoefficientLaw::new(params, noise, law)? })
    }

    pub fn coefficients(&self) -> &CoefficientLaw {
        &self.law
    }

    pub fn step<R: Rng + ?Sized>(&self, y: f64, rng: &mut R) -> Result<f64> {
        self.law.step(y, rng)
    }

    /// Runs `steps` transitions from `start` and returns the final state.
    pub fn run<R: Rng + ?Sized>(&self, start: f64, steps: u64, rng: &mut R) -> Result<f64> {
        let mut y = start;
        for _ in 0..steps {
            y = self.step(y, rng)?;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongRunConfig {
    pub burn_in: u64,
    pub length: u64,
}

impl Default for LongRunConfig {
    fn default() -> Self {
        Self { burn_in: DEFAULT_BURN_IN, length: DEFAULT_LENGTH }
    }
}

/// Time average of a function along one long trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongRunEstimate {
    pub mean: f64,
    /// Batch-means standard error.
    pub se: f64,
    pub burn_in: u64,
    pub length: u64,
}

/// Long-run averages of several functions along one trajectory.
pub fn long_run_averages<R: Rng + ?Sized>(
    chain: &EmbeddedChain,
    functions: &[&dyn Fn(f64) -> f64],
    start: f64,
    config: LongRunConfig,
    rng: &mut R,
) -> Result<Vec<LongRunEstimate>> {
    if config.length < BATCHES {
        return Err(Error::Constraint(format!("long-run length must be at least {BATCHES}")));
    }
    let mut y = chain.run(start, config.burn_in, rng)?;
    let batch_len = config.length / BATCHES;
    let used = batch_len * BATCHES;
    let mut batch_means = vec![Vec::with_capacity(BATCHES as usize); functions.len()];
    for _ in 0..BATCHES {
        let mut sums = vec![CompensatedSum::new(); functions.len()];
        for _ in 0..batch_len {
            y = chain.step(y, rng)?;
            for (s, f) in sums.iter_mut().zip(functions) {
                s.add(f(y));
            }
        }
        for (bm, s) in batch_means.iter_mut().zip(&sums) {
            bm.push(s.value() / batch_len as f64);
        }
    }
    Ok(batch_means
        .into_iter()
        .map(|bm| {
            let b = bm.len() as f64;
            let mean = crate::sum::sum(bm.iter().copied()) / b;
            let var = crate::sum::sum(bm.iter().map(|v| (v - mean) * (v - mean))) / (b - 1.0);
            LongRunEstimate { mean, se: (var / b).sqrt(), burn_in: config.burn_in, length: used }
        })
        .collect())
}

/// One point of an empirical `Q^k` decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapPoint {
    pub k: u32,
    /// `max_x |mean_x f(Y_k) - <mu, f>|`.
    pub gap: f64,
    /// Monte Carlo noise level of `gap`, including the error of `<mu, f>`.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCurve {
    pub points: Vec<GapPoint>,
    pub reference: f64,
}

impl GapCurve {
    /// `k,gap` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,gap\n");
        for p in &self.points {
            out.push_str(&format!("{},{:?}\n", p.k, p.gap));
        }
        out
    }
}

/// Empirical `|Q^k f(x) - <mu, f>|` maximised over starting points.
///
/// Each start `x_grid[j]` runs `n_rep` independent chains on stream
/// `(seed, ChainGap, j)`.
pub fn empirical_qk_gap(
    chain: &EmbeddedChain,
    f: &(dyn Fn(f64) -> f64 + Sync),
    x_grid: &[f64],
    k_max: u32,
    n_rep: u64,
    reference: &LongRunEstimate,
    seed: u64,
) -> Result<GapCurve> {
    if x_grid.is_empty() {
        return Err(Error::Empty("starting grid"));
    }
    if n_rep < 2 {
        return Err(Error::Constraint("n_rep must be at least 2".into()));
    }
    let per_start: Vec<Vec<(f64, f64)>> = x_grid
        .par_iter()
        .enumerate()
        .map(|(j, &x)| {
            let mut rng = rng::stream(seed, Domain::ChainGap, j as u64);
            let mut sums = vec![CompensatedSum::new(); k_max as usize + 1];
            let mut squares = vec![CompensatedSum::new(); k_max as usize + 1];
            for _ in 0..n_rep {
                let mut y = x;
                for k in 0..=k_max as usize {
                    if k > 0 {
                        y = chain.step(y, &mut rng)?;
                    }
                    let v = f(y);
                    sums[k].add(v);
                    squares[k].add(v * v);
                }
            }
            let n = n_rep as f64;
            Ok(sums
                .iter()
                .zip(&squares)
                .map(|(s, q)| {
                    let mean = s.value() / n;
                    let var = ((q.value() / n - mean * mean) * n / (n - 1.0)).max(0.0);
                    (mean, (var / n).sqrt())
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let points = (0..=k_max)
        .map(|k| {
            let (gap, se) = per_start
                .iter()
                .map(|curve| curve[k as usize])
                .map(|(mean, se)| ((mean - reference.mean).abs(), se))
                .fold((f64::NEG_INFINITY, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best });
            GapPoint { k, gap, noise: (se * se + reference.se * reference.se).sqrt() }
        })
        .collect();
    Ok(GapCurve { points, reference: reference.mean })
}

/// Geometric decay rate fitted to a gap curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub log_slope: f64,
    pub points_used: usize,
}

/// Fits `gap(k) ~ C rate^k` by least squares on `log gap` over `k <= k_max`.
///
/// Only the leading run of points whose gap exceeds `noise_multiple` times its
/// noise level is used; the tail below the Monte Carlo floor carries no rate
/// information.
pub fn fit_geometric_rate(curve: &GapCurve, k_max: u32, noise_multiple: f64) -> Result<RateFit> {
    let usable: Vec<&GapPoint> =
        curve.points.iter().filter(|p| p.k <= k_max).take_while(|p| p.gap > 0.0 && p.gap > noise_multiple * p.noise).collect();
    if usable.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: usable.len() });
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.k as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.gap.ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(RateFit { rate: fit.slope.exp(), log_slope: fit.slope, points_used: usable.len() })
}
