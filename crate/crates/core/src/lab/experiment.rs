//! Seeded Monte Carlo estimates of deviation probabilities.
//!
//! Replicate `i` of an experiment draws everything from
//! `rng::stream(seed, domain, i)`, so per-replicate outcomes do not depend on
//! how replicates are spread over workers. Counts are merged by addition.
//! One simulated replicate serves every `(delta, r)` cell of the grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binomial::clopper_pearson;
use crate::bar::{simulate_population, BarParams, InitialLaw, NoiseSpec, PopulationSample, DEFAULT_DEPTH_CAP};
use crate::error::{Error, Result};
use crate::lse::{estimation_error, lse};
use crate::rng::{self, Domain, StreamRng};
use crate::stats::{bar_avg, m_sum, normalized_size, NodeFunction, NodeSet, SetKind};
use crate::tree::{extend_generation_sizes, sample_generation_sizes, GwTree, OffspringLaw};

/// Default gap between an observation depth and the depth of the `W` proxy.
pub const DEFAULT_W_OFFSET: u32 = 6;
/// Confidence level of reported intervals.
pub const CONFIDENCE: f64 = 0.95;

/// Offspring law, BAR parameters, noise and root law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub law: OffspringLaw,
    pub params: BarParams,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub init: InitialLaw,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        self.params.validate()?;
        self.noise.validate()?;
        self.init.validate()
    }

    /// Samples a tree of depth `depth` and attaches BAR values.
    pub fn sample<R: rand::Rng + ?Sized>(&self, depth: u32, rng: &mut R) -> Result<PopulationSample> {
        let tree = GwTree::sample(&self.law, depth, rng)?;
        simulate_population(tree, &self.params, &self.noise, &self.init, rng)
    }
}

/// Exceedance frequency with its exact 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationEstimate {
    pub delta: f64,
    pub depth: u32,
    /// Replicates simulated.
    pub n_rep: u64,
    /// Replicates entering the frequency; below `n_rep` only under conditioning.
    pub n_used: u64,
    pub k_exceed: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl DeviationEstimate {
    pub fn from_counts(delta: f64, depth: u32, n_rep: u64, n_used: u64, k_exceed: u64, seed: u64) -> Result<Self> {
        let (ci_low, ci_high) = clopper_pearson(k_exceed, n_used, CONFIDENCE)?;
        Ok(Self { delta, depth, n_rep, n_used, k_exceed, p_hat: k_exceed as f64 / n_used as f64, ci_low, ci_high, seed })
    }

    /// Binomial standard error `sqrt(p (1 - p) / n)` at probability `p`.
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.n_used as f64).sqrt()
    }
}

/// Conditional frequency, or the record that no replicate met the condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ConditionalEstimate {
    Estimate(DeviationEstimate),
    NoMass { delta: f64, depth: u32, n_rep: u64, seed: u64 },
}

impl ConditionalEstimate {
    fn from_counts(delta: f64, depth: u32, n_rep: u64, n_used: u64, k_exceed: u64, seed: u64) -> Result<Self> {
        if n_used == 0 {
            Ok(ConditionalEstimate::NoMass { delta, depth, n_rep, seed })
        } else {
            DeviationEstimate::from_counts(delta, depth, n_rep, n_used, k_exceed, seed).map(ConditionalEstimate::Estimate)
        }
    }

    pub fn estimate(&self) -> Result<&DeviationEstimate> {
        match self {
            ConditionalEstimate::Estimate(e) => Ok(e),
            ConditionalEstimate::NoMass { .. } => Err(Error::NoMass),
        }
    }
}

/// Inputs of [`mc_deviation`] and [`mc_conditional_deviation`].
#[derive(Debug, Clone)]
pub struct DeviationSpec {
    pub model: ModelSpec,
    pub function: NodeFunction,
    pub deltas: Vec<f64>,
    pub depths: Vec<u32>,
    pub n_rep: u64,
    pub set_kind: SetKind,
    /// `<mu, f>`; when set, `<mu, f> W_proxy` is subtracted from tilde averages.
    pub centering: Option<f64>,
    pub w_offset: u32,
    pub seed: u64,
}

fn check_grid(deltas: &[f64], depths: &[u32], n_rep: u64) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::Empty("delta grid"));
    }
    if depths.is_empty() {
        return Err(Error::Empty("depth grid"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::Constraint(format!("delta = {d} must be positive")));
    }
    if n_rep == 0 {
        return Err(Error::Constraint("n_rep must be positive".into()));
    }
    Ok(())
}

impl DeviationSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_grid(&self.deltas, &self.depths, self.n_rep)?;
        let depth = self.simulation_depth();
        if depth > DEFAULT_DEPTH_CAP {
            return Err(Error::DepthCap { depth, cap: DEFAULT_DEPTH_CAP });
        }
        Ok(())
    }

    fn max_depth(&self) -> u32 {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    /// Triangle functions read one generation beyond the deepest `r`.
    fn simulation_depth(&self) -> u32 {
        self.max_depth() + matches!(self.function, NodeFunction::Triangle(_)) as u32
    }
}

/// Generation sizes `0..=up_to`, continued past the tree with the count process.
fn size_path(tree: &GwTree, up_to: u32, rng: &mut StreamRng) -> Result<Vec<u64>> {
    let d = tree.max_depth();
    let mut sizes: Vec<u64> = (0..=d.min(up_to)).map(|r| tree.generation_size(r).map(|s| s as u64)).collect::<Result<_>>()?;
    if up_to > d {
        let frontier = tree.frontier_offspring();
        sizes.push(frontier);
        sizes.extend(extend_generation_sizes(tree.law(), frontier, up_to - d - 1, rng)?);
    }
    Ok(sizes)
}

fn merge(mut a: Vec<u64>, b: Vec<u64>) -> Result<Vec<u64>> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    Ok(a)
}

/// Sums per-replicate count vectors of length `cells` over `0..n_rep`.
fn parallel_counts<F>(n_rep: u64, cells: usize, per_replicate: F) -> Result<Vec<u64>>
where
    F: Fn(u64, &mut [u64]) -> Result<()> + Sync,
{
    (0..n_rep)
        .into_par_iter()
        .try_fold(
            || vec![0u64; cells],
            |mut acc, i| {
                per_replicate(i, &mut acc)?;
                Ok(acc)
            },
        )
        .try_reduce(|| vec![0u64; cells], merge)
}

struct Replicate {
    sample: PopulationSample,
    sizes: Vec<u64>,
}

fn run_replicate(spec: &DeviationSpec, i: u64) -> Result<Replicate> {
    let mut rng = rng::stream(spec.seed, Domain::Replicate, i);
    let sample = spec.model.sample(spec.simulation_depth(), &mut rng)?;
    let sizes = size_path(sample.tree(), spec.max_depth() + spec.w_offset, &mut rng)?;
    Ok(Replicate { sample, sizes })
}

/// `P(tilde M_{H_r*}(f) - c W_{r+w} > delta)` for every `(delta, r)`, with
/// `c = <mu, f>` when centered and `0` otherwise. Delta-major order.
pub fn mc_deviation(spec: &DeviationSpec) -> Result<Vec<DeviationEstimate>> {
    spec.validate()?;
    let m = spec.model.law.mean();
    let nd = spec.depths.len();
    let counts = parallel_counts(spec.n_rep, spec.deltas.len() * nd, |i, acc| {
        let rep = run_replicate(spec, i)?;
        for (j, &r) in spec.depths.iter().enumerate() {
            let set = NodeSet::of_kind(rep.sample.tree(), spec.set_kind, r)?;
            let expected = set.expected_size(m)?;
            let mut stat = m_sum(&rep.sample, &set, &spec.function)? / expected;
            if let Some(mu) = spec.centering {
                let w_depth = r + spec.w_offset;
                stat -= mu * normalized_size(rep.sizes[w_depth as usize], m, w_depth);
            }
            for (k, &delta) in spec.deltas.iter().enumerate() {
                if stat > delta {
                    acc[k * nd + j] += 1;
                }
            }
        }
        Ok(())
    })?;
    assemble(&spec.deltas, &spec.depths, spec.n_rep, spec.seed, |cell, _| (spec.n_rep, counts[cell]))
}

fn assemble(
    deltas: &[f64],
    depths: &[u32],
    n_rep: u64,
    seed: u64,
    counts: impl Fn(usize, usize) -> (u64, u64),
) -> Result<Vec<DeviationEstimate>> {
    let nd = depths.len();
    let mut out = Vec::with_capacity(deltas.len() * nd);
    for (k, &delta) in deltas.iter().enumerate() {
        for (j, &r) in depths.iter().enumerate() {
            let (used, exceed) = counts(k * nd + j, j);
            out.push(DeviationEstimate::from_counts(delta, r, n_rep, used, exceed, seed)?);
        }
    }
    Ok(out)
}

/// `P(bar M_{H_r*}(f) - <mu, f> > delta | W_{r+w} >= a)`, with `<mu, f>` the
/// spec's centering (zero when unset). Delta-major order.
pub fn mc_conditional_deviation(spec: &DeviationSpec, a: f64) -> Result<Vec<ConditionalEstimate>> {
    spec.validate()?;
    if !(a > 0.0) {
        return Err(Error::Constraint(format!("conditioning level a = {a} must be positive")));
    }
    let m = spec.model.law.mean();
    let nd = spec.depths.len();
    let cells = spec.deltas.len() * nd;
    let mu = spec.centering.unwrap_or(0.0);
    let counts = parallel_counts(spec.n_rep, cells + nd, |i, acc| {
        let rep = run_replicate(spec, i)?;
        for (j, &r) in spec.depths.iter().enumerate() {
            let w_depth = r + spec.w_offset;
            if normalized_size(rep.sizes[w_depth as usize], m, w_depth) < a {
                continue;
            }
            acc[cells + j] += 1;
            let set = NodeSet::of_kind(rep.sample.tree(), spec.set_kind, r)?;
            let stat = bar_avg(&rep.sample, &set, &spec.function)? - mu;
            for (k, &delta) in spec.deltas.iter().enumerate() {
                if stat > delta {
                    acc[k * nd + j] += 1;
                }
            }
        }
        Ok(())
    })?;
    let mut out = Vec::with_capacity(cells);
    for (k, &delta) in spec.deltas.iter().enumerate() {
        for (j, &r) in spec.depths.iter().enumerate() {
            out.push(ConditionalEstimate::from_counts(delta, r, spec.n_rep, counts[cells + j], counts[k * nd + j], spec.seed)?);
        }
    }
    Ok(out)
}

/// Inputs of [`mc_theta_deviation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDeviationSpec {
    pub model: ModelSpec,
    pub deltas: Vec<f64>,
    /// Estimation depths `n`; each replicate observes `T_{n+1}*`.
    pub depths: Vec<u32>,
    pub n_rep: u64,
    /// Conditioning level on the `W` proxy; `0` keeps every replicate.
    pub a: f64,
    pub w_offset: u32,
    pub seed: u64,
}

impl ThetaDeviationSpec {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        check_grid(&self.deltas, &self.depths, self.n_rep)?;
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(Error::Constraint(format!("conditioning level a = {} must be non-negative", self.a)));
        }
        let depth = self.depths.iter().max().copied().unwrap_or(0) + 1;
        if depth > DEFAULT_DEPTH_CAP {
            return Err(Error::DepthCap { depth, cap: DEFAULT_DEPTH_CAP });
        }
        Ok(())
    }
}

/// Estimation outcome of one replicate at every depth of the spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaReplicate {
    /// `||theta_hat_n - theta||_2`, `None` when a class is degenerate.
    pub errors: Vec<Option<f64>>,
    /// `m^{-d} |G_d*|` at `d = n + w_offset`.
    pub proxies: Vec<f64>,
}

/// Per-replicate estimation errors, in replicate order.
pub fn theta_replicates(spec: &ThetaDeviationSpec) -> Result<Vec<ThetaReplicate>> {
    spec.validate()?;
    let max_n = spec.depths.iter().max().copied().unwrap_or(0);
    let m = spec.model.law.mean();
    (0..spec.n_rep)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(spec.seed, Domain::Estimation, i);
            let sample = spec.model.sample(max_n + 1, &mut rng)?;
            let sizes = size_path(sample.tree(), max_n + spec.w_offset, &mut rng)?;
            let mut errors = Vec::with_capacity(spec.depths.len());
            let mut proxies = Vec::with_capacity(spec.depths.len());
            for &n in &spec.depths {
                let est = lse(&sample, n)?;
                errors.push(if est.is_complete() { Some(estimation_error(&est, &spec.model.params)?) } else { None });
                let d = n + spec.w_offset;
                proxies.push(normalized_size(sizes[d as usize], m, d));
            }
            Ok(ThetaReplicate { errors, proxies })
        })
        .collect()
}

/// `P(||theta_hat_n - theta|| > delta | W_{n+w} >= a)`; replicates with a
/// degenerate class count as exceedances. Delta-major order.
pub fn mc_theta_deviation(spec: &ThetaDeviationSpec) -> Result<Vec<ConditionalEstimate>> {
    theta_deviation_from_replicates(spec, &theta_replicates(spec)?)
}

/// The counts of [`mc_theta_deviation`] from replicates already drawn for `spec`.
pub fn theta_deviation_from_replicates(spec: &ThetaDeviationSpec, reps: &[ThetaReplicate]) -> Result<Vec<ConditionalEstimate>> {
    if reps.len() as u64 != spec.n_rep || reps.iter().any(|r| r.errors.len() != spec.depths.len()) {
        return Err(Error::Constraint("replicates do not match the spec".into()));
    }
    let mut out = Vec::with_capacity(spec.deltas.len() * spec.depths.len());
    for &delta in &spec.deltas {
        for (j, &n) in spec.depths.iter().enumerate() {
            let kept = reps.iter().filter(|r| r.proxies[j] >= spec.a);
            let (used, exceed) = kept.fold((0u64, 0u64), |(u, e), r| (u + 1, e + r.errors[j].is_none_or(|err| err > delta) as u64));
            out.push(ConditionalEstimate::from_counts(delta, n, spec.n_rep, used, exceed, spec.seed)?);
        }
    }
    Ok(out)
}

/// Inputs of [`mc_gw_lln`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwLlnSpec {
    pub law: OffspringLaw,
    pub deltas: Vec<f64>,
    pub depths: Vec<u32>,
    pub n_rep: u64,
    pub w_offset: u32,
    pub seed: u64,
}

/// `P(| m^{-r}|G_r*| - m^{-d}|G_d*| | > delta)` with `d = r + w_offset`, from
/// generation sizes alone. Delta-major order.
pub fn mc_gw_lln(spec: &GwLlnSpec) -> Result<Vec<DeviationEstimate>> {
    spec.law.validate()?;
    check_grid(&spec.deltas, &spec.depths, spec.n_rep)?;
    let m = spec.law.mean();
    let horizon = spec.depths.iter().max().copied().unwrap_or(0) + spec.w_offset;
    let nd = spec.depths.len();
    let counts = parallel_counts(spec.n_rep, spec.deltas.len() * nd, |i, acc| {
        let mut rng = rng::stream(spec.seed, Domain::Simulation, i);
        let sizes = sample_generation_sizes(&spec.law, horizon, &mut rng)?;
        for (j, &r) in spec.depths.iter().enumerate() {
            let d = r + spec.w_offset;
            let gap = (normalized_size(sizes[r as usize], m, r) - normalized_size(sizes[d as usize], m, d)).abs();
            for (k, &delta) in spec.deltas.iter().enumerate() {
                if gap > delta {
                    acc[k * nd + j] += 1;
                }
            }
        }
        Ok(())
    })?;
    assemble(&spec.deltas, &spec.depths, spec.n_rep, spec.seed, |cell, _| (spec.n_rep, counts[cell]))
}
