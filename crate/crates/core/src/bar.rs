//! First-order bifurcating autoregressive process with missing data.
//!
//! Given the alive-cell tree, a mother with value `x` produces
//!
//! * both daughters: `X_2n = a0 x + b0 + e_2n`, `X_2n+1 = a1 x + b1 + e_2n+1`
//!   with `(e_2n, e_2n+1)` a correlated pair;
//! * only the new pole: `X_2n = a0' x + b0' + e'_2n` with scale `sigma0`;
//! * only the old pole: `X_2n+1 = a1' x + b1' + e'_2n+1` with scale `sigma1`.
//!
//! Noise is Gaussian truncated at `trunc_k` standard deviations (rejection),
//! a symmetric two-point law, or identically zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tree::{CellKind, GwTree, Label, Pole};

/// Iteration cap of the rejection samplers; reaching it is a bug.
pub const REJECTION_CAP: u64 = 1_000_000;

/// Default hard cap on the depth of simulated trees.
pub const DEFAULT_DEPTH_CAP: u32 = 40;

/// The eight regression coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha0p: f64,
    pub beta0p: f64,
    pub alpha1p: f64,
    pub beta1p: f64,
}

impl BarParams {
    pub const NAMES: [&'static str; 8] = ["alpha0", "beta0", "alpha1", "beta1", "alpha0p", "beta0p", "alpha1p", "beta1p"];

    pub fn from_array(v: [f64; 8]) -> Result<Self> {
        let p = Self { alpha0: v[0], beta0: v[1], alpha1: v[2], beta1: v[3], alpha0p: v[4], beta0p: v[5], alpha1p: v[6], beta1p: v[7] };
        p.validate()?;
        Ok(p)
    }

    pub fn to_array(&self) -> [f64; 8] {
        [self.alpha0, self.beta0, self.alpha1, self.beta1, self.alpha0p, self.beta0p, self.alpha1p, self.beta1p]
    }

    pub fn slopes(&self) -> [f64; 4] {
        [self.alpha0, self.alpha1, self.alpha0p, self.alpha1p]
    }

    pub fn intercepts(&self) -> [f64; 4] {
        [self.beta0, self.beta1, self.beta0p, self.beta1p]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} = {v} is not finite")));
            }
        }
        for (name, a) in ["alpha0", "alpha1", "alpha0p", "alpha1p"].iter().zip(self.slopes()) {
            if a.abs() >= 1.0 {
                return Err(Error::InvalidParams(format!("|{name}| = {} must be < 1", a.abs())));
            }
        }
        Ok(())
    }

    /// Largest absolute slope.
    pub fn max_abs_slope(&self) -> f64 {
        self.slopes().iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn max_abs_intercept(&self) -> f64 {
        self.intercepts().iter().fold(0.0, |m, b| m.max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Gaussian truncated at `trunc_k` standard deviations.
    #[default]
    Gaussian,
    /// `+-sigma` with equal probability; pair signs agree with probability `(1 + rho) / 2`.
    TwoPoint,
    /// No noise at all.
    Noiseless,
}

/// Which noise sequence a draw belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseSource {
    /// Coordinate of the correlated pair used when both daughters live.
    Pair(PairCoordinate),
    NewOnly,
    OldOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PairCoordinate {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub rho: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    #[serde(default = "default_trunc_k")]
    pub trunc_k: f64,
    #[serde(default)]
    pub mode: NoiseMode,
}

fn default_trunc_k() -> f64 {
    4.0
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, rho: f64, sigma0: f64, sigma1: f64, trunc_k: f64) -> Result<Self> {
        let n = Self { sigma, rho, sigma0, sigma1, trunc_k, mode: NoiseMode::Gaussian };
        n.validate()?;
        Ok(n)
    }

    /// Same scales with the noise switched off.
    pub fn noiseless() -> Self {
        Self { sigma: 1.0, rho: 0.0, sigma0: 1.0, sigma1: 1.0, trunc_k: default_trunc_k(), mode: NoiseMode::Noiseless }
    }

    pub fn with_mode(mut self, mode: NoiseMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("sigma", self.sigma), ("sigma0", self.sigma0), ("sigma1", self.sigma1), ("trunc_k", self.trunc_k)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidNoise(format!("{name} = {s} must be positive")));
            }
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidNoise(format!(
                "rho = {} makes the noise covariance Gamma = sigma^2 [[1, rho], [rho, 1]] singular, not positive-definite; need |rho| < 1",
                self.rho
            )));
        }
        Ok(())
    }

    pub fn scale(&self, source: NoiseSource) -> f64 {
        match source {
            NoiseSource::Pair(_) => self.sigma,
            NoiseSource::NewOnly => self.sigma0,
            NoiseSource::OldOnly => self.sigma1,
        }
    }

    /// Largest possible absolute noise value for a source.
    pub fn bound(&self, source: NoiseSource) -> f64 {
        match self.mode {
            NoiseMode::Gaussian => self.trunc_k * self.scale(source),
            NoiseMode::TwoPoint => self.scale(source),
            NoiseMode::Noiseless => 0.0,
        }
    }

    pub fn max_bound(&self) -> f64 {
        [NoiseSource::Pair(PairCoordinate::First), NoiseSource::NewOnly, NoiseSource::OldOnly]
            .into_iter()
            .fold(0.0, |m, s| m.max(self.bound(s)))
    }

    /// Correlated pair for a mother with two alive daughters.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, f64)> {
        match self.mode {
            NoiseMode::Noiseless => Ok((0.0, 0.0)),
            NoiseMode::TwoPoint => {
                let first = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let same = rng.random::<f64>() < 0.5 * (1.0 + self.rho);
                let second = if same { first } else { -first };
                Ok((self.sigma * first, self.sigma * second))
            }
            NoiseMode::Gaussian => {
                let k = self.trunc_k;
                let c = (1.0 - self.rho * self.rho).sqrt();
                for _ in 0..REJECTION_CAP {
                    let z1: f64 = rng.sample(StandardNormal);
                    let z2: f64 = rng.sample(StandardNormal);
                    let w = self.rho * z1 + c * z2;
                    if z1.abs() <= k && w.abs() <= k {
                        return Ok((self.sigma * z1, self.sigma * w));
                    }
                }
                Err(Error::RejectionCap(REJECTION_CAP))
            }
        }
    }

    /// Single draw for a mother with one alive daughter.
    pub fn sample_single<R: Rng + ?Sized>(&self, pole: Pole, rng: &mut R) -> Result<f64> {
        let scale = match pole {
            Pole::New => self.sigma0,
            Pole::Old => self.sigma1,
        };
        match self.mode {
            NoiseMode::Noiseless => Ok(0.0),
            NoiseMode::TwoPoint => Ok(if rng.random::<bool>() { scale } else { -scale }),
            NoiseMode::Gaussian => {
                for _ in 0..REJECTION_CAP {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= self.trunc_k {
                        return Ok(scale * z);
                    }
                }
                Err(Error::RejectionCap(REJECTION_CAP))
            }
        }
    }

    /// Draw of the noise sequence `source`, using the sampler the tree uses.
    pub fn sample_source<R: Rng + ?Sized>(&self, source: NoiseSource, rng: &mut R) -> Result<f64> {
        match source {
            NoiseSource::Pair(PairCoordinate::First) => self.sample_pair(rng).map(|p| p.0),
            NoiseSource::Pair(PairCoordinate::Second) => self.sample_pair(rng).map(|p| p.1),
            NoiseSource::NewOnly => self.sample_single(Pole::New, rng),
            NoiseSource::OldOnly => self.sample_single(Pole::Old, rng),
        }
    }
}

/// Law of the root value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialLaw {
    Point { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::Point { value: 0.0 }
    }
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialLaw::Point { value } if value.is_finite() => Ok(()),
            InitialLaw::Uniform { low, high } if low.is_finite() && high.is_finite() && low <= high => Ok(()),
            other => Err(Error::InvalidInit(format!("{other:?} does not have compact support"))),
        }
    }

    /// Always consumes one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match *self {
            InitialLaw::Point { value } => value,
            InitialLaw::Uniform { low, high } => low + (high - low) * u,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match *self {
            InitialLaw::Point { value } => value.abs(),
            InitialLaw::Uniform { low, high } => low.abs().max(high.abs()),
        }
    }
}

/// Radius `B` of an interval `[-B, B]` containing every simulated value.
pub fn state_bound(params: &BarParams, noise: &NoiseSpec, init: &InitialLaw) -> f64 {
    (params.max_abs_intercept() + noise.max_bound() + init.max_abs()) / (1.0 - params.max_abs_slope())
}

/// Mother and daughter values `(X_i, X_2i, X_2i+1)`; `None` marks a dead daughter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub mother: f64,
    pub new_pole: Option<f64>,
    pub old_pole: Option<f64>,
}

impl Triangle {
    pub fn kind(&self) -> CellKind {
        match (self.new_pole, self.old_pole) {
            (Some(_), Some(_)) => CellKind::BothAlive,
            (Some(_), None) => CellKind::NewOnly,
            (None, Some(_)) => CellKind::OldOnly,
            (None, None) => CellKind::NoneAlive,
        }
    }
}

/// A tree with a growth-rate value attached to every alive cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSample {
    tree: GwTree,
    values: Vec<f64>,
}

impl PopulationSample {
    /// Pairs a tree with values listed in arena order.
    pub fn from_parts(tree: GwTree, values: Vec<f64>) -> Result<Self> {
        if values.len() != tree.len() {
            return Err(Error::MalformedTree(format!("{} values for {} alive cells", values.len(), tree.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::MalformedTree(format!("non-finite value {v}")));
        }
        Ok(Self { tree, values })
    }

    pub fn tree(&self) -> &GwTree {
        &self.tree
    }

    pub fn into_tree(self) -> GwTree {
        self.tree
    }

    /// Values in arena order (generation by generation, labels ascending).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, label: Label) -> Option<f64> {
        self.tree.index_of(label).map(|i| self.values[i])
    }

    pub(crate) fn value_at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub(crate) fn triangle_at(&self, idx: usize) -> Result<Triangle> {
        let node = self.tree.nodes()[idx];
        if !self.tree.daughters_resolved(idx) {
            return Err(Error::Unresolvable(node.label.0));
        }
        Ok(Triangle {
            mother: self.values[idx],
            new_pole: self.tree.daughter_index(idx, Pole::New).map(|i| self.values[i]),
            old_pole: self.tree.daughter_index(idx, Pole::Old).map(|i| self.values[i]),
        })
    }

    /// `(X_i, X_2i, X_2i+1)` with dead daughters as `None`.
    pub fn triangle(&self, label: Label) -> Result<Triangle> {
        let idx = self.tree.index_of(label).ok_or(Error::NotAlive(label.0))?;
        self.triangle_at(idx)
    }

    /// `label,generation,value` records, one per alive cell.
    pub fn to_fixture(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        for (node, v) in self.tree.nodes().iter().zip(&self.values) {
            out.push_str(&format!("{},{},{:?}\n", node.label, node.generation(), v));
        }
        out
    }

    /// Reads `label,generation,value` records for the cells of `tree`.
    pub fn from_fixture(tree: GwTree, text: &str) -> Result<Self> {
        let mut values = vec![None; tree.len()];
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: line_no, reason: "expected `label,generation,value`".into() });
            }
            let label = Label(fields[0].parse().map_err(|e| Error::Parse { line: line_no, reason: format!("label: {e}") })?);
            let generation: u32 = fields[1].parse().map_err(|e| Error::Parse { line: line_no, reason: format!("generation: {e}") })?;
            if label.0 == 0 || label.generation() != generation {
                return Err(Error::Parse { line: line_no, reason: format!("generation {generation} does not match label {label}") });
            }
            let value: f64 = fields[2].parse().map_err(|e| Error::Parse { line: line_no, reason: format!("value: {e}") })?;
            let idx = tree.index_of(label).ok_or(Error::Parse { line: line_no, reason: format!("cell {label} is not alive") })?;
            if values[idx].replace(value).is_some() {
                return Err(Error::Parse { line: line_no, reason: format!("duplicate cell {label}") });
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or(Error::MalformedTree(format!("no value for cell {}", tree.nodes()[i].label))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(tree, values)
    }
}

/// Simulation knobs that are not part of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub depth_cap: u32,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { depth_cap: DEFAULT_DEPTH_CAP }
    }
}

/// Attaches BAR values to every alive cell of `tree`.
///
/// Draw schedule: one uniform for the root value, then one `u64` per alive
/// cell in arena order whatever its kind. The noise of a mother's daughters is
/// drawn from a child generator seeded by that `u64`.
pub fn simulate_population<R: Rng + ?Sized>(
    tree: GwTree,
    params: &BarParams,
    noise: &NoiseSpec,
    init: &InitialLaw,
    rng: &mut R,
) -> Result<PopulationSample> {
    simulate_population_with(tree, params, noise, init, SimulationOptions::default(), rng)
}

pub fn simulate_population_with<R: Rng + ?Sized>(
    tree: GwTree,
    params: &BarParams,
    noise: &NoiseSpec,
    init: &InitialLaw,
    options: SimulationOptions,
    rng: &mut R,
) -> Result<PopulationSample> {
    params.validate()?;
    noise.validate()?;
    init.validate()?;
    if tree.max_depth() > options.depth_cap {
        return Err(Error::DepthCap { depth: tree.max_depth(), cap: options.depth_cap });
    }
    let mut values = vec![0.0; tree.len()];
    values[0] = init.sample(rng);
    for idx in 0..tree.len() {
        let cell_seed: u64 = rng.random();
        let x = values[idx];
        let kind = tree.nodes()[idx].kind;
        let new_idx = tree.daughter_index(idx, Pole::New);
        let old_idx = tree.daughter_index(idx, Pole::Old);
        if new_idx.is_none() && old_idx.is_none() {
            continue;
        }
        let mut child = rng::child(cell_seed);
        match kind {
            CellKind::BothAlive => {
                let (e0, e1) = noise.sample_pair(&mut child)?;
                values[new_idx.expect("both alive")] = params.alpha0 * x + params.beta0 + e0;
                values[old_idx.expect("both alive")] = params.alpha1 * x + params.beta1 + e1;
            }
            CellKind::NewOnly => {
                let e = noise.sample_single(Pole::New, &mut child)?;
                values[new_idx.expect("new pole alive")] = params.alpha0p * x + params.beta0p + e;
            }
            CellKind::OldOnly => {
                let e = noise.sample_single(Pole::Old, &mut child)?;
                values[old_idx.expect("old pole alive")] = params.alpha1p * x + params.beta1p + e;
            }
            CellKind::NoneAlive => {}
        }
    }
    debug_assert!({
        let b = state_bound(params, noise, init) * (1.0 + 1e-12);
        values.iter().all(|v| v.abs() <= b)
    });
    PopulationSample::from_parts(tree, values)
}
