//! Experiment configuration: a TOML (or JSON) document plus `--set` overrides.

use std::fmt;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use barlab_core::{state_bound, BoundConstants, CellFunction, LongRunConfig, ModelSpec, SetKind, DEFAULT_W_OFFSET};
use serde::{Deserialize, Serialize};

/// Largest depth a config may ask for.
pub const DEPTH_CAP: u32 = barlab_core::bar::DEFAULT_DEPTH_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Estimate,
    Deviation,
    Chain,
    Bounds,
    Report,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Deviation => "deviation",
            Command::Chain => "chain",
            Command::Bounds => "bounds",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub constants: BoundConstants,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub deviation: DeviationConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub depth: u32,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { depth: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    /// Estimation depths; the sample is observed up to `max(depths) + 1`.
    pub depths: Vec<u32>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { depths: vec![5] }
    }
}

/// Functions selectable from a config.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    #[default]
    Identity,
    Square,
    Clamp {
        low: f64,
        high: f64,
    },
    /// `1{x > threshold}`.
    Indicator {
        threshold: f64,
    },
    Constant {
        value: f64,
    },
}

impl FunctionSpec {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            FunctionSpec::Clamp { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                Err(format!("clamp needs finite low <= high, got [{low}, {high}]"))
            }
            FunctionSpec::Indicator { threshold } if !threshold.is_finite() => Err(format!("threshold {threshold} must be finite")),
            FunctionSpec::Constant { value } if !value.is_finite() => Err(format!("value {value} must be finite")),
            _ => Ok(()),
        }
    }

    /// `f - shift` with its sup-norm over the state box of `model`.
    pub fn build(&self, model: &ModelSpec, shift: f64) -> CellFunction {
        let b = state_bound(&model.params, &model.noise, &model.init);
        match *self {
            FunctionSpec::Identity => CellFunction::new(move |x| x - shift, b + shift.abs()),
            FunctionSpec::Square => CellFunction::new(move |x| x * x - shift, b * b + shift.abs()),
            FunctionSpec::Clamp { low, high } => {
                CellFunction::new(move |x: f64| x.clamp(low, high) - shift, low.abs().max(high.abs()) + shift.abs())
            }
            FunctionSpec::Indicator { threshold } => {
                CellFunction::new(move |x| if x > threshold { 1.0 - shift } else { -shift }, 1.0 + shift.abs())
            }
            FunctionSpec::Constant { value } => CellFunction::constant(value - shift),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            FunctionSpec::Identity => x,
            FunctionSpec::Square => x * x,
            FunctionSpec::Clamp { low, high } => x.clamp(low, high),
            FunctionSpec::Indicator { threshold } => (x > threshold) as u8 as f64,
            FunctionSpec::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationKind {
    /// `P(tilde M(f - <mu,f>) > delta)`.
    Centered,
    /// `P(tilde M(f) - <mu,f> W > delta)`.
    Uncentered,
    /// `P(bar M(f) - <mu,f> > delta | W >= a)`.
    Conditional,
    /// `P(||theta_hat_n - theta|| > delta | W >= a)`.
    Theta,
    /// `P(|m^{-r}|G_r*| - W| > delta)`.
    GwLln,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongRunSettings {
    pub burn_in: u64,
    pub length: u64,
}

impl Default for LongRunSettings {
    fn default() -> Self {
        let d = LongRunConfig::default();
        Self { burn_in: d.burn_in, length: d.length }
    }
}

impl From<LongRunSettings> for LongRunConfig {
    fn from(s: LongRunSettings) -> Self {
        LongRunConfig { burn_in: s.burn_in, length: s.length }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviationConfig {
    pub kind: DeviationKind,
    pub function: FunctionSpec,
    pub deltas: Vec<f64>,
    /// `r` grid, or the `n` grid for `theta`.
    pub depths: Vec<u32>,
    pub n_rep: u64,
    pub set_kind: SetKind,
    pub w_offset: u32,
    /// Estimate of `<mu, f>`; computed from the embedded chain when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centering: Option<f64>,
    pub long_run: LongRunSettings,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self {
            kind: DeviationKind::Centered,
            function: FunctionSpec::Identity,
            deltas: Vec::new(),
            depths: vec![4, 6, 8],
            n_rep: 1000,
            set_kind: SetKind::Generation,
            w_offset: DEFAULT_W_OFFSET,
            centering: None,
            long_run: LongRunSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub function: FunctionSpec,
    pub long_run: LongRunSettings,
    /// Starting points of the `Q^k` gap curve.
    pub x_grid: Vec<f64>,
    pub k_max: u32,
    pub n_rep: u64,
    /// Points enter the rate fit while the gap exceeds this multiple of its noise.
    pub noise_multiple: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            function: FunctionSpec::Identity,
            long_run: LongRunSettings::default(),
            x_grid: vec![-5.0, 5.0],
            k_max: 25,
            n_rep: 20_000,
            noise_multiple: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFamily {
    Centered,
    Uncentered,
    Conditional,
    Theta,
    ArTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    /// Probability the centered bound must reach at `pivot`.
    pub target: f64,
    pub delta: f64,
    pub pivot: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub deltas: Vec<f64>,
    pub depths: Vec<u32>,
    pub set_kind: SetKind,
    pub families: Vec<BoundFamily>,
    /// Ergodicity rate; the largest slope of the model when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrationTarget>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            deltas: Vec::new(),
            depths: (1..=20).collect(),
            set_kind: SetKind::Generation,
            families: vec![BoundFamily::Centered],
            alpha: None,
            calibrate: None,
        }
    }
}

/// One validation failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, field: impl Into<String>, reason: impl Into<String>) {
        self.0.push(Issue { field: field.into(), reason: reason.into() });
    }

    fn check<E: fmt::Display>(&mut self, field: &str, r: Result<(), E>) {
        if let Err(e) = r {
            self.push(field, e.to_string());
        }
    }

    fn grid(&mut self, block: &str, deltas: &[f64], depths: &[u32], depth_shift: u32) {
        if deltas.is_empty() {
            self.push(format!("{block}.deltas"), "delta grid is empty");
        }
        for d in deltas {
            if !(*d > 0.0 && d.is_finite()) {
                self.push(format!("{block}.deltas"), format!("delta = {d} must be positive and finite"));
            }
        }
        if depths.is_empty() {
            self.push(format!("{block}.depths"), "depth grid is empty");
        }
        if let Some(&d) = depths.iter().max() {
            if d + depth_shift > DEPTH_CAP {
                self.push(format!("{block}.depths"), format!("depth {d} needs a tree deeper than the cap {DEPTH_CAP}"));
            }
        }
    }

    fn conditioning(&mut self, constants: &BoundConstants, deltas: &[f64]) {
        for &d in deltas.iter().filter(|d| **d > 0.0) {
            self.check("constants.b", constants.check_conditioning(d));
        }
    }

    fn gamma(&mut self, constants: &BoundConstants, deltas: &[f64]) {
        for &d in deltas.iter().filter(|d| **d > 0.0) {
            self.check("constants.gamma", constants.check_gamma(d));
        }
    }
}

impl Config {
    /// Every violation relevant to `command`; empty when the config is runnable.
    pub fn validate(&self, command: Command) -> Vec<Issue> {
        let mut out = Issues(Vec::new());
        let m = &self.model;
        out.check("model.law", m.law.validate());
        out.check("model.params", m.params.validate());
        out.check("model.noise", m.noise.validate());
        out.check("model.init", m.init.validate());
        for v in self.constants.violations() {
            out.push("constants", v);
        }
        match command {
            Command::Simulate => {
                if self.simulate.depth > DEPTH_CAP {
                    out.push("simulate.depth", format!("depth {} exceeds the cap {DEPTH_CAP}", self.simulate.depth));
                }
            }
            Command::Estimate => {
                let e = &self.estimate;
                if e.depths.is_empty() {
                    out.push("estimate.depths", "depth grid is empty");
                }
                if e.depths.iter().any(|&n| n + 1 > DEPTH_CAP) {
                    out.push("estimate.depths", format!("observation depth exceeds the cap {DEPTH_CAP}"));
                }
            }
            Command::Deviation => {
                let d = &self.deviation;
                let shift = match d.kind {
                    DeviationKind::Theta => 1,
                    DeviationKind::GwLln => 0,
                    _ => d.w_offset,
                };
                out.grid("deviation", &d.deltas, &d.depths, shift);
                if d.kind == DeviationKind::GwLln && d.depths.iter().max().is_some_and(|&r| r + d.w_offset > 62) {
                    out.push("deviation.w_offset", "proxy depth exceeds 62 generations");
                }
                if d.n_rep == 0 {
                    out.push("deviation.n_rep", "must be positive");
                }
                out.check("deviation.function", d.function.validate());
                if let Some(c) = d.centering {
                    if !c.is_finite() {
                        out.push("deviation.centering", "must be finite");
                    }
                }
                if matches!(d.kind, DeviationKind::Centered | DeviationKind::Uncentered | DeviationKind::Conditional)
                    && d.centering.is_none()
                {
                    out.check("deviation.long_run", long_run_check(&d.long_run));
                }
                if matches!(d.kind, DeviationKind::Conditional | DeviationKind::Theta) {
                    out.conditioning(&self.constants, &d.deltas);
                }
                if d.kind == DeviationKind::Theta {
                    out.gamma(&self.constants, &d.deltas);
                }
            }
            Command::Chain => {
                let c = &self.chain;
                out.check("chain.function", c.function.validate());
                out.check("chain.long_run", long_run_check(&c.long_run));
                if c.x_grid.is_empty() || c.x_grid.iter().any(|x| !x.is_finite()) {
                    out.push("chain.x_grid", "needs at least one finite starting point");
                }
                if c.k_max == 0 {
                    out.push("chain.k_max", "must be positive");
                }
                if c.n_rep == 0 {
                    out.push("chain.n_rep", "must be positive");
                }
                if !(c.noise_multiple > 0.0 && c.noise_multiple.is_finite()) {
                    out.push("chain.noise_multiple", "must be positive");
                }
            }
            Command::Bounds => {
                let b = &self.bounds;
                out.check("model.law", m.law.require_h2());
                out.grid("bounds", &b.deltas, &b.depths, 0);
                if let Some(alpha) = b.alpha {
                    if !(0.0..1.0).contains(&alpha) {
                        out.push("bounds.alpha", format!("alpha = {alpha} must lie in [0, 1)"));
                    }
                }
                if b.families.is_empty() {
                    out.push("bounds.families", "no bound family selected");
                }
                if b.families
                    .iter()
                    .any(|f| matches!(f, BoundFamily::Uncentered | BoundFamily::Conditional | BoundFamily::Theta | BoundFamily::ArTerm))
                {
                    out.check("model.law", m.law.require_h3());
                }
                if b.families.iter().any(|f| matches!(f, BoundFamily::Conditional | BoundFamily::Theta)) {
                    out.conditioning(&self.constants, &b.deltas);
                }
                if b.families.contains(&BoundFamily::Theta) {
                    out.gamma(&self.constants, &b.deltas);
                }
                if let Some(c) = b.calibrate {
                    if !(0.0..=1.0).contains(&c.target) {
                        out.push("bounds.calibrate.target", format!("{} is not a probability", c.target));
                    }
                    if !(c.delta > 0.0 && c.delta.is_finite()) {
                        out.push("bounds.calibrate.delta", "must be positive");
                    }
                }
            }
            Command::Report => {}
        }
        dedup(out.0)
    }
}

fn dedup(mut issues: Vec<Issue>) -> Vec<Issue> {
    let mut seen = Vec::new();
    issues.retain(|i| {
        if seen.contains(i) {
            false
        } else {
            seen.push(i.clone());
            true
        }
    });
    issues
}

fn long_run_check(s: &LongRunSettings) -> Result<(), String> {
    if s.length < 50 {
        Err(format!("length {} must be at least 50", s.length))
    } else {
        Ok(())
    }
}

/// Parses a config file; `.json` files are JSON, anything else TOML. A JSON
/// report or manifest yields its echoed config.
pub fn load_value(path: &Path) -> anyhow::Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let json: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let json = match json {
            serde_json::Value::Object(mut doc) if doc.contains_key("artifact") => {
                doc.remove("config").context("echo document without a config")?
            }
            other => other,
        };
        match toml::Value::try_from(json).context("converting JSON config")? {
            toml::Value::Table(t) => Ok(t),
            _ => bail!("{}: top level must be an object", path.display()),
        }
    } else {
        text.parse::<toml::Table>().with_context(|| format!("parsing {}", path.display()))
    }
}

/// Applies `path.to.key=value`; the value is read as TOML, or as a string when
/// it is not valid TOML.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> anyhow::Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| anyhow!("--set {assignment}: expected key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("--set {assignment}: empty key segment");
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| anyhow!("--set {assignment}: `{k}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn from_table(table: toml::Table) -> anyhow::Result<Config> {
    Config::deserialize(toml::Value::Table(table)).map_err(|e| anyhow!("{}", e.to_string().trim_end()))
}
