//! Sums and averages of functions over sets of alive cells.
//!
//! For a node set `J`, `M_J(f)` is the sum of `f` over `J` (zero when `J` is
//! empty), the bar average divides by the realized `|J|` and the tilde average
//! by the expected size `E|J|` (`m^r` for a generation, `t_r` for a subtree).

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bar::{PopulationSample, Triangle};
use crate::error::{Error, Result};
use crate::sum::CompensatedSum;
use crate::tree::{expected_sizes, CellKind, GwTree, Label};

/// A bounded function of one cell value, extended by `f(dead) = 0`.
#[derive(Clone)]
pub struct CellFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    bound: f64,
}

impl CellFunction {
    /// `bound` is the declared sup norm; it is not checked against `f`.
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, bound: f64) -> Self {
        Self { f: Arc::new(f), bound }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, c.abs())
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// Value on a possibly dead cell.
    pub fn eval_extended(&self, x: Option<f64>) -> f64 {
        x.map_or(0.0, |x| (self.f)(x))
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

impl fmt::Debug for CellFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CellFunction").field("bound", &self.bound).finish_non_exhaustive()
    }
}

/// Daughter configurations on which a triangle function may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMask {
    pub both: bool,
    pub new_only: bool,
    pub old_only: bool,
    pub none: bool,
}

impl ClassMask {
    pub const ALL: ClassMask = ClassMask { both: true, new_only: true, old_only: true, none: true };
    pub const BOTH: ClassMask = ClassMask { both: true, new_only: false, old_only: false, none: false };
    pub const NEW_ONLY: ClassMask = ClassMask { both: false, new_only: true, old_only: false, none: false };
    pub const OLD_ONLY: ClassMask = ClassMask { both: false, new_only: false, old_only: true, none: false };

    pub fn contains(self, kind: CellKind) -> bool {
        match kind {
            CellKind::BothAlive => self.both,
            CellKind::NewOnly => self.new_only,
            CellKind::OldOnly => self.old_only,
            CellKind::NoneAlive => self.none,
        }
    }
}

type TriangleFn = dyn Fn(f64, Option<f64>, Option<f64>) -> f64 + Send + Sync;

/// A bounded function of a mother-daughter triangle, restricted to a class mask.
#[derive(Clone)]
pub struct TriangleFunction {
    f: Arc<TriangleFn>,
    bound: f64,
    mask: ClassMask,
}

impl TriangleFunction {
    pub fn new(f: impl Fn(f64, Option<f64>, Option<f64>) -> f64 + Send + Sync + 'static, bound: f64, mask: ClassMask) -> Self {
        Self { f: Arc::new(f), bound, mask }
    }

    /// Function of the three values of a two-daughter triangle, zero elsewhere.
    pub fn on_both(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static, bound: f64) -> Self {
        Self::new(move |x, y, z| f(x, y.unwrap_or(0.0), z.unwrap_or(0.0)), bound, ClassMask::BOTH)
    }

    pub fn mask(&self) -> ClassMask {
        self.mask
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eval(&self, t: &Triangle) -> f64 {
        if self.mask.contains(t.kind()) {
            (self.f)(t.mother, t.new_pole, t.old_pole)
        } else {
            0.0
        }
    }
}

impl fmt::Debug for TriangleFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriangleFunction").field("bound", &self.bound).field("mask", &self.mask).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum NodeFunction {
    Cell(CellFunction),
    Triangle(TriangleFunction),
}

impl NodeFunction {
    pub fn bound(&self) -> f64 {
        match self {
            NodeFunction::Cell(f) => f.bound(),
            NodeFunction::Triangle(f) => f.bound(),
        }
    }

    fn eval_at(&self, sample: &PopulationSample, idx: usize) -> Result<f64> {
        match self {
            NodeFunction::Cell(f) => Ok(f.eval(sample.value_at(idx))),
            NodeFunction::Triangle(f) => Ok(f.eval(&sample.triangle_at(idx)?)),
        }
    }
}

impl From<CellFunction> for NodeFunction {
    fn from(f: CellFunction) -> Self {
        NodeFunction::Cell(f)
    }
}

impl From<TriangleFunction> for NodeFunction {
    fn from(f: TriangleFunction) -> Self {
        NodeFunction::Triangle(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    /// `G_r*`, the alive cells of generation `r`.
    Generation,
    /// `T_r*`, the alive cells of generations `0..=r`.
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageKind {
    RawSum,
    BarAverage,
    TildeAverage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Indices {
    Range(Range<usize>),
    List(Vec<usize>),
}

/// A set of alive cells of one tree, held as arena indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    indices: Indices,
    shape: Option<(SetKind, u32)>,
}

impl NodeSet {
    pub fn generation(tree: &GwTree, r: u32) -> Result<Self> {
        Ok(Self { indices: Indices::Range(tree.generation_range(r)?), shape: Some((SetKind::Generation, r)) })
    }

    pub fn cumulative(tree: &GwTree, r: u32) -> Result<Self> {
        Ok(Self { indices: Indices::Range(tree.cumulative_range(r)?), shape: Some((SetKind::Tree, r)) })
    }

    pub fn of_kind(tree: &GwTree, kind: SetKind, r: u32) -> Result<Self> {
        match kind {
            SetKind::Generation => Self::generation(tree, r),
            SetKind::Tree => Self::cumulative(tree, r),
        }
    }

    pub fn empty() -> Self {
        Self { indices: Indices::List(Vec::new()), shape: None }
    }

    /// Arbitrary set of alive labels; duplicates are kept.
    pub fn from_labels(tree: &GwTree, labels: &[Label]) -> Result<Self> {
        let indices = labels.iter().map(|&l| tree.index_of(l).ok_or(Error::NotAlive(l.0))).collect::<Result<_>>()?;
        Ok(Self { indices: Indices::List(indices), shape: None })
    }

    pub fn len(&self) -> usize {
        match &self.indices {
            Indices::Range(r) => r.len(),
            Indices::List(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(kind, r)` when the set is a generation or a subtree.
    pub fn shape(&self) -> Option<(SetKind, u32)> {
        self.shape
    }

    /// `m^r` or `t_r` for generation and subtree sets.
    pub fn expected_size(&self, m: f64) -> Result<f64> {
        let (kind, r) = self.shape.ok_or(Error::Constraint("expected size is only defined for generation and subtree sets".into()))?;
        let (g, t) = expected_sizes(m, r)?;
        Ok(match kind {
            SetKind::Generation => g,
            SetKind::Tree => t,
        })
    }

    fn for_each<F: FnMut(usize) -> Result<()>>(&self, mut f: F) -> Result<()> {
        match &self.indices {
            Indices::Range(r) => r.clone().try_for_each(f),
            Indices::List(v) => v.iter().try_for_each(|&i| f(i)),
        }
    }
}

/// `M_J(f)`.
pub fn m_sum(sample: &PopulationSample, set: &NodeSet, f: &NodeFunction) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    set.for_each(|idx| {
        acc.add(f.eval_at(sample, idx)?);
        Ok(())
    })?;
    Ok(acc.value())
}

/// `M_J(f) / |J|`.
pub fn bar_avg(sample: &PopulationSample, set: &NodeSet, f: &NodeFunction) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(m_sum(sample, set, f)? / set.len() as f64)
}

/// `M_J(f) / expected_size`.
pub fn tilde_avg(sample: &PopulationSample, set: &NodeSet, f: &NodeFunction, expected_size: f64) -> Result<f64> {
    if !(expected_size > 0.0) {
        return Err(Error::NonPositiveExpectedSize(expected_size));
    }
    Ok(m_sum(sample, set, f)? / expected_size)
}

/// Average of the requested kind; tilde averages take `E|J|` from the tree's law.
pub fn average(sample: &PopulationSample, set: &NodeSet, f: &NodeFunction, kind: AverageKind) -> Result<f64> {
    match kind {
        AverageKind::RawSum => m_sum(sample, set, f),
        AverageKind::BarAverage => bar_avg(sample, set, f),
        AverageKind::TildeAverage => {
            let e = set.expected_size(sample.tree().law().mean())?;
            tilde_avg(sample, set, f, e)
        }
    }
}

/// `m^{-r} |G_r*|`.
pub fn w_proxy(tree: &GwTree, r: u32) -> Result<f64> {
    let size = tree.generation_size(r)?;
    Ok(normalized_size(size as u64, tree.law().mean(), r))
}

/// `m^{-r} z`, with `0` whenever `z = 0`.
pub fn normalized_size(z: u64, m: f64, r: u32) -> f64 {
    if z == 0 {
        0.0
    } else {
        z as f64 / m.powi(r as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bar::{simulate_population, BarParams, InitialLaw, NoiseSpec};
    use crate::rng::{stream, Domain};
    use crate::tree::OffspringLaw;

    fn sample(law: (f64, f64, f64), depth: u32, seed: u64) -> PopulationSample {
        let law = OffspringLaw::new(law.0, law.1, law.2).unwrap();
        let mut rng = stream(seed, Domain::User, 0);
        let tree = GwTree::sample(&law, depth, &mut rng).unwrap();
        let p = BarParams::from_array([0.5, 1.0, 0.3, 0.8, 0.4, 0.9, 0.2, 1.1]).unwrap();
        let n = NoiseSpec::gaussian(0.3, 0.2, 0.3, 0.3, 4.0).unwrap();
        simulate_population(tree, &p, &n, &InitialLaw::Point { value: 0.7 }, &mut rng).unwrap()
    }

    #[test]
    fn sums_of_ones_count_cells() {
        let s = sample((0.9, 0.05, 0.05), 6, 1);
        let one: NodeFunction = CellFunction::constant(1.0).into();
        for r in 0..=6 {
            let g = NodeSet::generation(s.tree(), r).unwrap();
            assert_eq!(m_sum(&s, &g, &one).unwrap(), s.tree().generation_size(r).unwrap() as f64);
            assert_eq!(bar_avg(&s, &g, &one).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_set_conventions() {
        let s = sample((0.9, 0.05, 0.05), 3, 2);
        let f: NodeFunction = CellFunction::new(|x| x, f64::INFINITY).into();
        let e = NodeSet::empty();
        assert_eq!(m_sum(&s, &e, &f).unwrap(), 0.0);
        assert_eq!(bar_avg(&s, &e, &f), Err(Error::EmptySet));
        assert_eq!(tilde_avg(&s, &e, &f, 0.0), Err(Error::NonPositiveExpectedSize(0.0)));
    }

    #[test]
    fn root_value() {
        let s = sample((0.9, 0.05, 0.05), 3, 3);
        let f: NodeFunction = CellFunction::new(|x| x, f64::INFINITY).into();
        let root = NodeSet::from_labels(s.tree(), &[Label::ROOT]).unwrap();
        assert_eq!(m_sum(&s, &root, &f).unwrap(), 0.7);
        assert_eq!(NodeSet::from_labels(s.tree(), &[Label(1 << 40)]), Err(Error::NotAlive(1 << 40)));
    }

    #[test]
    fn full_tree_tilde_is_one() {
        let s = sample((1.0, 0.0, 0.0), 3, 4);
        let one: NodeFunction = CellFunction::constant(1.0).into();
        let g2 = NodeSet::generation(s.tree(), 2).unwrap();
        assert_eq!(average(&s, &g2, &one, AverageKind::TildeAverage).unwrap(), 1.0);
        assert_eq!(w_proxy(s.tree(), 3).unwrap(), 1.0);
    }

    #[test]
    fn triangle_functions_need_daughters() {
        let s = sample((1.0, 0.0, 0.0), 2, 5);
        let t: NodeFunction = TriangleFunction::new(|x, _, _| x, f64::INFINITY, ClassMask::ALL).into();
        let last = NodeSet::generation(s.tree(), 2).unwrap();
        assert!(matches!(m_sum(&s, &last, &t), Err(Error::Unresolvable(_))));
    }

    #[test]
    fn triangle_extension_matches_cell_sum() {
        let s = sample((0.6, 0.15, 0.15), 8, 6);
        let c: NodeFunction = CellFunction::new(|x| x * x, f64::INFINITY).into();
        let t: NodeFunction = TriangleFunction::new(|x, _, _| x * x, f64::INFINITY, ClassMask::ALL).into();
        let set = NodeSet::cumulative(s.tree(), 7).unwrap();
        let a = m_sum(&s, &set, &c).unwrap();
        let b = m_sum(&s, &set, &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masks_partition_triangles() {
        let s = sample((0.6, 0.15, 0.15), 8, 7);
        let set = NodeSet::cumulative(s.tree(), 7).unwrap();
        let total: NodeFunction = TriangleFunction::new(|x, _, _| x, f64::INFINITY, ClassMask::ALL).into();
        let parts: f64 = [
            ClassMask::BOTH,
            ClassMask::NEW_ONLY,
            ClassMask::OLD_ONLY,
            ClassMask { both: false, new_only: false, old_only: false, none: true },
        ]
        .into_iter()
        .map(|m| m_sum(&s, &set, &TriangleFunction::new(|x, _, _| x, f64::INFINITY, m).into()).unwrap())
        .sum();
        assert!((parts - m_sum(&s, &set, &total).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn extinct_root_proxy() {
        let law = OffspringLaw::new(0.0, 0.0, 0.0).unwrap();
        let mut rng = stream(0, Domain::User, 0);
        let tree = GwTree::sample(&law, 3, &mut rng).unwrap();
        assert_eq!(w_proxy(&tree, 1).unwrap(), 0.0);
        assert!(w_proxy(&tree, 4).is_err());
    }
}
