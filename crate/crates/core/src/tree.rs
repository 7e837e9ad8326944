//! Binary Galton-Watson trees of alive cells.
//!
//! Cells are labelled with the usual binary-tree scheme: the root is `1` and
//! the daughters of `n` are `2n` (new pole) and `2n + 1` (old pole), so the
//! generation of a label is `floor(log2 label)`. Only alive cells are stored.
//! Each stored cell records which of its daughters are alive; dead cells never
//! have alive descendants.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported tree depth; labels must fit in a `u64`.
pub const MAX_SUPPORTED_DEPTH: u32 = 62;

const H3_TOLERANCE: f64 = 1e-12;

/// Label of a cell in the binary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u64);

impl Label {
    pub const ROOT: Label = Label(1);

    pub fn generation(self) -> u32 {
        debug_assert!(self.0 > 0);
        63 - self.0.leading_zeros()
    }

    pub fn parent(self) -> Option<Label> {
        (self.0 > 1).then_some(Label(self.0 / 2))
    }

    pub fn daughter(self, pole: Pole) -> Label {
        Label(2 * self.0 + pole as u64)
    }

    /// The pole this cell occupies relative to its mother.
    pub fn pole(self) -> Pole {
        if self.0.is_multiple_of(2) {
            Pole::New
        } else {
            Pole::Old
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Daughter position: `New` is `2n`, `Old` is `2n + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pole {
    New = 0,
    Old = 1,
}

/// Which daughters of a cell are alive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    BothAlive,
    NewOnly,
    OldOnly,
    NoneAlive,
}

impl CellKind {
    pub fn has_daughter(self, pole: Pole) -> bool {
        matches!((self, pole), (CellKind::BothAlive, _) | (CellKind::NewOnly, Pole::New) | (CellKind::OldOnly, Pole::Old))
    }

    pub fn alive_daughters(self) -> u64 {
        match self {
            CellKind::BothAlive => 2,
            CellKind::NewOnly | CellKind::OldOnly => 1,
            CellKind::NoneAlive => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::BothAlive => "both",
            CellKind::NewOnly => "new",
            CellKind::OldOnly => "old",
            CellKind::NoneAlive => "none",
        }
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "both" => Ok(CellKind::BothAlive),
            "new" => Ok(CellKind::NewOnly),
            "old" => Ok(CellKind::OldOnly),
            "none" => Ok(CellKind::NoneAlive),
            other => Err(format!("unknown cell kind `{other}`")),
        }
    }
}

/// Four-outcome reproduction law of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringLaw {
    /// Both daughters alive.
    pub p10: f64,
    /// Only the new-pole daughter alive.
    pub p0: f64,
    /// Only the old-pole daughter alive.
    pub p1: f64,
}

impl OffspringLaw {
    pub fn new(p10: f64, p0: f64, p1: f64) -> Result<Self> {
        let law = Self { p10, p0, p1 };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p10", self.p10), ("p0", self.p0), ("p1", self.p1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidLaw(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        let total = self.p10 + self.p0 + self.p1;
        if total > 1.0 + H3_TOLERANCE {
            return Err(Error::InvalidLaw(format!("p10 + p0 + p1 = {total} exceeds 1")));
        }
        Ok(())
    }

    /// Probability that neither daughter survives.
    pub fn p_none(&self) -> f64 {
        (1.0 - self.p10 - self.p0 - self.p1).max(0.0)
    }

    pub fn mean(&self) -> f64 {
        mean_offspring(self)
    }

    pub fn is_supercritical(&self) -> bool {
        self.mean() > 1.0
    }

    /// `m > sqrt(2)`.
    pub fn is_strongly_supercritical(&self) -> bool {
        self.mean() > std::f64::consts::SQRT_2
    }

    /// Every cell has at least one alive daughter, so the tree never dies out.
    pub fn satisfies_h3(&self) -> bool {
        (self.p10 + self.p0 + self.p1 - 1.0).abs() <= H3_TOLERANCE
    }

    pub fn require_h2(&self) -> Result<()> {
        if self.is_strongly_supercritical() {
            Ok(())
        } else {
            Err(Error::NotStronglySupercritical(self.mean()))
        }
    }

    pub fn require_h3(&self) -> Result<()> {
        if self.satisfies_h3() {
            Ok(())
        } else {
            Err(Error::NoExtinctionViolated(self.p10 + self.p0 + self.p1))
        }
    }

    /// Reproduction generating function of the generation sizes.
    pub fn generating_function(&self, z: f64) -> f64 {
        generating_function(self, z)
    }

    /// Smallest fixed point of the generating function on `[0, 1]`.
    ///
    /// One root of `psi(z) = z` is always 1; the other is `p_none / p10`.
    pub fn extinction_probability(&self) -> f64 {
        if self.mean() <= 1.0 || self.p10 == 0.0 {
            1.0
        } else {
            (self.p_none() / self.p10).min(1.0)
        }
    }

    /// Maps a uniform draw in `[0, 1)` to a cell kind.
    pub fn kind_for(&self, u: f64) -> CellKind {
        if u < self.p10 {
            CellKind::BothAlive
        } else if u < self.p10 + self.p0 {
            CellKind::NewOnly
        } else if u < self.p10 + self.p0 + self.p1 {
            CellKind::OldOnly
        } else {
            CellKind::NoneAlive
        }
    }
}

/// `m = 2 p10 + p0 + p1`.
pub fn mean_offspring(law: &OffspringLaw) -> f64 {
    2.0 * law.p10 + law.p0 + law.p1
}

/// `psi(z) = p_none + (p0 + p1) z + p10 z^2`.
pub fn generating_function(law: &OffspringLaw, z: f64) -> f64 {
    law.p_none() + (law.p0 + law.p1) * z + law.p10 * z * z
}

/// Expected sizes `(E|G_r*|, E|T_r*|) = (m^r, (m^{r+1} - 1) / (m - 1))`.
pub fn expected_sizes(m: f64, r: u32) -> Result<(f64, f64)> {
    if !(m > 1.0) {
        return Err(Error::NotSupercritical(m));
    }
    let mr = m.powi(r as i32);
    Ok((mr, (m * mr - 1.0) / (m - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub label: Label,
    pub kind: CellKind,
    first_daughter: u32,
}

const NO_DAUGHTER: u32 = u32::MAX;

impl Node {
    pub fn generation(&self) -> u32 {
        self.label.generation()
    }
}

/// Cells of `T_n*` split by which daughters are alive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CellClasses {
    pub both: Vec<Label>,
    pub new_only: Vec<Label>,
    pub old_only: Vec<Label>,
}

/// Arena of alive cells stored generation by generation in label order.
#[derive(Debug, Clone, PartialEq)]
pub struct GwTree {
    law: OffspringLaw,
    max_depth: u32,
    nodes: Vec<Node>,
    // gen_start[r]..gen_start[r + 1] is generation r; length max_depth + 2.
    gen_start: Vec<usize>,
}

impl GwTree {
    /// Samples the alive cells up to generation `max_depth`.
    ///
    /// Consumes exactly one uniform `f64` per alive cell, in label order,
    /// including cells of the last generation (whose kind is recorded but whose
    /// daughters are not stored).
    pub fn sample<R: Rng + ?Sized>(law: &OffspringLaw, max_depth: u32, rng: &mut R) -> Result<Self> {
        law.validate()?;
        if max_depth > MAX_SUPPORTED_DEPTH {
            return Err(Error::DepthCap { depth: max_depth, cap: MAX_SUPPORTED_DEPTH });
        }
        let mut nodes = vec![Node { label: Label::ROOT, kind: CellKind::NoneAlive, first_daughter: NO_DAUGHTER }];
        let mut gen_start = vec![0usize, 1];
        for r in 0..=max_depth {
            let (start, end) = (gen_start[r as usize], gen_start[r as usize + 1]);
            for idx in start..end {
                let kind = law.kind_for(rng.random::<f64>());
                nodes[idx].kind = kind;
                if r == max_depth || kind == CellKind::NoneAlive {
                    continue;
                }
                let label = nodes[idx].label;
                nodes[idx].first_daughter = nodes.len() as u32;
                for pole in [Pole::New, Pole::Old] {
                    if kind.has_daughter(pole) {
                        nodes.push(Node { label: label.daughter(pole), kind: CellKind::NoneAlive, first_daughter: NO_DAUGHTER });
                    }
                }
            }
            if r < max_depth {
                gen_start.push(nodes.len());
            }
        }
        if nodes.len() > u32::MAX as usize {
            return Err(Error::DepthCap { depth: max_depth, cap: MAX_SUPPORTED_DEPTH });
        }
        Ok(Self { law: *law, max_depth, nodes, gen_start })
    }

    /// Builds a tree from explicit `(label, kind)` records, checking every
    /// structural invariant.
    pub fn from_records(law: OffspringLaw, max_depth: u32, mut records: Vec<(Label, CellKind)>) -> Result<Self> {
        law.validate()?;
        if max_depth > MAX_SUPPORTED_DEPTH {
            return Err(Error::DepthCap { depth: max_depth, cap: MAX_SUPPORTED_DEPTH });
        }
        records.sort_by_key(|(l, _)| *l);
        if records.first().map(|(l, _)| *l) != Some(Label::ROOT) {
            return Err(Error::MalformedTree("the root (label 1) is missing".into()));
        }
        if records.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::MalformedTree("duplicate label".into()));
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(records.len());
        let mut gen_start = vec![0usize];
        for (label, kind) in records {
            if label.0 == 0 {
                return Err(Error::MalformedTree("label 0 is not a cell".into()));
            }
            let g = label.generation();
            if g > max_depth {
                return Err(Error::MalformedTree(format!("cell {label} lies below depth {max_depth}")));
            }
            while gen_start.len() <= g as usize {
                gen_start.push(nodes.len());
            }
            nodes.push(Node { label, kind, first_daughter: NO_DAUGHTER });
        }
        while gen_start.len() < max_depth as usize + 2 {
            gen_start.push(nodes.len());
        }
        let mut tree = Self { law, max_depth, nodes, gen_start };
        tree.link_daughters()?;
        tree.check_invariants()?;
        Ok(tree)
    }

    fn link_daughters(&mut self) -> Result<()> {
        for idx in 0..self.nodes.len() {
            let node = self.nodes[idx];
            if node.generation() == self.max_depth {
                continue;
            }
            let mut first = None;
            for pole in [Pole::New, Pole::Old] {
                let daughter = node.label.daughter(pole);
                let found = self.index_of(daughter);
                match (node.kind.has_daughter(pole), found) {
                    (true, Some(i)) => {
                        first.get_or_insert(i);
                    }
                    (true, None) => {
                        return Err(Error::MalformedTree(format!(
                            "cell {daughter} should be alive (mother {} is {})",
                            node.label,
                            node.kind.as_str()
                        )));
                    }
                    (false, Some(_)) => {
                        return Err(Error::MalformedTree(format!(
                            "cell {daughter} is alive but its mother {} is {}",
                            node.label,
                            node.kind.as_str()
                        )));
                    }
                    (false, None) => {}
                }
            }
            self.nodes[idx].first_daughter = first.map_or(NO_DAUGHTER, |i| i as u32);
        }
        Ok(())
    }

    /// Full scan of the structural invariants.
    pub fn check_invariants(&self) -> Result<()> {
        if self.nodes.first().map(|n| n.label) != Some(Label::ROOT) {
            return Err(Error::MalformedTree("the root (label 1) is missing".into()));
        }
        for r in 0..=self.max_depth {
            let range = self.generation_range(r)?;
            if range.len() as u128 > 1u128 << r {
                return Err(Error::MalformedTree(format!("generation {r} has {} > 2^{r} cells", range.len())));
            }
            let nodes = &self.nodes[range];
            if nodes.iter().any(|n| n.generation() != r) || nodes.windows(2).any(|w| w[0].label >= w[1].label) {
                return Err(Error::MalformedTree(format!("generation {r} is not stored in label order")));
            }
        }
        for node in &self.nodes[1..] {
            let parent = node.label.parent().expect("non-root");
            let pkind = self.kind(parent).ok_or_else(|| Error::MalformedTree(format!("cell {} has a dead mother", node.label)))?;
            if !pkind.has_daughter(node.label.pole()) {
                return Err(Error::MalformedTree(format!("cell {} is alive but its mother is {}", node.label, pkind.as_str())));
            }
        }
        Ok(())
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn check_generation(&self, r: u32) -> Result<()> {
        if r > self.max_depth {
            Err(Error::GenerationOutOfRange { requested: r, max_depth: self.max_depth })
        } else {
            Ok(())
        }
    }

    /// Arena indices of `G_r*`.
    pub fn generation_range(&self, r: u32) -> Result<Range<usize>> {
        self.check_generation(r)?;
        Ok(self.gen_start[r as usize]..self.gen_start[r as usize + 1])
    }

    /// Arena indices of `T_r*`.
    pub fn cumulative_range(&self, r: u32) -> Result<Range<usize>> {
        self.check_generation(r)?;
        Ok(0..self.gen_start[r as usize + 1])
    }

    pub fn generation_size(&self, r: u32) -> Result<usize> {
        self.generation_range(r).map(|r| r.len())
    }

    pub fn cumulative_size(&self, r: u32) -> Result<usize> {
        self.cumulative_range(r).map(|r| r.len())
    }

    /// Alive labels of generation `r`.
    pub fn generation_nodes(&self, r: u32) -> Result<Vec<Label>> {
        Ok(self.nodes[self.generation_range(r)?].iter().map(|n| n.label).collect())
    }

    /// Alive labels of generations `0..=r`.
    pub fn cumulative_nodes(&self, r: u32) -> Result<Vec<Label>> {
        Ok(self.nodes[self.cumulative_range(r)?].iter().map(|n| n.label).collect())
    }

    pub fn index_of(&self, label: Label) -> Option<usize> {
        if label.0 == 0 {
            return None;
        }
        let g = label.generation();
        if g > self.max_depth {
            return None;
        }
        let range = self.gen_start[g as usize]..self.gen_start[g as usize + 1];
        let start = range.start;
        self.nodes[range].binary_search_by_key(&label, |n| n.label).ok().map(|i| start + i)
    }

    pub fn contains(&self, label: Label) -> bool {
        self.index_of(label).is_some()
    }

    pub fn kind(&self, label: Label) -> Option<CellKind> {
        self.index_of(label).map(|i| self.nodes[i].kind)
    }

    /// Arena index of an alive daughter stored in the tree.
    pub fn daughter_index(&self, idx: usize, pole: Pole) -> Option<usize> {
        let node = &self.nodes[idx];
        if node.first_daughter == NO_DAUGHTER || !node.kind.has_daughter(pole) {
            return None;
        }
        let first = node.first_daughter as usize;
        match (node.kind, pole) {
            (CellKind::BothAlive, Pole::Old) => Some(first + 1),
            _ => Some(first),
        }
    }

    /// Whether the daughters of the cell at `idx` are stored (or known dead).
    pub fn daughters_resolved(&self, idx: usize) -> bool {
        let node = &self.nodes[idx];
        node.kind == CellKind::NoneAlive || node.first_daughter != NO_DAUGHTER
    }

    /// Number of alive cells in generation `max_depth + 1`, read from the
    /// kinds recorded on the last stored generation.
    pub fn frontier_offspring(&self) -> u64 {
        self.nodes[self.gen_start[self.max_depth as usize]..].iter().map(|n| n.kind.alive_daughters()).sum()
    }

    /// Arena indices of `T_n*` split by kind. Requires `n < max_depth`.
    pub(crate) fn class_indices(&self, n: u32) -> Result<[Vec<usize>; 3]> {
        if n >= self.max_depth {
            return Err(Error::GenerationOutOfRange { requested: n + 1, max_depth: self.max_depth });
        }
        let mut out: [Vec<usize>; 3] = Default::default();
        for idx in self.cumulative_range(n)? {
            match self.nodes[idx].kind {
                CellKind::BothAlive => out[0].push(idx),
                CellKind::NewOnly => out[1].push(idx),
                CellKind::OldOnly => out[2].push(idx),
                CellKind::NoneAlive => {}
            }
        }
        Ok(out)
    }

    /// Cells of `T_n*` with two, only the new-pole, or only the old-pole
    /// daughter alive.
    pub fn classify_cells(&self, n: u32) -> Result<CellClasses> {
        let [both, new_only, old_only] = self.class_indices(n)?;
        let labels = |v: Vec<usize>| v.into_iter().map(|i| self.nodes[i].label).collect();
        Ok(CellClasses { both: labels(both), new_only: labels(new_only), old_only: labels(old_only) })
    }

    /// Newline-delimited `label,generation,kind` records preceded by a
    /// `#` header line carrying the depth and the law.
    pub fn to_fixture(&self) -> String {
        let mut out = format!("# gwtree max_depth={} p10={} p0={} p1={}\n", self.max_depth, self.law.p10, self.law.p0, self.law.p1);
        for n in &self.nodes {
            out.push_str(&format!("{},{},{}\n", n.label, n.generation(), n.kind.as_str()));
        }
        out
    }

    pub fn from_fixture(text: &str) -> Result<Self> {
        let mut header: Option<(u32, OffspringLaw)> = None;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(h) = parse_header(rest) {
                    header = Some(h.map_err(|reason| Error::Parse { line: line_no, reason })?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse { line: line_no, reason: "expected `label,generation,kind`".into() });
            }
            let label = Label(fields[0].parse().map_err(|e| Error::Parse { line: line_no, reason: format!("label: {e}") })?);
            let generation: u32 = fields[1].parse().map_err(|e| Error::Parse { line: line_no, reason: format!("generation: {e}") })?;
            if label.0 == 0 || label.generation() != generation {
                return Err(Error::Parse { line: line_no, reason: format!("generation {generation} does not match label {label}") });
            }
            let kind = fields[2].parse().map_err(|reason| Error::Parse { line: line_no, reason })?;
            records.push((label, kind));
        }
        let (max_depth, law) = header.ok_or(Error::Parse { line: 1, reason: "missing `# gwtree` header".into() })?;
        Self::from_records(law, max_depth, records)
    }
}

fn parse_header(rest: &str) -> Option<std::result::Result<(u32, OffspringLaw), String>> {
    let mut words = rest.split_whitespace();
    if words.next() != Some("gwtree") {
        return None;
    }
    let mut depth = None;
    let (mut p10, mut p0, mut p1) = (None, None, None);
    for w in words {
        let Some((k, v)) = w.split_once('=') else {
            return Some(Err(format!("bad header field `{w}`")));
        };
        let parsed = match k {
            "max_depth" => v.parse::<u32>().map(|d| depth = Some(d)).map_err(|e| e.to_string()),
            "p10" => v.parse::<f64>().map(|p| p10 = Some(p)).map_err(|e| e.to_string()),
            "p0" => v.parse::<f64>().map(|p| p0 = Some(p)).map_err(|e| e.to_string()),
            "p1" => v.parse::<f64>().map(|p| p1 = Some(p)).map_err(|e| e.to_string()),
            other => Err(format!("unknown header field `{other}`")),
        };
        if let Err(e) = parsed {
            return Some(Err(e));
        }
    }
    Some(match (depth, p10, p0, p1) {
        (Some(d), Some(p10), Some(p0), Some(p1)) => Ok((d, OffspringLaw { p10, p0, p1 })),
        _ => Err("header needs max_depth, p10, p0 and p1".into()),
    })
}

/// Samples only the generation sizes `|G_0*|, ..., |G_max_depth*|`.
///
/// The kinds of the `Z` cells of a generation are multinomial, drawn as three
/// successive binomials. Much cheaper than [`GwTree::sample`] when cell
/// identities are not needed.
pub fn sample_generation_sizes<R: Rng + ?Sized>(law: &OffspringLaw, max_depth: u32, rng: &mut R) -> Result<Vec<u64>> {
    law.validate()?;
    let mut sizes = Vec::with_capacity(max_depth as usize + 1);
    sizes.push(1);
    sizes.extend(extend_generation_sizes(law, 1, max_depth, rng)?);
    Ok(sizes)
}

/// Continues a generation-size path from `start` cells for `generations`
/// further generations; returns the `generations` new sizes.
pub fn extend_generation_sizes<R: Rng + ?Sized>(law: &OffspringLaw, start: u64, generations: u32, rng: &mut R) -> Result<Vec<u64>> {
    law.validate()?;
    let mut out = Vec::with_capacity(generations as usize);
    let mut z = start;
    for _ in 0..generations {
        z = next_generation_size(law, z, rng)?;
        out.push(z);
    }
    Ok(out)
}

fn next_generation_size<R: Rng + ?Sized>(law: &OffspringLaw, z: u64, rng: &mut R) -> Result<u64> {
    let both = binomial(z, law.p10, rng)?;
    let rest = z - both;
    let new_only = binomial(rest, conditional(law.p0, 1.0 - law.p10), rng)?;
    let rest = rest - new_only;
    let old_only = binomial(rest, conditional(law.p1, 1.0 - law.p10 - law.p0), rng)?;
    2u64.checked_mul(both)
        .and_then(|b| b.checked_add(new_only + old_only))
        .ok_or(Error::DepthCap { depth: MAX_SUPPORTED_DEPTH + 1, cap: MAX_SUPPORTED_DEPTH })
}

fn conditional(p: f64, remaining: f64) -> f64 {
    if remaining <= 0.0 {
        0.0
    } else {
        (p / remaining).clamp(0.0, 1.0)
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    if n == 0 || p <= 0.0 {
        return Ok(0);
    }
    if p >= 1.0 {
        return Ok(n);
    }
    let dist = Binomial::new(n, p).map_err(|e| Error::InvalidLaw(e.to_string()))?;
    Ok(dist.sample(rng))
}
