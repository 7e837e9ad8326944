use thiserror::Error;

/// Errors raised by the simulation, estimation and bound-evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),

    #[error("invalid BAR parameters: {0}")]
    InvalidParams(String),

    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("invalid initial law: {0}")]
    InvalidInit(String),

    #[error("generation {requested} is out of range (tree depth {max_depth})")]
    GenerationOutOfRange { requested: u32, max_depth: u32 },

    #[error("cell {0} is not alive in this tree")]
    NotAlive(u64),

    #[error("daughters of cell {0} are not resolvable in this sample")]
    Unresolvable(u64),

    #[error("tree depth {depth} exceeds the hard cap {cap}")]
    DepthCap { depth: u32, cap: u32 },

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("hypothesis (H2) violated: m = {0} but m > sqrt(2) is required")]
    NotStronglySupercritical(f64),

    #[error("hypothesis (H3) violated: p10 + p0 + p1 = {0}, must equal 1")]
    NoExtinctionViolated(f64),

    #[error("mean offspring m = {0} must exceed 1 (supercritical)")]
    NotSupercritical(f64),

    #[error("ergodicity rate alpha = {0} must lie in {1}")]
    AlphaOutOfRange(f64, &'static str),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("empty average: the node set has no element")]
    EmptySet,

    #[error("expected size must be positive, got {0}")]
    NonPositiveExpectedSize(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("no replicate satisfied the conditioning event")]
    NoMass,

    #[error("estimate unavailable for class {0}")]
    Unavailable(&'static str),

    #[error("rejection sampler exceeded {0} iterations")]
    RejectionCap(u64),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
