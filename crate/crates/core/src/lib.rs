//! Bifurcating autoregressive (BAR) processes on binary Galton-Watson trees.
//!
//! * [`tree`]: Galton-Watson trees of alive cells and their generation sizes.
//! * [`bar`]: BAR values attached to a tree.
//! * [`chain`]: the embedded single-lineage chain and its stationary moments.
//! * [`stats`]: sums and averages over sets of cells.
//! * [`lse`]: least-squares estimation of the eight parameters.
//! * [`lab`]: deviation bounds and Monte Carlo deviation experiments.
//!
//! Monte Carlo routines draw replicate `i` from [`rng::stream`]`(seed, domain, i)`
//! and run replicates on the current rayon pool; results do not depend on the
//! pool size.

pub mod bar;
pub mod chain;
pub mod error;
pub mod fit;
pub mod lab;
pub mod lse;
pub mod rng;
pub mod stats;
pub mod sum;
pub mod tree;

pub use bar::{
    simulate_population, simulate_population_with, state_bound, BarParams, InitialLaw, NoiseMode, NoiseSource, NoiseSpec, PairCoordinate,
    PopulationSample, SimulationOptions, Triangle,
};
pub use chain::{
    empirical_qk_gap, ergodicity_alpha, fit_geometric_rate, long_run_averages, stationary_moments, CoefficientLaw, EmbeddedChain, GapCurve,
    GapPoint, LongRunConfig, LongRunEstimate, MomentBars, RateFit, StationaryMoments,
};
pub use error::{Error, Result};
pub use lab::*;
pub use lse::{
    b_n_target, estimation_error, lse, regression_functionals, DegenerateClass, Regression, RegressionFit, RegressionFunctionals,
    ThetaEstimate,
};
pub use stats::{
    average, bar_avg, m_sum, tilde_avg, w_proxy, AverageKind, CellFunction, ClassMask, NodeFunction, NodeSet, SetKind, TriangleFunction,
};
pub use tree::{
    expected_sizes, extend_generation_sizes, generating_function, mean_offspring, sample_generation_sizes, CellKind, GwTree, Label,
    OffspringLaw, Pole,
};
