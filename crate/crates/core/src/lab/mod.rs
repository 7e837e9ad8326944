//! Deviation bounds, regimes, and Monte Carlo deviation experiments.

pub mod binomial;
pub mod bounds;
pub mod decay;
pub mod experiment;
pub mod regime;

pub use binomial::clopper_pearson;
pub use bounds::{
    a_r_term, bound_centered, bound_conditional, bound_theta, bound_uncentered, calibrate_centered, h_r, r0_threshold, Bound,
    BoundConstants, BoundOutcome, CalibratedConstant, Calibration,
};
pub use decay::{decay_fit, DecayFit, DecayPoint, DecayTransform, ExcludedPoint};
pub use experiment::{
    mc_conditional_deviation, mc_deviation, mc_gw_lln, mc_theta_deviation, theta_deviation_from_replicates, theta_replicates,
    ConditionalEstimate, DeviationEstimate, DeviationSpec, GwLlnSpec, ModelSpec, ThetaDeviationSpec, ThetaReplicate, CONFIDENCE,
    DEFAULT_W_OFFSET,
};
pub use regime::{classify_regime, RegimeLabel};
