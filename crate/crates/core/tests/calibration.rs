mod common;

use barlab_core::{
    bound_centered, calibrate_centered, classify_regime, ergodicity_alpha, stationary_moments, BarParams, BoundConstants, NoiseMode,
    NoiseSpec, OffspringLaw, RegimeLabel, SetKind,
};
use common::{exceedance, midpoint_grid, reference_system};

/// Calibrating at `r = 1` on exact probabilities, then the bound dominates at `r = 2`.
#[test]
fn calibrated_bound_dominates_enumerated_system() {
    let sys = reference_system();
    let law = OffspringLaw::new(sys.p10, sys.p0, sys.p1).unwrap();
    let params = BarParams::from_array(sys.theta).unwrap();
    let noise = NoiseSpec::gaussian(sys.sigma, sys.rho, sys.sigma0, sys.sigma1, 4.0).unwrap().with_mode(NoiseMode::TwoPoint);
    let mu = stationary_moments(&params, &noise, &law).unwrap().mu1;
    let (m, alpha) = (law.mean(), ergodicity_alpha(&params));
    assert_eq!(classify_regime(m, alpha).unwrap(), RegimeLabel::SubUnit);
    let law1 = sys.tilde_law(1, |x| x - mu);
    let law2 = sys.tilde_law(2, |x| x - mu);
    let positive: Vec<(f64, f64)> = law1.iter().chain(&law2).copied().filter(|a| a.0 > 0.0).collect();
    let grid = midpoint_grid(&positive, 8);
    assert!(grid.len() >= 4);
    for delta in grid {
        let p1 = exceedance(&law1, delta);
        let p2 = exceedance(&law2, delta);
        let cal = calibrate_centered(p1, delta, 1, m, alpha, SetKind::Generation, &BoundConstants::default()).unwrap();
        let b1 = bound_centered(delta, 1, m, alpha, SetKind::Generation, &cal.constants).unwrap().value().unwrap();
        let b2 = bound_centered(delta, 2, m, alpha, SetKind::Generation, &cal.constants).unwrap().value().unwrap();
        println!("delta={delta:.4} p1={p1:.4} p2={p2:.4} c''={:.4e} b1={b1:.4} b2={b2:.4}", cal.constants.c_second);
        assert!(b1 >= p1 * (1.0 - 1e-12));
        assert!(b2 >= p2, "delta = {delta}: exact {p2} exceeds calibrated bound {b2}");
    }
}
