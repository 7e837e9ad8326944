//! The ten acceptance criteria, one `criterion N: PASS|FAIL` line each.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use barlab_core::rng::{self, Domain};
use barlab_core::*;
use common::{exceedance, midpoint_grid, reference_system};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn law(p10: f64, p0: f64, p1: f64) -> OffspringLaw {
    OffspringLaw::new(p10, p0, p1).unwrap()
}

fn params(v: [f64; 8]) -> BarParams {
    BarParams::from_array(v).unwrap()
}

fn theta() -> BarParams {
    params([0.5, 1.0, 0.3, 0.8, 0.4, 0.9, 0.2, 1.1])
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Tree moments at r = 8 on a single worker.
fn criterion_1() -> Check {
    let law = law(0.9, 0.05, 0.05);
    let start = Instant::now();
    let n = 20_000u64;
    let (gen, tree): (Vec<f64>, Vec<f64>) = pool(1).install(|| {
        (0..n)
            .map(|i| {
                let t = GwTree::sample(&law, 8, &mut rng::stream(101, Domain::User, i)).unwrap();
                (t.generation_size(8).unwrap() as f64, t.cumulative_size(8).unwrap() as f64)
            })
            .unzip()
    });
    let elapsed = start.elapsed();
    let (eg, et) = expected_sizes(law.mean(), 8).unwrap();
    let (mg, sg) = mean_se(&gen);
    let (mt, st) = mean_se(&tree);
    ensure(
        (mg - eg).abs() <= 4.0 * sg && (mt - et).abs() <= 4.0 * st && elapsed < Duration::from_secs(30),
        format!("E|G_8| {mg:.2} +- {sg:.2} vs {eg:.2}; E|T_8| {mt:.2} +- {st:.2} vs {et:.2}; {:.2?} single-worker", elapsed),
    )
}

/// No extinction under (H3).
fn criterion_2() -> Check {
    let mut detail = Vec::new();
    let mut ok = true;
    for l in [law(0.9, 0.05, 0.05), law(0.1, 0.45, 0.45)] {
        let extinct =
            (0..100_000u64).filter(|&i| sample_generation_sizes(&l, 30, &mut rng::stream(102, Domain::User, i)).unwrap()[30] == 0).count();
        ok &= extinct == 0 && l.extinction_probability() == 0.0;
        detail.push(format!("m = {:.2}: {extinct} extinct of 100000 at depth 30", l.mean()));
    }
    ensure(ok, detail.join("; "))
}

/// Monte Carlo deviation frequencies against exhaustive enumeration.
fn criterion_3() -> Check {
    let sys = reference_system();
    let exact_law = sys.tilde_law(2, |x| x);
    let deltas = midpoint_grid(&exact_law, 5);
    let spec = DeviationSpec {
        model: ModelSpec {
            law: law(sys.p10, sys.p0, sys.p1),
            params: params(sys.theta),
            noise: NoiseSpec::gaussian(sys.sigma, sys.rho, sys.sigma0, sys.sigma1, 4.0).unwrap().with_mode(NoiseMode::TwoPoint),
            init: InitialLaw::Point { value: sys.x0 },
        },
        function: CellFunction::new(|x| x, f64::INFINITY).into(),
        deltas: deltas.clone(),
        depths: vec![2],
        n_rep: 100_000,
        set_kind: SetKind::Generation,
        centering: None,
        w_offset: 0,
        seed: 103,
    };
    let out = mc_deviation(&spec).unwrap();
    let mut worst: f64 = 0.0;
    for (est, &delta) in out.iter().zip(&deltas) {
        let p = exceedance(&exact_law, delta);
        worst = worst.max((est.p_hat - p).abs() / est.standard_error(p).max(1e-300));
    }
    ensure(worst <= 4.0, format!("5-point grid, n_rep 1e5: largest deviation {worst:.2} standard errors"))
}

/// Exact recovery from noiseless data.
fn criterion_4() -> Check {
    let truth = theta();
    let noiseless = NoiseSpec::noiseless();
    let init = InitialLaw::Point { value: 5.0 };
    // Full tree: the two-daughter regressions are exact, one-daughter classes are empty.
    let full = {
        let mut rng = rng::stream(104, Domain::User, 0);
        let tree = GwTree::sample(&law(1.0, 0.0, 0.0), 6, &mut rng).unwrap();
        lse(&simulate_population(tree, &truth, &noiseless, &init, &mut rng).unwrap(), 5).unwrap()
    };
    let t = truth.to_array();
    let full_err = full.components()[..4].iter().zip(&t[..4]).map(|(c, v)| (c.unwrap() - v).abs()).fold(0.0, f64::max);
    let full_ok = full_err < 1e-10 && full.fit(Regression::NewOnly).is_err() && full.fit(Regression::OldOnly).is_err();
    // Sampled tree with all three cell classes: all eight parameters.
    let sampled = (0..100u64)
        .find_map(|i| {
            let mut rng = rng::stream(104, Domain::User, 1 + i);
            let tree = GwTree::sample(&law(0.6, 0.2, 0.2), 9, &mut rng).unwrap();
            let est = lse(&simulate_population(tree, &truth, &noiseless, &init, &mut rng).unwrap(), 8).unwrap();
            est.is_complete().then_some(est)
        })
        .unwrap();
    let err = sampled.theta().unwrap().iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(
        full_ok && err < 1e-10,
        format!("full tree: max error {full_err:.1e} on the four two-daughter parameters; sampled tree: max error {err:.1e} on all eight"),
    )
}

/// Closed-form stationary moments against 1e6-step chains.
fn criterion_5() -> Check {
    let cases = [
        ("symmetric", law(0.9, 0.05, 0.05), params([0.5, 1.0, 0.5, 1.0, 0.5, 1.0, 0.5, 1.0]), NoiseSpec::gaussian(0.3, 0.0, 0.3, 0.3, 4.0)),
        ("reference", law(0.9, 0.05, 0.05), theta(), NoiseSpec::gaussian(0.3, 0.2, 0.3, 0.3, 4.0)),
        (
            "asymmetric",
            law(0.5, 0.3, 0.2),
            params([-0.6, 2.0, 0.7, -1.0, 0.2, 0.5, -0.3, 1.5]),
            NoiseSpec::gaussian(0.8, 0.6, 0.3, 1.2, 2.0),
        ),
    ];
    let mut detail = Vec::new();
    let mut ok = true;
    for (i, (name, law, params, noise)) in cases.into_iter().enumerate() {
        let noise = noise.unwrap();
        let exact = stationary_moments(&params, &noise, &law).unwrap();
        let chain = EmbeddedChain::new(&params, &noise, &law).unwrap();
        let mut rng = rng::stream(105, Domain::LongRun, i as u64);
        let est = long_run_averages(&chain, &[&|x| x, &|x| x * x], 0.0, LongRunConfig::default(), &mut rng).unwrap();
        let z1 = (est[0].mean - exact.mu1) / est[0].se;
        let z2 = (est[1].mean - exact.mu2) / est[1].se;
        ok &= z1.abs() <= 4.0 && z2.abs() <= 4.0;
        detail.push(format!("{name}: mu1 z = {z1:.2}, mu2 z = {z2:.2}"));
    }
    ensure(ok, detail.join("; "))
}

/// Fitted geometric rate of the Q^k gap.
fn criterion_6() -> Check {
    let l = law(0.9, 0.05, 0.05);
    let p = params([0.6, 1.0, 0.5, 0.8, 0.55, 0.9, 0.45, 1.1]);
    let noise = NoiseSpec::gaussian(0.3, 0.2, 0.3, 0.3, 4.0).unwrap();
    let alpha = ergodicity_alpha(&p);
    let chain = EmbeddedChain::new(&p, &noise, &l).unwrap();
    let mu = stationary_moments(&p, &noise, &l).unwrap().mu1;
    let reference =
        long_run_averages(&chain, &[&|x| x], mu, LongRunConfig::default(), &mut rng::stream(106, Domain::LongRun, 0)).unwrap()[0];
    let curve = empirical_qk_gap(&chain, &|x| x, &[mu - 5.0, mu + 5.0], 25, 20_000, &reference, 106).unwrap();
    let fit = fit_geometric_rate(&curve, 25, 3.0).unwrap();
    ensure(
        (alpha - 0.6).abs() < 1e-15 && (0.4..=0.65).contains(&fit.rate),
        format!("alpha = {alpha}; fitted rate {:.4} from {} points", fit.rate, fit.points_used),
    )
}

struct RegimeRun {
    label: RegimeLabel,
    cells: Vec<DeviationEstimate>,
    slope: Result<f64, String>,
}

fn regime_run(p: BarParams, seed: u64) -> RegimeRun {
    let l = law(0.9, 0.05, 0.05);
    let noise = NoiseSpec::gaussian(1.2, 0.2, 1.2, 1.2, 4.0).unwrap();
    let mu1 = stationary_moments(&p, &noise, &l).unwrap().mu1;
    let chain = EmbeddedChain::new(&p, &noise, &l).unwrap();
    let mu =
        long_run_averages(&chain, &[&|x| x], mu1, LongRunConfig::default(), &mut rng::stream(seed, Domain::LongRun, 0)).unwrap()[0].mean;
    let spec = DeviationSpec {
        model: ModelSpec { law: l, params: p, noise, init: InitialLaw::Point { value: mu1 } },
        function: CellFunction::new(move |x| x - mu, f64::INFINITY).into(),
        deltas: vec![0.3],
        depths: vec![4, 6, 8],
        n_rep: 100_000,
        set_kind: SetKind::Generation,
        centering: None,
        w_offset: DEFAULT_W_OFFSET,
        seed,
    };
    let cells = mc_deviation(&spec).unwrap();
    RegimeRun {
        label: classify_regime(l.mean(), ergodicity_alpha(&p)).unwrap(),
        slope: decay_fit(&cells, DecayTransform::VsR).map(|f| f.slope).map_err(|e| e.to_string()),
        cells,
    }
}

/// Faster decay in the sub-unit regime than in the super-sqrt2 regime.
fn criterion_7() -> Check {
    let start = Instant::now();
    let (fast, slow) = pool(8).install(|| {
        (
            regime_run(params([0.3, 1.0, 0.2, 0.8, 0.25, 0.9, 0.1, 1.1]), 107),
            regime_run(params([0.78, 1.0, 0.7, 0.8, 0.6, 0.9, 0.5, 1.1]), 207),
        )
    });
    let elapsed = start.elapsed();
    let mut ok = fast.label == RegimeLabel::SubUnit && slow.label == RegimeLabel::SuperSqrt2 && elapsed < Duration::from_secs(300);
    let mut detail = Vec::new();
    for run in [&fast, &slow] {
        let (c4, c8) = (run.cells[0], run.cells[2]);
        ok &= c8.p_hat < c4.p_hat && (c4.p_hat <= 0.05 || c8.ci_high < c4.ci_low);
        let p: Vec<String> = run.cells.iter().map(|c| format!("{:.4}", c.p_hat)).collect();
        detail.push(format!("{}: p_hat(4,6,8) = [{}], slope {:?}", run.label, p.join(", "), run.slope));
    }
    match (&fast.slope, &slow.slope) {
        (Ok(a), Ok(b)) => ok &= a > b,
        _ => ok = false,
    }
    detail.push(format!("{elapsed:.1?} on 8 workers"));
    ensure(ok, detail.join("; "))
}

fn value(b: BoundOutcome) -> f64 {
    b.value().expect("bound applies")
}

/// Hand-substituted bound values and the calibrated domination check.
fn criterion_8() -> Check {
    let unit = BoundConstants::default();
    let l = law(0.9, 0.05, 0.05);
    let m: f64 = 1.9;
    let h = |e: i32| (m * m / 2.0).powi(e);
    let mut worst: f64 = 0.0;
    let mut check = |got: f64, want: f64| worst = worst.max(rel(got, want));
    check(value(bound_centered(0.5, 2, m, 0.4, SetKind::Generation, &unit).unwrap()), (0.5f64 - 0.25 * 1.805 * 1.805).exp());
    check(value(bound_centered(0.5, 10, m, 0.78, SetKind::Generation, &unit).unwrap()), (-0.25 / 0.78f64.powi(20)).exp());
    check(value(bound_centered(0.3, 6, m, 0.6, SetKind::Generation, &BoundConstants { c0: 0.05, ..unit }).unwrap()), (-0.09 * h(6)).exp());
    check(a_r_term(1.0, 3, &l, SetKind::Generation, &unit).unwrap().value, (-1.9f64).exp());
    let a_tree = |x: f64, r: u32| {
        let t = (m.powi(r as i32 + 1) - 1.0) / (m - 1.0);
        let x23 = x.powf(2.0 / 3.0);
        (x23 - x23 * (t / ((r + 1) as f64).powi(2)).cbrt()).exp()
    };
    check(a_r_term(0.7, 5, &l, SetKind::Tree, &unit).unwrap().value, a_tree(0.7, 5));
    let cond = BoundConstants { b: 0.2, ..unit };
    let x: f64 = 0.5 * 0.2;
    let a_gen = (-x.powf(2.0 / 3.0) * m.powf(4.0 / 3.0)).exp();
    check(value(bound_conditional(0.5, 4, &l, 0.4, SetKind::Generation, &cond).unwrap()), (x - x * x * h(4)).exp() + a_gen);
    let th = BoundConstants { b: 0.1, gamma: 0.2, ..unit };
    let x = 0.2 * 1.0 * 0.1;
    check(value(bound_theta(1.0, 5, &l, 0.4, &th).unwrap()), (x - x * x * h(6)).exp() + a_tree(x, 5));
    let rejected = bound_conditional(0.5, 4, &l, 0.4, SetKind::Generation, &BoundConstants { b: 1.0 / 1.5, ..unit }).is_err()
        && bound_theta(1.0, 5, &l, 0.4, &BoundConstants { b: 0.1, gamma: 0.5, ..unit }).is_err()
        && matches!(
            bound_centered(0.5, 1, m, 0.6, SetKind::Generation, &BoundConstants { c0: 50.0, ..unit }).unwrap(),
            BoundOutcome::Inapplicable { .. }
        );
    // Calibrate at r = 1 on the enumerated system, then compare at r = 2.
    let sys = reference_system();
    let sl = law(sys.p10, sys.p0, sys.p1);
    let p = params(sys.theta);
    let noise = NoiseSpec::gaussian(sys.sigma, sys.rho, sys.sigma0, sys.sigma1, 4.0).unwrap().with_mode(NoiseMode::TwoPoint);
    let mu = stationary_moments(&p, &noise, &sl).unwrap().mu1;
    let alpha = ergodicity_alpha(&p);
    let (law1, law2) = (sys.tilde_law(1, |v| v - mu), sys.tilde_law(2, |v| v - mu));
    let positive: Vec<(f64, f64)> = law1.iter().chain(&law2).copied().filter(|a| a.0 > 0.0).collect();
    let mut dominated = 0;
    let grid = midpoint_grid(&positive, 8);
    for &delta in &grid {
        let cal = calibrate_centered(exceedance(&law1, delta), delta, 1, sl.mean(), alpha, SetKind::Generation, &unit).unwrap();
        let b2 = value(bound_centered(delta, 2, sl.mean(), alpha, SetKind::Generation, &cal.constants).unwrap());
        dominated += (b2 >= exceedance(&law2, delta)) as usize;
    }
    ensure(
        worst < 1e-12 && rejected && dominated == grid.len(),
        format!(
            "largest relative error {worst:.1e}; constraint rejections {rejected}; domination at r = 2 on {dominated}/{} grid points",
            grid.len()
        ),
    )
}

/// Estimator error shrinks from n = 5 to n = 10.
fn criterion_9() -> Check {
    let spec = ThetaDeviationSpec {
        model: ModelSpec {
            law: law(0.9, 0.05, 0.05),
            params: theta(),
            noise: NoiseSpec::gaussian(0.3, 0.2, 0.3, 0.3, 4.0).unwrap(),
            init: InitialLaw::default(),
        },
        deltas: vec![0.5],
        depths: vec![5, 10],
        n_rep: 2000,
        a: 0.5,
        w_offset: DEFAULT_W_OFFSET,
        seed: 109,
    };
    let reps = theta_replicates(&spec).unwrap();
    let median = |j: usize| -> Option<f64> {
        let mut e: Vec<f64> = reps.iter().filter_map(|r| r.errors[j]).take(200).collect();
        if e.len() < 200 {
            return None;
        }
        e.sort_by(f64::total_cmp);
        Some(0.5 * (e[99] + e[100]))
    };
    let est = theta_deviation_from_replicates(&spec, &reps).unwrap();
    let p5 = est[0].estimate().unwrap().p_hat;
    let p10 = est[1].estimate().unwrap().p_hat;
    match (median(0), median(1)) {
        (Some(m5), Some(m10)) => {
            ensure(m10 < m5 && p10 < p5, format!("median error {m5:.4} (n=5) vs {m10:.4} (n=10); p_hat(0.5) {p5:.4} vs {p10:.4}"))
        }
        _ => Err("fewer than 200 non-degenerate replicates".into()),
    }
}

fn barlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_barlab")).args(args).output().expect("barlab runs")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

const CONFIG: &str = r#"
seed = 110
[model]
law = { p10 = 0.9, p0 = 0.05, p1 = 0.05 }
params = { alpha0 = 0.5, beta0 = 1.0, alpha1 = 0.3, beta1 = 0.8, alpha0p = 0.4, beta0p = 0.9, alpha1p = 0.2, beta1p = 1.1 }
noise = { sigma = 0.3, rho = 0.2, sigma0 = 0.3, sigma1 = 0.3 }
[constants]
a = 0.5
b = 0.2
gamma = 0.2
[deviation]
deltas = [0.05, 0.2]
depths = [3, 5, 7]
n_rep = 3000
long_run = { length = 200000 }
"#;

/// Identical reports at one and eight workers.
fn criterion_10() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, CONFIG).unwrap();
    let mut detail = Vec::new();
    let mut ok = true;
    for kind in ["centered", "uncentered", "conditional", "theta", "gw-lln"] {
        let mut outputs = Vec::new();
        for jobs in ["1", "8"] {
            let out = dir.path().join(format!("{kind}-{jobs}"));
            let set = format!("deviation.kind={kind}");
            let run =
                barlab(&["deviation", "--config", config.to_str().unwrap(), "--set", &set, "--jobs", jobs, "--out", out.to_str().unwrap()]);
            assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
            outputs.push(files(&out));
        }
        let same = outputs[0] == outputs[1];
        ok &= same;
        detail.push(format!("{kind}: {} files {}", outputs[0].len(), if same { "identical" } else { "differ" }));
    }
    ensure(ok, detail.join("; "))
}

fn main() {
    let criteria: [(u32, fn() -> Check); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
