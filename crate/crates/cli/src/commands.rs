//! One function per command; each returns the report results and any extra files.

use anyhow::Context;
use barlab_core::rng::{self, Domain};
use barlab_core::*;
use serde_json::{json, Value};

use crate::config::{BoundFamily, Config, DeviationKind, FunctionSpec};

/// Results for `report.json` plus files that are not derived from them.
pub struct Outcome {
    pub results: Value,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn results(results: Value) -> Self {
        Self { results, files: Vec::new() }
    }
}

pub fn simulate(cfg: &Config) -> anyhow::Result<Outcome> {
    let m = &cfg.model;
    let depth = cfg.simulate.depth;
    let mut rng = rng::stream(cfg.seed, Domain::Simulation, 0);
    let sample = m.sample(depth, &mut rng)?;
    let tree = sample.tree();
    let mean = m.law.mean();
    let generations: Vec<Value> = (0..=depth)
        .map(|r| -> anyhow::Result<Value> {
            Ok(json!({ "generation": r, "size": tree.generation_size(r)?, "expected": mean.powi(r as i32) }))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut nodes = csv::Writer::from_writer(Vec::new());
    nodes.write_record(["label", "generation", "kind", "value"])?;
    for (node, value) in tree.nodes().iter().zip(sample.values()) {
        nodes.write_record([
            node.label.0.to_string(),
            node.generation().to_string(),
            node.kind.as_str().to_string(),
            format!("{value:?}"),
        ])?;
    }
    let files = vec![
        ("nodes.csv".to_string(), nodes.into_inner().context("flushing node table")?),
        ("tree.txt".to_string(), tree.to_fixture().into_bytes()),
        ("sample.txt".to_string(), sample.to_fixture().into_bytes()),
    ];
    let results = json!({
        "depth": depth,
        "alive_cells": tree.len(),
        "w_proxy": w_proxy(tree, depth)?,
        "state_bound": state_bound(&m.params, &m.noise, &m.init),
        "generations": generations,
    });
    Ok(Outcome { results, files })
}

pub fn estimate(cfg: &Config) -> anyhow::Result<Outcome> {
    let m = &cfg.model;
    let max_n = cfg.estimate.depths.iter().copied().max().unwrap_or(0);
    let mut rng = rng::stream(cfg.seed, Domain::Estimation, 0);
    let sample = m.sample(max_n + 1, &mut rng)?;
    let truth = m.params.to_array();
    let target = stationary_moments(&m.params, &m.noise, &m.law).ok().map(|mom| b_n_target(&m.law, &mom));
    let (mut parameters, mut fits, mut summary) = (Vec::new(), Vec::new(), Vec::new());
    for &n in &cfg.estimate.depths {
        let est = lse(&sample, n)?;
        for (i, c) in est.components().into_iter().enumerate() {
            parameters.push(json!({
                "n": n,
                "parameter": BarParams::NAMES[i],
                "estimate": c,
                "truth": truth[i],
                "abs_error": c.map(|v| (v - truth[i]).abs()),
            }));
        }
        for which in Regression::ALL {
            let row = match est.fit(which) {
                Ok(f) => {
                    json!({ "n": n, "regression": regression_name(which), "status": "ok", "count": f.count, "x_variance": f.x_variance })
                }
                Err(d) => {
                    json!({ "n": n, "regression": regression_name(which), "status": degenerate_name(d), "count": null, "x_variance": null })
                }
            };
            fits.push(row);
        }
        let functionals = regression_functionals(&sample, n, &m.params)?;
        summary.push(json!({
            "n": n,
            "cells": est.total_cells,
            "both": est.class_sizes[0],
            "new_only": est.class_sizes[1],
            "old_only": est.class_sizes[2],
            "error_norm": estimation_error(&est, &m.params).ok(),
            "b_n": functionals.b_n,
            "b_n_target": target,
        }));
    }
    Ok(Outcome::results(json!({ "observed_depth": max_n + 1, "summary": summary, "parameters": parameters, "fits": fits })))
}

fn regression_name(r: Regression) -> &'static str {
    match r {
        Regression::BothNew => "both-new",
        Regression::BothOld => "both-old",
        Regression::NewOnly => "new-only",
        Regression::OldOnly => "old-only",
    }
}

fn degenerate_name(d: DegenerateClass) -> &'static str {
    match d {
        DegenerateClass::Empty => "empty",
        DegenerateClass::Singleton => "singleton",
        DegenerateClass::ZeroVariance => "zero-variance",
    }
}

fn regime(cfg: &Config, alpha: f64) -> Value {
    let m = cfg.model.law.mean();
    match classify_regime(m, alpha) {
        Ok(label) => json!({ "m": m, "alpha": alpha, "m_alpha": m * alpha, "label": label.to_string() }),
        Err(e) => json!({ "m": m, "alpha": alpha, "m_alpha": m * alpha, "label": null, "error": e.to_string() }),
    }
}

/// Flat bound columns for a table row.
fn bound_columns(outcome: barlab_core::Result<BoundOutcome>) -> Value {
    match outcome {
        Ok(BoundOutcome::Value(b)) => json!({ "bound_status": "value", "bound": b.value, "bound_ln": b.ln, "bound_note": null }),
        Ok(BoundOutcome::Inapplicable { threshold }) => json!({
            "bound_status": "inapplicable", "bound": null, "bound_ln": null, "bound_note": format!("depth must exceed {threshold}")
        }),
        Err(e) => json!({ "bound_status": "error", "bound": null, "bound_ln": null, "bound_note": e.to_string() }),
    }
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut a, b) {
        a.extend(b);
    }
    a
}

fn estimate_row(e: &DeviationEstimate) -> Value {
    json!({
        "delta": e.delta, "depth": e.depth, "status": "estimate", "n_rep": e.n_rep, "n_used": e.n_used, "k_exceed": e.k_exceed,
        "p_hat": e.p_hat, "ci_low": e.ci_low, "ci_high": e.ci_high,
    })
}

fn conditional_row(c: &ConditionalEstimate) -> Value {
    match c {
        ConditionalEstimate::Estimate(e) => estimate_row(e),
        ConditionalEstimate::NoMass { delta, depth, n_rep, .. } => json!({
            "delta": delta, "depth": depth, "status": "no-mass", "n_rep": n_rep, "n_used": 0, "k_exceed": 0,
            "p_hat": null, "ci_low": null, "ci_high": null,
        }),
    }
}

fn decay_rows(deltas: &[f64], estimates: &[DeviationEstimate], transforms: &[(&str, DecayTransform)]) -> Vec<Value> {
    let mut rows = Vec::new();
    for &delta in deltas {
        let cells: Vec<DeviationEstimate> = estimates.iter().filter(|e| e.delta == delta).copied().collect();
        for (name, t) in transforms {
            rows.push(match decay_fit(&cells, *t) {
                Ok(f) => json!({
                    "delta": delta, "transform": name, "status": "ok", "slope": f.slope, "intercept": f.intercept,
                    "residual": f.residual, "points_used": f.used.len(), "note": null,
                }),
                Err(e) => json!({
                    "delta": delta, "transform": name, "status": "unavailable", "slope": null, "intercept": null,
                    "residual": null, "points_used": 0, "note": e.to_string(),
                }),
            });
        }
    }
    rows
}

/// `<mu, f>` from the config or from a long run of the embedded chain.
fn centering(cfg: &Config, f: FunctionSpec) -> anyhow::Result<(f64, Value)> {
    let d = &cfg.deviation;
    if let Some(c) = d.centering {
        return Ok((c, json!({ "source": "config", "value": c })));
    }
    let m = &cfg.model;
    let chain = EmbeddedChain::new(&m.params, &m.noise, &m.law)?;
    let start = stationary_moments(&m.params, &m.noise, &m.law).map(|s| s.mu1).unwrap_or(0.0);
    let mut rng = rng::stream(cfg.seed, Domain::LongRun, 0);
    let est = long_run_averages(&chain, &[&|x| f.eval(x)], start, d.long_run.into(), &mut rng)?[0];
    Ok((est.mean, json!({ "source": "long-run", "value": est.mean, "se": est.se, "burn_in": est.burn_in, "length": est.length })))
}

pub fn deviation(cfg: &Config) -> anyhow::Result<Outcome> {
    let d = &cfg.deviation;
    let m = &cfg.model;
    let law = &m.law;
    let alpha = ergodicity_alpha(&m.params);
    let k = &cfg.constants;
    let mut results = serde_json::Map::new();
    results.insert("kind".into(), serde_json::to_value(d.kind)?);
    results.insert("regime".into(), regime(cfg, alpha));
    let transforms = [("vs-r", DecayTransform::VsR), ("vs-h-r", DecayTransform::VsHr { m: law.mean(), set_kind: d.set_kind })];
    match d.kind {
        DeviationKind::Centered | DeviationKind::Uncentered => {
            let (mu, record) = centering(cfg, d.function)?;
            results.insert("centering".into(), record);
            let centered = d.kind == DeviationKind::Centered;
            let spec = DeviationSpec {
                model: *m,
                function: d.function.build(m, if centered { mu } else { 0.0 }).into(),
                deltas: d.deltas.clone(),
                depths: d.depths.clone(),
                n_rep: d.n_rep,
                set_kind: d.set_kind,
                centering: if centered { None } else { Some(mu) },
                w_offset: d.w_offset,
                seed: cfg.seed,
            };
            let estimates = mc_deviation(&spec)?;
            let cells: Vec<Value> = estimates
                .iter()
                .map(|e| {
                    let bound = if centered {
                        bound_centered(e.delta, e.depth, law.mean(), alpha, d.set_kind, k)
                    } else {
                        bound_uncentered(e.delta, e.depth, law, alpha, d.set_kind, k)
                    };
                    merge(estimate_row(e), bound_columns(bound))
                })
                .collect();
            results.insert("cells".into(), cells.into());
            results.insert("decay".into(), decay_rows(&d.deltas, &estimates, &transforms).into());
        }
        DeviationKind::Conditional => {
            let (mu, record) = centering(cfg, d.function)?;
            results.insert("centering".into(), record);
            let spec = DeviationSpec {
                model: *m,
                function: d.function.build(m, 0.0).into(),
                deltas: d.deltas.clone(),
                depths: d.depths.clone(),
                n_rep: d.n_rep,
                set_kind: d.set_kind,
                centering: Some(mu),
                w_offset: d.w_offset,
                seed: cfg.seed,
            };
            let estimates = mc_conditional_deviation(&spec, k.a)?;
            let cells: Vec<Value> = estimates
                .iter()
                .zip(d.deltas.iter().flat_map(|&delta| d.depths.iter().map(move |&r| (delta, r))))
                .map(|(c, (delta, r))| merge(conditional_row(c), bound_columns(bound_conditional(delta, r, law, alpha, d.set_kind, k))))
                .collect();
            let with_mass: Vec<DeviationEstimate> = estimates.iter().filter_map(|c| c.estimate().ok().copied()).collect();
            results.insert("conditioning_level".into(), k.a.into());
            results.insert("cells".into(), cells.into());
            results.insert("decay".into(), decay_rows(&d.deltas, &with_mass, &transforms).into());
        }
        DeviationKind::Theta => {
            let spec = ThetaDeviationSpec {
                model: *m,
                deltas: d.deltas.clone(),
                depths: d.depths.clone(),
                n_rep: d.n_rep,
                a: k.a,
                w_offset: d.w_offset,
                seed: cfg.seed,
            };
            let reps = theta_replicates(&spec)?;
            let estimates = theta_deviation_from_replicates(&spec, &reps)?;
            let cells: Vec<Value> = estimates
                .iter()
                .zip(d.deltas.iter().flat_map(|&delta| d.depths.iter().map(move |&r| (delta, r))))
                .map(|(c, (delta, n))| merge(conditional_row(c), bound_columns(bound_theta(delta, n, law, alpha, k))))
                .collect();
            let errors: Vec<Value> = d
                .depths
                .iter()
                .enumerate()
                .map(|(j, &n)| {
                    let mut errs: Vec<f64> = reps.iter().filter_map(|r| r.errors[j]).collect();
                    errs.sort_by(f64::total_cmp);
                    json!({ "n": n, "replicates": reps.len(), "non_degenerate": errs.len(), "median_error": median(&errs) })
                })
                .collect();
            results.insert("conditioning_level".into(), k.a.into());
            results.insert("cells".into(), cells.into());
            results.insert("estimation_errors".into(), errors.into());
        }
        DeviationKind::GwLln => {
            let spec = GwLlnSpec {
                law: *law,
                deltas: d.deltas.clone(),
                depths: d.depths.clone(),
                n_rep: d.n_rep,
                w_offset: d.w_offset,
                seed: cfg.seed,
            };
            let estimates = mc_gw_lln(&spec)?;
            let cells: Vec<Value> = estimates
                .iter()
                .map(|e| {
                    let bound = a_r_term(e.delta, e.depth, law, SetKind::Generation, k).map(BoundOutcome::Value);
                    merge(estimate_row(e), bound_columns(bound))
                })
                .collect();
            results.insert("cells".into(), cells.into());
            results.insert("decay".into(), decay_rows(&d.deltas, &estimates, &transforms[..1]).into());
        }
    }
    Ok(Outcome::results(Value::Object(results)))
}

/// Median of sorted values.
fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

pub fn chain(cfg: &Config) -> anyhow::Result<Outcome> {
    let m = &cfg.model;
    let c = &cfg.chain;
    let chain = EmbeddedChain::new(&m.params, &m.noise, &m.law)?;
    let bars = chain.coefficients().moment_bars();
    let closed = stationary_moments(&m.params, &m.noise, &m.law);
    let start = closed.as_ref().map(|s| s.mu1).unwrap_or(0.0);
    let f = c.function;
    let fx = move |x: f64| f.eval(x);
    let mut rng = rng::stream(cfg.seed, Domain::LongRun, 0);
    let runs = long_run_averages(&chain, &[&fx, &|x| x, &|x| x * x], start, c.long_run.into(), &mut rng)?;
    let long_run: Vec<Value> = ["f", "x", "x^2"]
        .iter()
        .zip(&runs)
        .map(|(name, r)| json!({ "function": name, "mean": r.mean, "se": r.se, "burn_in": r.burn_in, "length": r.length }))
        .collect();
    let curve = empirical_qk_gap(&chain, &fx, &c.x_grid, c.k_max, c.n_rep, &runs[0], cfg.seed)?;
    let rate = match fit_geometric_rate(&curve, c.k_max, c.noise_multiple) {
        Ok(r) => json!({ "status": "ok", "rate": r.rate, "log_slope": r.log_slope, "points_used": r.points_used }),
        Err(e) => json!({ "status": "unavailable", "note": e.to_string() }),
    };
    let moments = match &closed {
        Ok(s) => json!({ "mu1": s.mu1, "mu2": s.mu2, "variance": s.variance() }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let gap: Vec<Value> = curve.points.iter().map(|p| json!({ "k": p.k, "gap": p.gap, "noise": p.noise })).collect();
    let results = json!({
        "ergodicity_alpha": ergodicity_alpha(&m.params),
        "moment_bars": bars,
        "stationary_moments": moments,
        "long_run": long_run,
        "reference": curve.reference,
        "rate_fit": rate,
        "gap_curve": gap,
    });
    Ok(Outcome { results, files: vec![("gap.csv".to_string(), curve.to_csv().into_bytes())] })
}

pub fn bounds(cfg: &Config) -> anyhow::Result<Outcome> {
    let b = &cfg.bounds;
    let law = &cfg.model.law;
    let m = law.mean();
    let alpha = b.alpha.unwrap_or_else(|| ergodicity_alpha(&cfg.model.params));
    let k = &cfg.constants;
    let mut rows = Vec::new();
    for &family in &b.families {
        let name = serde_json::to_value(family)?;
        for &delta in &b.deltas {
            for &r in &b.depths {
                let outcome = match family {
                    BoundFamily::Centered => bound_centered(delta, r, m, alpha, b.set_kind, k),
                    BoundFamily::Uncentered => bound_uncentered(delta, r, law, alpha, b.set_kind, k),
                    BoundFamily::Conditional => bound_conditional(delta, r, law, alpha, b.set_kind, k),
                    BoundFamily::Theta => bound_theta(delta, r, law, alpha, k),
                    BoundFamily::ArTerm => a_r_term(delta, r, law, b.set_kind, k).map(BoundOutcome::Value),
                };
                rows.push(merge(
                    json!({ "family": name, "delta": delta, "depth": r, "h_r": h_r(m, r, b.set_kind) }),
                    bound_columns(outcome),
                ));
            }
        }
    }
    let mut results = json!({ "regime": regime(cfg, alpha), "threshold_r0": r0_rows(&b.deltas, alpha, k), "bounds": rows });
    if let Some(t) = b.calibrate {
        let cal = calibrate_centered(t.target, t.delta, t.pivot, m, alpha, b.set_kind, k)?;
        results["calibration"] = serde_json::to_value(cal)?;
    }
    Ok(Outcome::results(results))
}

fn r0_rows(deltas: &[f64], alpha: f64, k: &BoundConstants) -> Vec<Value> {
    deltas
        .iter()
        .map(|&delta| match r0_threshold(delta, alpha, k) {
            Ok(r0) => json!({ "delta": delta, "r0": r0, "note": null }),
            Err(e) => json!({ "delta": delta, "r0": null, "note": e.to_string() }),
        })
        .collect()
}
