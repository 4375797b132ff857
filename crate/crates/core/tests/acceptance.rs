//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Runs without the libtest harness so the report is always printed.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chemofront::diagnostics::{fit_exponential, fit_power_law, HistoryRow, SandwichAccumulator};
use chemofront::io::config::parse_config;
use chemofront::io::snapshot::{decode_snapshot, encode_snapshot};
use chemofront::lattice::run_ensemble;
use chemofront::model::{Field, Grid, ModelParams, Sensitivity, StateQuad};
use chemofront::oracles::{barenblatt, ode_blowup_classify, BlowupClass};
use chemofront::pipeline::{build_oracles, execute_run, lattice_comparison, lattice_template, SandwichSink};
use chemofront::presets::{preset, preset_text, PRESETS};
use chemofront::solver::{run, step, SolverConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Outcome = Result<Verdict, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);
type NormOf = fn(&HistoryRow) -> f64;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn steady_state_fixed_point() -> Outcome {
    let g = Grid::new_1d(0.0, 1.0, 256).map_err(err)?;
    let params = ModelParams::new(2.0, 1.0, 1.0, 1.0, Sensitivity::linear_switch(1.0).map_err(err)?, 0.0).map_err(err)?;
    let s0 = StateQuad::new(
        Field::constant(g, 1.0),
        Field::constant(g, 0.3),
        Field::zeros(g),
        Field::constant(g, 1.0),
        0.0,
    )
    .map_err(err)?;
    let cfg = SolverConfig::default();
    let mut s = s0.clone();
    for _ in 0..1000 {
        s = step(&s, &params, &cfg).map_err(err)?.0;
    }
    let change = s0
        .fields()
        .iter()
        .zip(s.fields().iter())
        .map(|((_, a), (_, b))| a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok(verdict(change < 1e-12, format!("max change over 1000 steps {change:e} (< 1e-12)")))
}

fn conservation() -> Outcome {
    let cfg = preset("standard").map_err(err)?;
    let mut s = cfg.initial_state().map_err(err)?;
    let m0 = s.mass_vw();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (next, report) = step(&s, &cfg.model, &cfg.solver).map_err(err)?;
        worst = worst.max(((report.mass_vw - m0) / m0).abs());
        s = next;
    }
    Ok(verdict(
        worst <= 1e-10,
        format!("max relative drift of sum(v + w) h over 10^4 steps {worst:e} (<= 1e-10)"),
    ))
}

fn nonnegativity_and_bounds() -> Outcome {
    let cfg = preset("standard").map_err(err)?;
    let s0 = cfg.initial_state().map_err(err)?;
    let out = run(&s0, &cfg.model, &cfg.solver, &mut []).map_err(err)?;
    let mass0 = s0.u.integral();
    let cap = s0.u.max().max(1.0) + 0.05;
    let pass = out.min_value >= 0.0 && out.clipped_total <= 1e-8 * mass0 && out.max_u <= cap;
    Ok(verdict(
        pass,
        format!(
            "min field value {:e}, clipped {:e} of u-mass {:.4}, sup u {:.6} (cap {cap:.3}) over {} steps",
            out.min_value, out.clipped_total, mass0, out.max_u, out.steps
        ),
    ))
}

fn barenblatt_refinement() -> Outcome {
    let params = ModelParams::pure_diffusion(2.0).map_err(err)?;
    let mut errors = Vec::new();
    for cells in [64, 128, 256] {
        let g = Grid::new_1d(-6.0, 12.0, cells).map_err(err)?;
        let exact = |t: f64| Field::from_fn(g, |x| barenblatt(x[0].abs(), t, 2.0, 1).expect("valid m, n"));
        let s0 = StateQuad::new(exact(1.0), Field::zeros(g), Field::zeros(g), Field::zeros(g), 1.0).map_err(err)?;
        let cfg = SolverConfig {
            end_time: 2.0,
            output_stride: usize::MAX,
            ..SolverConfig::default()
        };
        let out = run(&s0, &params, &cfg, &mut []).map_err(err)?;
        let target = exact(2.0);
        let e: f64 = out
            .final_state
            .u
            .values()
            .iter()
            .zip(target.values())
            .map(|(a, b)| (a - b).abs() * g.h())
            .sum();
        errors.push(e);
    }
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    let pass = ratios.iter().all(|r| (1.6..=2.4).contains(r));
    Ok(verdict(
        pass,
        format!(
            "L1 errors {:.3e} / {:.3e} / {:.3e}, ratios {:.2}, {:.2} (need [1.6, 2.4])",
            errors[0], errors[1], errors[2], ratios[0], ratios[1]
        ),
    ))
}

fn early_stage_sandwich() -> Outcome {
    let cfg = preset("standard").map_err(err)?;
    let s0 = cfg.initial_state().map_err(err)?;
    let first = run(&s0, &cfg.model, &cfg.solver, &mut []).map_err(err)?;
    let oracles = build_oracles(&cfg, &s0, &first.signal_bounds);
    let (Some(lower), Some(upper)) = (oracles.lower.clone(), oracles.upper.clone()) else {
        return Ok(verdict(false, format!("profiles not constructible: {:?}", oracles.notes)));
    };
    let tol = 1e-8;
    let mut sink = SandwichSink(SandwichAccumulator::new(Some(lower.clone()), Some((upper.params.clone(), upper.t0)), tol));
    run(&s0, &cfg.model, &cfg.solver, &mut [&mut sink]).map_err(err)?;
    let report = sink.0.finish();
    Ok(verdict(
        report.passes(tol) && report.upper_snapshots_checked > 0,
        format!(
            "{} snapshots ({} with t <= t0 = {:.3e}), max lower violation {:e}, max upper violation {:e}, beta_lower {}",
            report.snapshots_checked,
            report.upper_snapshots_checked,
            upper.t0,
            report.max_lower_violation,
            report.max_upper_violation,
            lower.beta
        ),
    ))
}

fn front_rate() -> Outcome {
    let cfg = preset("front").map_err(err)?;
    let s0 = cfg.initial_state().map_err(err)?;
    let out = run(&s0, &cfg.model, &cfg.solver, &mut []).map_err(err)?;
    let fit = fit_power_law(&out.history.times(), &out.history.series(|r| r.support_radius), None).map_err(err)?;
    let oracles = build_oracles(&cfg, &s0, &out.signal_bounds);
    let Some(lower) = oracles.lower else {
        return Ok(verdict(false, format!("lower profile not constructible: {:?}", oracles.notes)));
    };
    let upper = 0.5 + 2.0 * fit.exponent_stderr;
    let floor = lower.beta / 2.0;
    let pass = fit.exponent > 0.0 && fit.exponent <= upper && fit.exponent >= floor;
    Ok(verdict(
        pass,
        format!(
            "exponent {:.4} +- {:.4} (r2 {:.4}), need ({floor:.4} <= p <= {upper:.4}); mu = {}",
            fit.exponent, fit.exponent_stderr, fit.r_squared, cfg.model.mu
        ),
    ))
}

fn late_stage_convergence() -> Outcome {
    let cfg = preset("late").map_err(err)?;
    let s0 = cfg.initial_state().map_err(err)?;
    let out = run(&s0, &cfg.model, &cfg.solver, &mut []).map_err(err)?;
    let last = *out.history.last().ok_or("empty history")?;
    let ts = out.history.times();
    let t_min = ts[(ts.len() * 2) / 5];
    let series: [(&str, NormOf); 4] = [
        ("u-1", |r| r.norm_u_minus_1),
        ("w", |r| r.norm_w),
        ("v-target", |r| r.norm_v_minus_target),
        ("z-1", |r| r.norm_z_minus_1),
    ];
    let mut pass = last.norm_u_minus_1 < 1e-3;
    let mut parts = vec![format!("final |u-1| {:.2e} at T = {}", last.norm_u_minus_1, last.t)];
    for (name, f) in series {
        let fit = fit_exponential(&ts, &out.history.series(f), Some(t_min)).map_err(err)?;
        pass &= fit.rate > 0.0 && fit.r_squared >= 0.95;
        parts.push(format!("{name}: c {:.3} r2 {:.4}", fit.rate, fit.r_squared));
    }
    Ok(verdict(pass, parts.join(", ")))
}

/// Brute-force integration of `g' = C e^{-ct} g^m` with steps limited to a
/// small relative change of `g`. Returns the time at which `g` passes
/// `1e80`, or `None` if it stays finite until `e^{-ct}` is negligible.
fn integrate_blowup(big_c: f64, c: f64, m: f64, g0: f64) -> Option<f64> {
    let rhs = |t: f64, g: f64| big_c * (-c * t).exp() * g.powf(m);
    let (mut t, mut g) = (0.0f64, g0);
    while c * t < 60.0 {
        let rate = rhs(t, g) / g;
        let dt = (1e-3 / rate).min(0.01 / c);
        let k1 = rhs(t, g);
        let k2 = rhs(t + dt / 2.0, g + dt / 2.0 * k1);
        let k3 = rhs(t + dt / 2.0, g + dt / 2.0 * k2);
        let k4 = rhs(t + dt, g + dt * k3);
        g += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += dt;
        if !(g < 1e80) {
            return Some(t);
        }
    }
    None
}

fn ode_dichotomy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
    let (mut checked, mut near, mut wrong, mut worst_time) = (0, 0, 0, 0.0f64);
    for _ in 0..100 {
        let big_c = log_uniform(&mut rng, 0.1, 10.0);
        let c = log_uniform(&mut rng, 0.1, 10.0);
        let m = rng.random_range(1.2..3.0);
        let g0 = log_uniform(&mut rng, 0.1, 3.0);
        let threshold = (m - 1.0) * g0.powf(m - 1.0);
        if ((c / big_c - threshold) / threshold).abs() < 0.01 {
            near += 1;
            continue;
        }
        checked += 1;
        let class = ode_blowup_classify(big_c, c, m, g0).map_err(err)?;
        match (class, integrate_blowup(big_c, c, m, g0)) {
            (BlowupClass::BlowsUp { time }, Some(seen)) => worst_time = worst_time.max(((seen - time) / time).abs()),
            (BlowupClass::Bounded, None) => {}
            _ => wrong += 1,
        }
    }
    Ok(verdict(
        wrong == 0 && worst_time <= 0.01,
        format!("{checked} draws checked ({near} within 1% of the threshold), {wrong} misclassified, worst blow-up time error {worst_time:.2e}"),
    ))
}

fn lattice_limit() -> Outcome {
    let cfg = preset("lattice").map_err(err)?;
    let lattice = cfg.lattice.as_ref().ok_or("lattice preset lacks [lattice]")?;
    let cmp = lattice_comparison(lattice, 0, None).map_err(err)?;
    Ok(verdict(
        cmp.l1 <= 0.05,
        format!(
            "L1 distance {:.4e} over {} seeds (<= 0.05), {} overflow events",
            cmp.l1,
            cmp.ensemble.seeds.len(),
            cmp.ensemble.overflow_events
        ),
    ))
}

fn dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(err)? {
            let p = entry.map_err(err)?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).map_err(err)?.display().to_string();
                out.push((rel, fs::read(&p).map_err(err)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism_and_round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut cfg = preset("standard").map_err(err)?;
    cfg.solver.end_time = 0.005;
    execute_run(&cfg, &tmp.path().join("a")).map_err(err)?;
    execute_run(&cfg, &tmp.path().join("b")).map_err(err)?;
    let (a, b) = (dir_bytes(&tmp.path().join("a"))?, dir_bytes(&tmp.path().join("b"))?);
    let runs_equal = a == b && a.len() > 3;

    let lat = preset("lattice").map_err(err)?.lattice.ok_or("no lattice")?;
    let template = lattice_template(&lat).map_err(err)?;
    let seeds = [3, 9];
    let e1 = run_ensemble(&template, &seeds, 0.02, lat.leap, lat.cells_per_bin).map_err(err)?;
    let e2 = run_ensemble(&template, &seeds, 0.02, lat.leap, lat.cells_per_bin).map_err(err)?;
    let lattice_equal = e1.members == e2.members;

    let mut snapshots_exact = true;
    for (_, bytes) in a.iter().filter(|(name, _)| name.ends_with(".bin")) {
        let s = decode_snapshot(bytes, None).map_err(err)?;
        snapshots_exact &= encode_snapshot(&s) == *bytes;
    }
    let mut configs_exact = true;
    for (name, _) in PRESETS {
        let c = parse_config(preset_text(name).map_err(err)?).map_err(err)?;
        configs_exact &= parse_config(&c.to_text()).map_err(err)? == c;
    }
    Ok(verdict(
        runs_equal && lattice_equal && snapshots_exact && configs_exact,
        format!(
            "run dirs identical: {runs_equal} ({} files), lattice ensembles identical: {lattice_equal}, snapshot round trip: {snapshots_exact}, config round trip: {configs_exact}",
            a.len()
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("steady-state fixed point", Duration::from_secs(1), steady_state_fixed_point),
        ("conservation of v + w", Duration::from_secs(10), conservation),
        ("nonnegativity and boundedness", Duration::from_secs(60), nonnegativity_and_bounds),
        ("Barenblatt refinement", Duration::from_secs(60), barenblatt_refinement),
        ("early-stage sandwich", Duration::from_secs(30), early_stage_sandwich),
        ("front-rate bounds", Duration::from_secs(60), front_rate),
        ("late-stage exponential convergence", Duration::from_secs(120), late_stage_convergence),
        ("ODE blow-up dichotomy", Duration::from_secs(5), ode_dichotomy),
        ("lattice-to-PDE limit", Duration::from_secs(120), lattice_limit),
        ("determinism and round trips", Duration::from_secs(60), determinism_and_round_trips),
    ];
    let mut out = std::io::stdout().lock();
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(v) => (v.pass && elapsed <= *limit, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        let _ = writeln!(
            out,
            "[{}] {:>2} {name}: {detail}; {:.2} s (limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    let _ = writeln!(out, "acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    let _ = out.flush();
    if failed > 0 {
        std::process::exit(1);
    }
}
