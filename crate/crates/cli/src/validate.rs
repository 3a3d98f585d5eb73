//! Fast self-checks of the engines against their own invariants.

use anyhow::Result;
use serde::Serialize;
use thzcov::analytic::AnalyticEngine;
use thzcov::antenna::{sample_pointing_loss, PointingMode, PointingModel};
use thzcov::channel::MftrModel;
use thzcov::curve::linear_grid;
use thzcov::geometry::{los_mass_total, los_probability, nearest_los_pdf, sample_link_clearance};
use thzcov::params::{derive_constants, load_scenario, Scenario};
use thzcov::quad::integrate_adaptive;
use thzcov::simulate::{estimate_coverage, trial_rng, SimOptions};
use thzcov::stats::ks_statistic;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

/// KS distance exceeded with probability 0.001 under the null.
fn ks_limit(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

pub fn run(s: &Scenario, seed: u64, draws: usize) -> Result<ValidationReport> {
    let c = derive_constants(s);
    let mut checks = Vec::new();

    let back = load_scenario(&s.to_toml()?)?;
    checks.push(check(
        "scenario-round-trip",
        back == *s,
        "serialized scenario parses back to the same value".into(),
    ));

    let fading = MftrModel::from_scenario(s)?;
    let norm_err = (fading.weights().iter().sum::<f64>() - 1.0).abs();
    checks.push(check(
        "fading-weights-normalized",
        norm_err <= 1e-6,
        format!("|sum w - 1| = {norm_err:.2e}, {} terms", fading.j_max + 1),
    ));

    let mut rng = trial_rng(seed, 1);
    let mut h: Vec<f64> = (0..draws).map(|_| fading.sample(&mut rng)).collect();
    let ks = ks_statistic(&mut h, |x| fading.cdf(x));
    checks.push(check(
        "fading-sampler-ks",
        ks <= ks_limit(draws),
        format!("KS = {ks:.4} over {draws} draws (limit {:.4})", ks_limit(draws)),
    ));

    let engine = AnalyticEngine::new(s)?;
    let l0 = engine.laplace_interference(0.0, 2.0);
    let decreasing = [1e3, 1e6, 1e9]
        .windows(2)
        .all(|w| engine.laplace_interference(w[1], 2.0) <= engine.laplace_interference(w[0], 2.0));
    checks.push(check(
        "laplace-shape",
        (l0 - 1.0).abs() < 1e-12 && decreasing,
        format!("L(0) = {l0}, decreasing in s: {decreasing}"),
    ));

    let sigma = if s.sigma_theta_deg > 0.0 { s.sigma_theta_deg } else { 1.5 };
    let model = PointingModel::new(sigma.to_radians(), s.n_a, s.n_u, PointingMode::Gaussian);
    let mut rng = trial_rng(seed, 2);
    let mut v: Vec<f64> = (0..draws).map(|_| sample_pointing_loss(&model, &mut rng)).collect();
    let beta = model.beta;
    let ks = ks_statistic(&mut v, |x| x.clamp(0.0, 1.0).powf(beta));
    checks.push(check(
        "pointing-loss-power-law",
        ks <= ks_limit(draws),
        format!("Gaussian-beam KS = {ks:.4} at sigma = {sigma} deg (limit {:.4})", ks_limit(draws)),
    ));

    let d = 10.0;
    let mut rng = trial_rng(seed, 3);
    let clear = (0..draws)
        .filter(|_| {
            let (hum, wall) = sample_link_clearance(d, s, &mut rng);
            hum && wall
        })
        .count();
    let frac = clear as f64 / draws as f64;
    let p = los_probability(d, &c);
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    checks.push(check(
        "los-fraction",
        (frac - p).abs() <= 4.0 * se,
        format!("d = {d}: simulated {frac:.4} vs closed form {p:.4} (4 SE = {:.4})", 4.0 * se),
    ));

    let total = los_mass_total(&c, s);
    let integral = integrate_adaptive(|x| nearest_los_pdf(x, &c, s), 0.0, 60.0 / c.blockage_rate().max(0.05), 1e-12, 1e-12)?;
    let gap = (integral - (-(-total).exp_m1())).abs();
    checks.push(check(
        "nearest-los-mass",
        gap <= 1e-6,
        format!("integral {integral:.9} vs 1 - exp(-Xi) (gap {gap:.1e})"),
    ));

    let grid = linear_grid(-10.0, 40.0, 5.0)?;
    let curve = engine.coverage_curve(&grid)?;
    checks.push(check(
        "analytic-nonincreasing",
        curve.is_nonincreasing(),
        format!("P_c from {:.4} to {:.4}", curve.values[0], curve.values[grid.len() - 1]),
    ));

    let trials = draws.max(1000);
    let mut one = SimOptions::new(trials, seed);
    one.workers = Some(1);
    let mut three = one.clone();
    three.workers = Some(3);
    let a = estimate_coverage(s, &grid, &one)?;
    let b = estimate_coverage(s, &grid, &three)?;
    checks.push(check(
        "simulation-worker-invariance",
        a.values == b.values,
        format!("{trials} trials with 1 and 3 workers"),
    ));

    let ci = a.ci_halfwidth.clone().unwrap_or_default();
    let worst = grid
        .iter()
        .enumerate()
        .map(|(i, _)| (a.values[i] - curve.values[i]).abs() - 2.0 * ci[i])
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(check(
        "engines-agree",
        worst <= 0.03,
        format!("worst |MC - analytic| beyond two CI half-widths: {worst:.4} (limit 0.03)"),
    ));

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { seed, pass, checks })
}
