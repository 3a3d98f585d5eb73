use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::Serialize;
use thzcov::analytic::AnalyticEngine;
use thzcov::antenna::{pointing_loss_pdf, sample_pointing_loss, PointingModel};
use thzcov::curve::CoverageCurve;
use thzcov::params::Scenario;
use thzcov::simulate::{estimate_coverage, trial_rng, SimOptions};

use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureId {
    /// Density of the pointing loss for N_A = 16 and 32.
    HpePdf,
    /// Coverage against the SINR threshold for two antenna configurations.
    CoverageVsThreshold,
    /// Coverage against the AP array size at 30 dB.
    CoverageVsNa,
}

pub const ARRAY_CONFIGS: [(u32, u32); 2] = [(16, 8), (32, 4)];
pub const NA_SWEEP: [u32; 8] = [8, 16, 24, 32, 40, 48, 56, 64];
pub const NA_THRESHOLD_DB: f64 = 30.0;

pub struct FigureRequest<'a> {
    pub scenario: &'a Scenario,
    pub sigmas: &'a [f64],
    pub gamma_db: &'a [f64],
    pub bins: usize,
    pub sim: SimOptions,
}

pub fn build(id: FigureId, req: &FigureRequest) -> Result<Table> {
    match id {
        FigureId::HpePdf => hpe_pdf(req),
        FigureId::CoverageVsThreshold => coverage_vs_threshold(req),
        FigureId::CoverageVsNa => coverage_vs_na(req),
    }
}

fn hpe_pdf(req: &FigureRequest) -> Result<Table> {
    let [sigma] = req.sigmas else {
        bail!("hpe-pdf takes exactly one --sigmas value");
    };
    if *sigma <= 0.0 {
        bail!("hpe-pdf needs a positive pointing error; pass --sigmas with a value > 0");
    }
    if req.bins == 0 {
        bail!("--bins must be positive");
    }
    let mut table = Table::new(&["h_pe", "pdf_analytic", "pdf_empirical", "n_a"]);
    let width = 1.0 / req.bins as f64;
    for n_a in [16u32, 32] {
        let model = PointingModel::new(sigma.to_radians(), n_a, req.scenario.n_u, req.sim.pointing);
        let mut counts = vec![0usize; req.bins];
        let mut rng = trial_rng(req.sim.seed, n_a as u64);
        for _ in 0..req.sim.trials {
            let h = sample_pointing_loss(&model, &mut rng);
            let bin = ((h / width) as usize).min(req.bins - 1);
            counts[bin] += 1;
        }
        for (i, &k) in counts.iter().enumerate() {
            let h = (i as f64 + 0.5) * width;
            let pdf = pointing_loss_pdf(h, model.beta)?;
            let empirical = k as f64 / (req.sim.trials as f64 * width);
            table.push(vec![h.into(), pdf.into(), empirical.into(), n_a.into()]);
        }
    }
    Ok(table)
}

fn with_arrays(s: &Scenario, sigma: f64, n_a: u32, n_u: u32) -> Scenario {
    Scenario {
        sigma_theta_deg: sigma,
        n_a,
        n_u,
        ..s.clone()
    }
}

fn paired(s: &Scenario, gamma_db: &[f64], sim: &SimOptions) -> Result<(CoverageCurve, CoverageCurve)> {
    let analytic = AnalyticEngine::new(s)?
        .coverage_curve(gamma_db)
        .context("analytic engine")?;
    let simulated = estimate_coverage(s, gamma_db, sim).context("Monte Carlo engine")?;
    Ok((analytic, simulated))
}

fn coverage_vs_threshold(req: &FigureRequest) -> Result<Table> {
    let mut table = Table::new(&[
        "n_a",
        "n_u",
        "sigma_theta_deg",
        "gamma_db",
        "pc_analytic",
        "pc_simulated",
        "ci_halfwidth",
    ]);
    for &(n_a, n_u) in &ARRAY_CONFIGS {
        for &sigma in req.sigmas {
            let s = with_arrays(req.scenario, sigma, n_a, n_u);
            let (a, m) = paired(&s, req.gamma_db, &req.sim)?;
            let ci = m.ci_halfwidth.clone().unwrap_or_default();
            for (i, &g) in req.gamma_db.iter().enumerate() {
                table.push(vec![
                    n_a.into(),
                    n_u.into(),
                    sigma.into(),
                    g.into(),
                    a.values[i].into(),
                    m.values[i].into(),
                    ci.get(i).copied().into(),
                ]);
            }
        }
    }
    Ok(table)
}

/// Shape of a sequence: the index of its maximum, and whether it rises to
/// that point and falls after it.
pub fn unimodal_summary(values: &[f64]) -> (usize, bool) {
    let peak = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let rises = values[..=peak].windows(2).all(|w| w[1] >= w[0]);
    let falls = values[peak..].windows(2).all(|w| w[1] <= w[0]);
    (peak, rises && falls)
}

fn coverage_vs_na(req: &FigureRequest) -> Result<Table> {
    let mut table = Table::new(&[
        "n_a",
        "sigma_theta_deg",
        "pc_analytic",
        "pc_simulated",
        "ci_halfwidth",
        "note",
    ]);
    let grid = [NA_THRESHOLD_DB];
    for &sigma in req.sigmas {
        let mut analytic = Vec::new();
        let mut simulated = Vec::new();
        for &n_a in &NA_SWEEP {
            let s = with_arrays(req.scenario, sigma, n_a, req.scenario.n_u);
            let (a, m) = paired(&s, &grid, &req.sim)?;
            let ci = m.ci_halfwidth.as_ref().map(|c| c[0]);
            table.push(vec![
                n_a.into(),
                sigma.into(),
                a.values[0].into(),
                m.values[0].into(),
                ci.into(),
                Cell::Empty,
            ]);
            analytic.push(a.values[0]);
            simulated.push(m.values[0]);
        }
        if sigma > 0.0 {
            let (peak, unimodal) = unimodal_summary(&analytic);
            let (sim_peak, _) = unimodal_summary(&simulated);
            let interior = peak > 0 && peak + 1 < NA_SWEEP.len();
            table.push(vec![
                NA_SWEEP[peak].into(),
                sigma.into(),
                analytic[peak].into(),
                simulated[peak].into(),
                Cell::Empty,
                format!(
                    "summary: analytic argmax; unimodal={unimodal}; interior={interior}; simulated argmax N_A={}",
                    NA_SWEEP[sim_peak]
                )
                .into(),
            ]);
        }
    }
    Ok(table)
}

pub fn default_sigmas(id: FigureId) -> Vec<f64> {
    match id {
        FigureId::HpePdf => vec![1.5],
        _ => vec![0.0, 0.5, 1.5],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unimodal_detection() {
        assert_eq!(unimodal_summary(&[0.1, 0.5, 0.4, 0.2]), (1, true));
        assert_eq!(unimodal_summary(&[0.1, 0.5, 0.4, 0.45]), (1, false));
        assert_eq!(unimodal_summary(&[0.1, 0.2, 0.3]), (2, true));
    }
}
