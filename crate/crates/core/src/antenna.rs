//! Planar-array gains, the pointing-error loss law and the cone model used
//! for interferer gains.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{DerivedConstants, Scenario, GAUSSIAN_BEAM_FACTOR};

/// One axis of the planar array factor, `[sin(Nπu/2) / (N sin(πu/2))]²`.
pub fn array_factor_axis(u: f64, n: u32) -> f64 {
    let nf = n as f64;
    let den = (0.5 * PI * u).sin();
    if den.abs() < 1e-12 {
        return 1.0;
    }
    let r = (0.5 * nf * PI * u).sin() / (nf * den);
    r * r
}

/// Normalized array gain of an `N × N` array for angular offsets in the
/// vertical and horizontal planes.
pub fn array_factor(theta_v: f64, theta_h: f64, n: u32) -> f64 {
    array_factor_axis(theta_h.sin(), n) * array_factor_axis(theta_v.sin(), n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PointingMode {
    /// Full array-factor patterns at both ends.
    #[default]
    Exact,
    /// Gaussian main-lobe approximation.
    Gaussian,
}

impl std::str::FromStr for PointingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Input(format!("unknown pointing mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PointingModel {
    /// Per-axis angle error standard deviation, rad.
    pub sigma_theta: f64,
    pub n_a: u32,
    pub n_u: u32,
    pub beta: f64,
    pub omega_a: f64,
    pub omega_u: f64,
    pub mode: PointingMode,
}

impl PointingModel {
    pub fn new(sigma_theta: f64, n_a: u32, n_u: u32, mode: PointingMode) -> Self {
        let (na, nu) = (n_a as f64, n_u as f64);
        let beta = if sigma_theta == 0.0 {
            f64::INFINITY
        } else {
            GAUSSIAN_BEAM_FACTOR.powi(2) / (2.0 * sigma_theta * sigma_theta * (na * na + nu * nu))
        };
        Self {
            sigma_theta,
            n_a,
            n_u,
            beta,
            omega_a: GAUSSIAN_BEAM_FACTOR / na,
            omega_u: GAUSSIAN_BEAM_FACTOR / nu,
            mode,
        }
    }

    pub fn from_scenario(s: &Scenario, mode: PointingMode) -> Self {
        Self::new(s.sigma_theta_rad(), s.n_a, s.n_u, mode)
    }

    /// Combined loss for a shared angle error at both ends.
    pub fn loss(&self, theta_v: f64, theta_h: f64) -> f64 {
        match self.mode {
            PointingMode::Exact => {
                array_factor(theta_v, theta_h, self.n_a) * array_factor(theta_v, theta_h, self.n_u)
            }
            PointingMode::Gaussian => {
                let t2 = theta_v * theta_v + theta_h * theta_h;
                (-t2 / (self.omega_a * self.omega_a) - t2 / (self.omega_u * self.omega_u)).exp()
            }
        }
    }
}

/// Density `β h^{β-1}` of the pointing-error loss.
pub fn pointing_loss_pdf(h_pe: f64, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::DegeneratePointing);
    }
    if !(h_pe > 0.0 && h_pe <= 1.0) {
        return Ok(0.0);
    }
    Ok(beta * h_pe.powf(beta - 1.0))
}

pub fn pointing_loss_cdf(h_pe: f64, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::DegeneratePointing);
    }
    Ok(h_pe.clamp(0.0, 1.0).powf(beta))
}

pub fn sample_pointing_loss<R: Rng + ?Sized>(model: &PointingModel, rng: &mut R) -> f64 {
    if model.sigma_theta == 0.0 {
        return 1.0;
    }
    let normal = Normal::new(0.0, model.sigma_theta).expect("finite positive std");
    let theta_v = normal.sample(rng);
    let theta_h = normal.sample(rng);
    model.loss(theta_v, theta_h)
}

/// Expected combined gain `G_max β/(β+1)` of the desired link.
pub fn mean_effective_gain(model: &PointingModel) -> f64 {
    let (na, nu) = (model.n_a as f64, model.n_u as f64);
    let g_max = PI * PI * na * na * nu * nu;
    if model.beta.is_finite() {
        g_max * model.beta / (model.beta + 1.0)
    } else {
        g_max
    }
}

/// Half-power beamwidth of an `N × N` array, rad.
pub fn half_power_beamwidth(n: u32) -> f64 {
    2.0 * crate::params::HPBW_FACTOR / n as f64
}

/// Cone-model side-lobe gain of an `N × N` array.
pub fn side_lobe_gain(n: u32) -> Result<f64> {
    let nf = n as f64;
    let t = (0.5 * half_power_beamwidth(n)).tan();
    let cap = (t * t).asin();
    let num = PI - nf * nf * PI * cap;
    if num.is_nan() || num <= 0.0 {
        return Err(Error::ConeModel(n));
    }
    Ok(num / (PI - cap))
}

/// Horizontal reach of the UE's vertical main lobe when it points at an AP
/// at horizontal distance `d0`; infinite when the lower beam edge is at or
/// above the horizon.
pub fn r_u0_max(d0: f64, c: &DerivedConstants) -> f64 {
    let edge = (c.dh / d0).atan() - 0.5 * c.phi_u;
    if edge <= 0.0 {
        f64::INFINITY
    } else {
        c.dh / edge.tan()
    }
}

/// Four-point law of an interferer's combined gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainPmf {
    pub gains: [f64; 4],
    pub probs: [f64; 4],
}

impl GainPmf {
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.gains.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(g, p)| g * p).sum()
    }
}

/// Cone-model gains and beam-hit probabilities shared by all interferers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InterfererAntenna {
    pub g_a_main: f64,
    pub g_a_side: f64,
    pub g_u_main: f64,
    pub g_u_side: f64,
    pub p_a_h: f64,
    pub p_a_v: f64,
    pub p_u_h: f64,
}

impl InterfererAntenna {
    pub fn new(s: &Scenario, c: &DerivedConstants) -> Result<Self> {
        let p_a_v = (c.phi_a / (0.5 * PI - c.phi_ap)).min(1.0);
        Ok(Self {
            g_a_main: c.g_a_max,
            g_a_side: side_lobe_gain(s.n_a)?,
            g_u_main: c.g_u_max,
            g_u_side: side_lobe_gain(s.n_u)?,
            p_a_h: c.phi_a / (2.0 * PI),
            p_a_v,
            p_u_h: c.phi_u / (2.0 * PI),
        })
    }

    pub fn p_a(&self) -> f64 {
        self.p_a_h * self.p_a_v
    }

    /// Gain law given whether the interferer lies inside the UE's vertical
    /// main lobe.
    pub fn pmf_given_vertical(&self, in_vertical: bool) -> GainPmf {
        let p_a = self.p_a();
        let p_u = if in_vertical { self.p_u_h } else { 0.0 };
        GainPmf {
            gains: [
                self.g_a_main * self.g_u_main,
                self.g_a_main * self.g_u_side,
                self.g_a_side * self.g_u_main,
                self.g_a_side * self.g_u_side,
            ],
            probs: [
                p_a * p_u,
                p_a * (1.0 - p_u),
                (1.0 - p_a) * p_u,
                (1.0 - p_a) * (1.0 - p_u),
            ],
        }
    }

    pub fn pmf(&self, d_i: f64, d0: f64, c: &DerivedConstants) -> GainPmf {
        self.pmf_given_vertical(d_i <= r_u0_max(d0, c))
    }

    /// Draw a gain with independent hits on each beam axis.
    pub fn sample<R: Rng + ?Sized>(&self, in_vertical: bool, rng: &mut R) -> f64 {
        let ap_hit = rng.random::<f64>() < self.p_a_h && rng.random::<f64>() < self.p_a_v;
        let ue_hit = in_vertical && rng.random::<f64>() < self.p_u_h;
        let ga = if ap_hit { self.g_a_main } else { self.g_a_side };
        let gu = if ue_hit { self.g_u_main } else { self.g_u_side };
        ga * gu
    }
}

pub fn interferer_gain_pmf(d_i: f64, d0: f64, c: &DerivedConstants, s: &Scenario) -> Result<GainPmf> {
    Ok(InterfererAntenna::new(s, c)?.pmf(d_i, d0, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_constants;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boresight_and_null() {
        for n in [2, 4, 16, 64] {
            assert!((array_factor(0.0, 0.0, n) - 1.0).abs() < 1e-15);
        }
        let null = 0.125f64.asin();
        assert!(array_factor(0.0, null, 16) < 1e-12);
    }

    #[test]
    fn gaussian_beam_near_boresight() {
        let w = GAUSSIAN_BEAM_FACTOR / 16.0;
        let exact = array_factor(0.0, 0.02, 16);
        let approx = (-(0.02f64 / w).powi(2)).exp();
        assert!((exact / approx - 1.0).abs() < 0.03, "{exact} {approx}");
    }

    #[test]
    fn pdf_reference() {
        assert_eq!(pointing_loss_pdf(0.3, 1.0).unwrap(), 1.0);
        let s = Scenario { sigma_theta_deg: 1.5, ..Scenario::default() };
        let beta = derive_constants(&s).beta;
        assert!((pointing_loss_pdf(1.0, beta).unwrap() - 3.0135).abs() < 1e-4);
        assert!((beta / (beta + 1.0) - 0.7508).abs() < 1e-4);
        assert!(matches!(pointing_loss_pdf(0.5, f64::INFINITY), Err(Error::DegeneratePointing)));
    }

    #[test]
    fn no_pointing_error_is_lossless() {
        let m = PointingModel::new(0.0, 16, 4, PointingMode::Exact);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| sample_pointing_loss(&m, &mut rng) == 1.0));
    }

    #[test]
    fn mean_gain_reference() {
        let g0 = mean_effective_gain(&PointingModel::new(0.0, 16, 4, PointingMode::Exact));
        assert!((g0 - PI * PI * 256.0 * 16.0).abs() < 1e-6);
        assert!((g0 - 40_425.9).abs() < 0.1);
        let sig = 1.5f64.to_radians();
        let g = mean_effective_gain(&PointingModel::new(sig, 16, 4, PointingMode::Exact));
        assert!((g - 30_354.0).abs() < 1.0, "{g}");
        let limit = GAUSSIAN_BEAM_FACTOR.powi(2) * PI * PI * 16.0 / (2.0 * sig * sig);
        assert!((limit - 129_425.0).abs() < 100.0, "{limit}");
        let g512 = mean_effective_gain(&PointingModel::new(sig, 512, 4, PointingMode::Exact));
        assert!((g512 / limit - 1.0).abs() < 0.01);
    }

    #[test]
    fn side_lobes() {
        assert!((side_lobe_gain(16).unwrap() - 0.2136).abs() < 1e-4);
        assert!((side_lobe_gain(4).unwrap() - 0.1915).abs() < 5e-4);
        for n in [4, 8, 16, 32] {
            let g = side_lobe_gain(n).unwrap();
            assert!(g < 1.0 && 1.0 < PI * (n * n) as f64);
        }
    }

    #[test]
    fn hit_probabilities_reference() {
        let s = Scenario::default();
        let c = derive_constants(&s);
        let ant = InterfererAntenna::new(&s, &c).unwrap();
        assert!((ant.p_a_h - 0.017627).abs() < 1e-6);
        assert!((ant.p_a_v - 0.077004).abs() < 1e-6);
        assert!((ant.p_a() - 1.3573e-3).abs() < 1e-7);
        let r = r_u0_max(5.0, &c);
        assert!((r - 12.47).abs() < 0.005, "{r}");
        assert_eq!(ant.pmf(10.0, 5.0, &c).probs[0], ant.p_a() * ant.p_u_h);
        assert_eq!(ant.pmf(15.0, 5.0, &c).probs[0], 0.0);
    }

    #[test]
    fn beam_above_horizon() {
        let s = Scenario::default();
        let c = derive_constants(&s);
        assert!(r_u0_max(50.0, &c).is_infinite());
    }

    #[test]
    fn sampled_gains_follow_pmf() {
        let s = Scenario::default();
        let c = derive_constants(&s);
        let ant = InterfererAntenna::new(&s, &c).unwrap();
        let pmf = ant.pmf_given_vertical(true);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 2_000_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let g = ant.sample(true, &mut rng);
            let k = pmf.gains.iter().position(|&x| x == g).unwrap();
            counts[k] += 1;
        }
        for (k, &cnt) in counts.iter().enumerate() {
            let p = pmf.probs[k];
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!(((cnt as f64 / n as f64) - p).abs() < 4.0 * se, "{k}: {cnt} vs {p}");
        }
    }
}
