//! Large-scale THz path gain and multi-cluster fluctuating two-ray (MFTR)
//! small-scale fading.
//!
//! The fading gain is represented as a mixture over an index `j` of Gamma
//! laws with integer shape `j + μ` and scale `2σ²`. The mixing weights
//!
//! ```text
//! w_j = (m^m / Γ(m)) (μK)^j r_j / j!
//! ```
//!
//! form a probability mass function, which is what makes the CDF series,
//! the Laplace transform and all of its derivatives closed-form sums.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{DerivedConstants, Scenario};
use crate::special::{gamma_q_int, hyp2f1, ln_gamma, log_add};

/// Large-scale gain of one AP-UE link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGain {
    /// Horizontal distance, m.
    pub d: f64,
    /// Spreading-plus-absorption factor `W(d)`.
    pub w: f64,
    pub xi: f64,
    /// `H_L = ξ W(d)`.
    pub h_l: f64,
}

/// `W(d) = exp(-ε √(d² + Δh²)) / (d² + Δh²)`.
pub fn spreading_absorption(d: f64, dh: f64, eps_f: f64) -> f64 {
    let r2 = d * d + dh * dh;
    (-eps_f * r2.sqrt()).exp() / r2
}

pub fn large_scale_gain(d: f64, c: &DerivedConstants, s: &Scenario) -> LinkGain {
    let w = spreading_absorption(d, c.dh, s.eps_f);
    LinkGain {
        d,
        w,
        xi: c.xi,
        h_l: c.xi * w,
    }
}

/// Shape parameters of the MFTR law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MftrParams {
    /// Dominant-to-diffuse power ratio.
    pub k: f64,
    /// Fluctuation severity of the dominant rays.
    pub m: f64,
    /// Similarity of the two dominant rays, in `[0, 1]`.
    pub delta: f64,
    /// Number of clusters.
    pub mu: u32,
}

impl MftrParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            k: s.k,
            m: s.m,
            delta: s.delta,
            mu: s.mu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, c: &str| Error::Invalid {
            key: key.into(),
            constraint: c.into(),
        };
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(bad("K", "must be >= 0"));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(bad("m", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(bad("delta", "0 <= delta <= 1 violated"));
        }
        if self.mu == 0 {
            return Err(bad("mu", "must be a positive integer"));
        }
        Ok(())
    }

    /// Diffuse power `2σ² = 1 / (μ (K + 1))`.
    pub fn sigma2_half(&self) -> f64 {
        1.0 / (self.mu as f64 * (self.k + 1.0))
    }
}

/// Hard cap on the series length.
pub const DEFAULT_J_MAX: usize = 400;
/// Default relative tolerance for series truncation.
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;

/// MFTR law with its cached series coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct MftrModel {
    pub params: MftrParams,
    pub sigma2_half: f64,
    /// `ln r_j` for the retained indices.
    ln_r: Vec<f64>,
    /// Mixing weights `w_j`.
    weights: Vec<f64>,
    /// Last retained series index.
    pub j_max: usize,
    /// Requested hard cap on the series index.
    pub j_cap: usize,
    pub tol: f64,
}

impl MftrModel {
    pub fn new(params: MftrParams) -> Result<Self> {
        Self::with_truncation(params, DEFAULT_J_MAX, DEFAULT_SERIES_TOL)
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        Self::new(MftrParams::from_scenario(s))
    }

    /// Build the coefficient cache. The series stops once three consecutive
    /// terms and their geometric tail estimates fall below `tol` times the
    /// running sum; hitting `j_max` first is an error.
    pub fn with_truncation(params: MftrParams, j_max: usize, tol: f64) -> Result<Self> {
        params.validate()?;
        if j_max < 1 {
            return Err(Error::Input("J_max must be >= 1".into()));
        }
        let MftrParams { k, m, delta, mu } = params;
        let mu_k = mu as f64 * k;
        let a = m + mu_k;
        let b = mu_k * delta;

        // Midpoint rule on [0, π] for a smooth even periodic integrand.
        // The m-power is kept relative to m^m so large m stays exact.
        let n_phi = 2 * (j_max + m.ceil() as usize) + 64;
        let nodes: Vec<(f64, f64, f64)> = (0..n_phi)
            .map(|i| {
                let c = ((i as f64 + 0.5) * std::f64::consts::PI / n_phi as f64).cos();
                let rel = (mu_k + b * c) / m;
                ((1.0 + delta * c).ln(), (a + b * c).ln(), m * rel.ln_1p())
            })
            .collect();
        let ln_n = (n_phi as f64).ln();
        let m_ln_m = m * m.ln();

        let mut ln_r = Vec::new();
        let mut weights = Vec::new();
        let mut sum = 0.0;
        let mut quiet = 0;
        let mut prev = f64::NAN;
        let mut converged = false;
        // ln Γ(j+m) − ln Γ(m), built up term by term.
        let mut ln_rise = 0.0;
        for j in 0..=j_max {
            let jf = j as f64;
            if j > 0 {
                ln_rise += (m + jf - 1.0).ln();
            }
            let lse = nodes.iter().fold(f64::NEG_INFINITY, |acc, &(l1, l2, lm)| {
                let lt = if j == 0 { -lm } else { jf * (l1 - l2) - lm };
                log_add(acc, lt)
            });
            let lr = ln_gamma(m) + ln_rise - m_ln_m + lse - ln_n;
            let lw = if j == 0 {
                lse - ln_n
            } else if mu_k > 0.0 {
                jf * mu_k.ln() + ln_rise - ln_gamma(jf + 1.0) + lse - ln_n
            } else {
                f64::NEG_INFINITY
            };
            let w = lw.exp();
            ln_r.push(lr);
            weights.push(w);
            sum += w;
            let ratio = if prev > 0.0 { w / prev } else { 0.0 };
            let tail = if ratio < 1.0 { w / (1.0 - ratio) } else { f64::INFINITY };
            if j > 0 && ratio < 1.0 && tail <= tol * sum {
                quiet += 1;
            } else {
                quiet = 0;
            }
            prev = w;
            if quiet >= 3 {
                converged = true;
                break;
            }
        }
        if !converged {
            let last = *weights.last().unwrap_or(&0.0);
            return Err(Error::Truncation {
                j_max,
                ratio: last / sum,
                tol,
            });
        }
        let check = (10.0 * tol).max(1e-8);
        if (sum - 1.0).abs() > check {
            return Err(Error::Normalization { sum, tol: check });
        }
        let last = weights.len() - 1;
        Ok(Self {
            params,
            sigma2_half: params.sigma2_half(),
            ln_r,
            weights,
            j_max: last,
            j_cap: j_max,
            tol,
        })
    }

    /// Number of retained series terms.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The coefficient `r_j` (zero beyond the retained range).
    pub fn r(&self, j: usize) -> f64 {
        self.ln_r.get(j).map_or(0.0, |l| l.exp())
    }

    /// `r_j` from the binomial expansion into Gauss hypergeometric
    /// functions. Independent of the cached quadrature route; loses
    /// precision through cancellation for large `j`, so it serves as a
    /// transcription check for small indices only.
    pub fn r_closed_form(&self, j: usize) -> Option<f64> {
        let MftrParams { k, m, delta, mu } = self.params;
        let mu_k = mu as f64 * k;
        if mu_k == 0.0 {
            return None;
        }
        let a = m + mu_k;
        let b = mu_k * delta;
        let z = (b / a).powi(2);
        let jf = j as f64;
        let mut acc = 0.0;
        let mut binom = 1.0;
        for q in 0..=j {
            if q > 0 {
                binom *= (j - q + 1) as f64 / q as f64;
            }
            let nu = jf + m - q as f64;
            let f = hyp2f1(0.5 * nu, 0.5 * (nu + 1.0), 1.0, z)?;
            acc += binom * (-m).powi((j - q) as i32) * a.powf(-nu) * f;
        }
        Some((ln_gamma(jf + m)).exp() * mu_k.powf(-jf) * acc)
    }

    /// Sum of the normalized series `(m^m/Γ(m)) Σ (μK)^j r_j / j!`, equal to 1.
    pub fn normalization(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ_j (μK)^j r_j / j!`, which equals `Γ(m) / m^m`.
    pub fn raw_series_sum(&self) -> f64 {
        let m = self.params.m;
        self.normalization() * (ln_gamma(m) - m * m.ln()).exp()
    }

    pub fn cdf(&self, h: f64) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        let x = h / self.sigma2_half;
        let mu = self.params.mu as usize;
        let surv: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(j, &w)| w * gamma_q_int(j + mu, x))
            .sum();
        (1.0 - surv).clamp(0.0, 1.0)
    }

    /// Draw a fading power gain from the physical two-ray-plus-diffuse
    /// construction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let MftrParams { k, m, delta, mu } = self.params;
        let sigma = (0.5 * self.sigma2_half).sqrt();
        let omega = self.sigma2_half * mu as f64 * k;
        let (v1, v2) = if omega > 0.0 {
            let p = (omega * (1.0 + delta)).sqrt();
            let q = (omega * (1.0 - delta)).sqrt();
            (0.5 * (p + q), 0.5 * (p - q))
        } else {
            (0.0, 0.0)
        };
        let zeta = if omega > 0.0 {
            Gamma::new(m, 1.0 / m).expect("valid gamma").sample(rng)
        } else {
            0.0
        };
        let sz = zeta.sqrt();
        let phi1 = rng.random::<f64>() * std::f64::consts::TAU;
        let phi2 = rng.random::<f64>() * std::f64::consts::TAU;
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        let re = sz * (v1 * phi1.cos() + v2 * phi2.cos()) + sigma * n1;
        let im = sz * (v1 * phi1.sin() + v2 * phi2.sin()) + sigma * n2;
        let mut h = re * re + im * im;
        for _ in 1..mu {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            h += sigma * sigma * (a * a + b * b);
        }
        h
    }

    /// `E[exp(-s a H)]`.
    pub fn laplace_factor(&self, s: f64, a: f64) -> f64 {
        let x = self.sigma2_half * s * a;
        if x == 0.0 {
            return 1.0;
        }
        let q = 1.0 / (1.0 + x);
        let mut t = q.powi(self.params.mu as i32);
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w * t;
            t *= q;
        }
        acc
    }

    /// `1 - E[exp(-s a H)]`, evaluated without cancellation for small `s a`.
    pub fn laplace_complement(&self, s: f64, a: f64) -> f64 {
        let x = self.sigma2_half * s * a;
        if x <= 0.0 {
            return 0.0;
        }
        let l = x.ln_1p();
        let mu = self.params.mu as f64;
        self.weights
            .iter()
            .enumerate()
            .map(|(j, &w)| -w * (-(j as f64 + mu) * l).exp_m1())
            .sum()
    }

    /// `E[H]` implied by the truncated series.
    pub fn mean(&self) -> f64 {
        let mu = self.params.mu as f64;
        self.sigma2_half
            * self
                .weights
                .iter()
                .enumerate()
                .map(|(j, &w)| w * (j as f64 + mu))
                .sum::<f64>()
    }

    /// Derivatives `d^k/ds^k E[exp(-s a H)]` for `k = 0..=l_max`.
    pub fn laplace_factor_derivatives(&self, s: f64, a: f64, l_max: usize) -> Vec<f64> {
        let c = self.sigma2_half * a;
        let base = 1.0 + c * s;
        let mu = self.params.mu as f64;
        let mut out = vec![0.0; l_max + 1];
        for (j, &w) in self.weights.iter().enumerate() {
            let n = j as f64 + mu;
            let mut t = w * base.powf(-n);
            for (k, o) in out.iter_mut().enumerate() {
                *o += t;
                t *= -c * (n + k as f64) / base;
            }
        }
        out
    }

    /// Add `weight · E[(xH/2σ²)^k e^{-xH/2σ²} / k!]` to `out[k]` for every
    /// `k < out.len()`; these are the normalized Taylor coefficients of the
    /// Laplace factor with `x = 2σ² s a`.
    pub fn accumulate_poisson_moments(&self, x: f64, weight: f64, out: &mut [f64]) {
        if x <= 0.0 || weight == 0.0 {
            if let Some(o) = out.first_mut() {
                *o += weight;
            }
            return;
        }
        let q = 1.0 / (1.0 + x);
        let p = x * q;
        let mu = self.params.mu as usize;
        let mut qn = q.powi(mu as i32);
        let k_max = out.len();
        for (j, &w) in self.weights.iter().enumerate() {
            let n = (j + mu) as f64;
            let mut t = weight * w * qn;
            qn *= q;
            let mode = ((n - 1.0) * x).max(0.0);
            for (k, o) in out.iter_mut().enumerate().take(k_max) {
                *o += t;
                t *= p * (n + k as f64) / (k as f64 + 1.0);
                if (k as f64) > mode && t < 1e-20 {
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_params() -> MftrParams {
        MftrParams { k: 5.0, m: 2.0, delta: 0.3, mu: 2 }
    }

    #[test]
    fn link_gain_reference() {
        let s = Scenario::default();
        let c = crate::params::derive_constants(&s);
        let g0 = large_scale_gain(0.0, &c, &s);
        assert!((g0.w - 0.24929).abs() < 1e-5);
        let g10 = large_scale_gain(10.0, &c, &s);
        let oracle = (-0.00143 * 104f64.sqrt()).exp() / 104.0;
        assert!((g10.w - oracle).abs() < 1e-15);
        assert!((g10.h_l - c.xi * oracle).abs() < 1e-22);
        assert!(large_scale_gain(5.0, &c, &s).w > g10.w);
    }

    #[test]
    fn normalization_identity() {
        let model = MftrModel::new(table_params()).unwrap();
        assert!((model.raw_series_sum() - 0.25).abs() < 1e-8);
        assert!((model.normalization() - 1.0).abs() < 1e-10);
        assert!(model.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
        assert!((0..model.len()).all(|j| model.r(j).is_finite()));
    }

    #[test]
    fn closed_form_matches_cached_coefficients() {
        for p in [
            table_params(),
            MftrParams { k: 1.0, m: 1.0, delta: 0.9, mu: 1 },
            MftrParams { k: 10.0, m: 4.0, delta: 0.1, mu: 3 },
            MftrParams { k: 3.0, m: 2.5, delta: 1.0, mu: 2 },
        ] {
            let model = MftrModel::new(p).unwrap();
            for j in 0..8 {
                let cached = model.r(j);
                let closed = model.r_closed_form(j).unwrap();
                assert!(
                    ((cached - closed) / cached).abs() < 1e-8,
                    "{p:?} j={j}: {cached} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn truncation_guard() {
        let p = MftrParams { k: 50.0, m: 2.0, delta: 0.3, mu: 2 };
        match MftrModel::with_truncation(p, 20, 1e-12) {
            Err(Error::Truncation { ratio, .. }) => assert!(ratio > 1e-12),
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(MftrModel::with_truncation(p, 0, 1e-12).is_err());
    }

    #[test]
    fn cdf_edges_and_monotone() {
        let model = MftrModel::new(table_params()).unwrap();
        assert_eq!(model.cdf(0.0), 0.0);
        assert!(model.cdf(1e-12) < 1e-10);
        assert!(model.cdf(50.0) >= 0.999);
        let mut prev = 0.0;
        for i in 0..200 {
            let h = 10f64.powf(-4.0 + 6.0 * i as f64 / 199.0);
            let f = model.cdf(h);
            assert!(f >= prev - 1e-14 && f <= 1.0);
            prev = f;
        }
        assert!(prev > 1.0 - 1e-9);
    }

    #[test]
    fn longer_series_changes_nothing() {
        let a = MftrModel::with_truncation(table_params(), 400, 1e-12).unwrap();
        let b = MftrModel::with_truncation(table_params(), 600, 1e-14).unwrap();
        for i in 0..50 {
            let h = 0.05 * i as f64;
            assert!((a.cdf(h) - b.cdf(h)).abs() < 1e-11);
        }
    }

    #[test]
    fn laplace_factor_edges() {
        let model = MftrModel::new(table_params()).unwrap();
        assert_eq!(model.laplace_factor(0.0, 3.0), 1.0);
        assert_eq!(model.laplace_factor(2.0, 0.0), 1.0);
        let mut prev = 1.0;
        for i in 1..40 {
            let v = model.laplace_factor(0.25 * i as f64, 1.0);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
        let d = model.laplace_factor_derivatives(0.0, 2.5, 3);
        assert!((d[0] - 1.0).abs() < 1e-10);
        assert!((d[1] + 2.5).abs() < 2.5 * 5e-3);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let model = MftrModel::new(table_params()).unwrap();
        let a = 3.0;
        let s = 0.5 / (model.sigma2_half * a);
        let d = model.laplace_factor_derivatives(s, a, 5);
        assert!((d[0] - model.laplace_factor(s, a)).abs() < 1e-14);
        let h = 1e-4 * s;
        let fd2 = (model.laplace_factor(s + h, a) - 2.0 * d[0] + model.laplace_factor(s - h, a))
            / (h * h);
        assert!(((fd2 - d[2]) / d[2]).abs() < 1e-4, "{fd2} vs {}", d[2]);
        #[allow(clippy::needless_range_loop)]
        for k in 1..=4 {
            let up = model.laplace_factor_derivatives(s + h, a, k - 1)[k - 1];
            let dn = model.laplace_factor_derivatives(s - h, a, k - 1)[k - 1];
            let fd = (up - dn) / (2.0 * h);
            assert!(((fd - d[k]) / d[k]).abs() < 1e-4, "k={k}");
        }
    }

    #[test]
    fn poisson_moments_sum_to_one() {
        let model = MftrModel::new(table_params()).unwrap();
        for x in [1e-4, 0.1, 1.0, 5.0] {
            let mut out = vec![0.0; 4000];
            model.accumulate_poisson_moments(x, 1.0, &mut out);
            let total: f64 = out.iter().sum();
            assert!((total - 1.0).abs() < 1e-9, "x={x}: {total}");
            assert!((out[0] - model.laplace_factor(x / model.sigma2_half, 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn complement_and_mean() {
        let model = MftrModel::new(table_params()).unwrap();
        assert!((model.mean() - 1.0).abs() < 1e-10);
        for x in [1e-9, 1e-3, 0.5, 20.0] {
            let s = x / model.sigma2_half;
            let c = model.laplace_complement(s, 1.0);
            if x > 1e-3 {
                assert!((c - (1.0 - model.laplace_factor(s, 1.0))).abs() < 1e-12);
            } else {
                // 1 - E[e^{-sH}] ≈ s E[H] for small s.
                assert!((c / s - 1.0).abs() < 10.0 * s, "{c} {s}");
            }
        }
    }

    #[test]
    fn rayleigh_limit() {
        let model = MftrModel::new(MftrParams { k: 0.0, m: 1e6, delta: 0.0, mu: 1 }).unwrap();
        for h in [0.1, 0.5, 1.0, 3.0] {
            assert!((model.cdf(h) - (1.0 - (-h).exp())).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| model.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01);
    }
}
