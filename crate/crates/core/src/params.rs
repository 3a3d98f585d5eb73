//! Scenario data model and the constants derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used by the free-space factor, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Half-power beamwidth constant of a uniform planar array (times `2/N`).
pub const HPBW_FACTOR: f64 = 0.886;

/// Gaussian-beam width constant: `ω = GAUSSIAN_BEAM_FACTOR / N`.
pub const GAUSSIAN_BEAM_FACTOR: f64 = 1.06;

/// How wall lengths are drawn when walls are realized explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WallLengthMode {
    /// Every wall has length `mean_L_W`.
    #[default]
    Fixed,
    /// Exponentially distributed lengths with mean `mean_L_W`.
    Exponential,
}

/// Every physical and system parameter of an indoor deployment.
///
/// Keys in scenario files are the serde names below. Omitted keys take the
/// reference deployment values returned by [`Scenario::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Carrier frequency, Hz.
    pub f: f64,
    /// Molecular absorption coefficient, 1/m.
    pub eps_f: f64,
    #[serde(rename = "h_A")]
    pub h_a: f64,
    #[serde(rename = "h_U")]
    pub h_u: f64,
    #[serde(rename = "h_B")]
    pub h_b: f64,
    #[serde(rename = "R_B")]
    pub r_b: f64,
    #[serde(rename = "lambda_A")]
    pub lambda_a: f64,
    #[serde(rename = "lambda_B")]
    pub lambda_b: f64,
    #[serde(rename = "lambda_W")]
    pub lambda_w: f64,
    #[serde(rename = "mean_L_W")]
    pub mean_l_w: f64,
    #[serde(rename = "wall_length")]
    pub wall_length: WallLengthMode,
    #[serde(rename = "P_t_dBm")]
    pub p_t_dbm: f64,
    #[serde(rename = "N0_dBm")]
    pub n0_dbm: f64,
    #[serde(rename = "N_A")]
    pub n_a: u32,
    #[serde(rename = "N_U")]
    pub n_u: u32,
    #[serde(rename = "R_A")]
    pub r_a: f64,
    /// Standard deviation of the per-axis angle estimation error, degrees.
    pub sigma_theta_deg: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub m: f64,
    pub delta: f64,
    pub mu: u32,
    pub seed: u64,
    /// Simulation disc radius, m. Derived from the blockage density when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim_radius: Option<f64>,
    pub trials: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            f: 0.3e12,
            eps_f: 0.00143,
            h_a: 3.0,
            h_u: 1.0,
            h_b: 1.7,
            r_b: 0.25,
            lambda_a: 0.1,
            lambda_b: 0.1,
            lambda_w: 0.04,
            mean_l_w: 3.0,
            wall_length: WallLengthMode::Fixed,
            p_t_dbm: 5.0,
            n0_dbm: -77.0,
            n_a: 16,
            n_u: 4,
            r_a: 15.0,
            sigma_theta_deg: 0.0,
            k: 5.0,
            m: 2.0,
            delta: 0.3,
            mu: 2,
            seed: 1,
            sim_radius: None,
            trials: 100_000,
        }
    }
}

fn invalid(key: &str, constraint: &str) -> Error {
    Error::Invalid {
        key: key.to_string(),
        constraint: constraint.to_string(),
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("f", self.f),
            ("eps_f", self.eps_f),
            ("h_A", self.h_a),
            ("h_U", self.h_u),
            ("h_B", self.h_b),
            ("R_B", self.r_b),
            ("lambda_A", self.lambda_a),
            ("lambda_B", self.lambda_b),
            ("lambda_W", self.lambda_w),
            ("mean_L_W", self.mean_l_w),
            ("P_t_dBm", self.p_t_dbm),
            ("N0_dBm", self.n0_dbm),
            ("R_A", self.r_a),
            ("sigma_theta_deg", self.sigma_theta_deg),
            ("K", self.k),
            ("m", self.m),
            ("delta", self.delta),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if !(self.h_u < self.h_b && self.h_b < self.h_a) {
            return Err(invalid("h_B", "h_U < h_B < h_A violated"));
        }
        for (key, v) in [
            ("f", self.f),
            ("R_B", self.r_b),
            ("mean_L_W", self.mean_l_w),
            ("R_A", self.r_a),
        ] {
            if v <= 0.0 {
                return Err(invalid(key, "must be > 0"));
            }
        }
        for (key, v) in [
            ("eps_f", self.eps_f),
            ("lambda_A", self.lambda_a),
            ("lambda_B", self.lambda_b),
            ("lambda_W", self.lambda_w),
            ("sigma_theta_deg", self.sigma_theta_deg),
            ("K", self.k),
        ] {
            if v < 0.0 {
                return Err(invalid(key, "must be >= 0"));
            }
        }
        if self.m <= 0.0 {
            return Err(invalid("m", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(invalid("delta", "0 <= delta <= 1 violated"));
        }
        if self.mu < 1 {
            return Err(invalid("mu", "must be a positive integer"));
        }
        if self.n_a < 2 {
            return Err(invalid("N_A", "must be >= 2"));
        }
        if self.n_u < 2 {
            return Err(invalid("N_U", "must be >= 2"));
        }
        if let Some(r) = self.sim_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid("sim_radius", "must be > 0"));
            }
        }
        // Scenario files store integers as signed 64-bit values.
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must be <= 2^63 - 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be >= 1"));
        }
        Ok(())
    }

    /// Apply a `key=value` override; the value uses scenario-file syntax
    /// (bare words are taken as strings).
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(&self.to_toml()?).map_err(|e| Error::Parse(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        table.insert(key.to_string(), parsed);
        let text = toml::to_string(&table).map_err(|e| Error::Parse(e.to_string()))?;
        load_scenario(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn sigma_theta_rad(&self) -> f64 {
        self.sigma_theta_deg.to_radians()
    }
}

/// Parse and validate a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
    s.validate()?;
    Ok(s)
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Quantities computed once from a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// Human blockage rate, 1/m.
    pub alpha: f64,
    /// Wall blockage rate, 1/m.
    pub eta: f64,
    /// Free-space factor `c² / (4πf)²`.
    pub xi: f64,
    /// Diffuse power of the fading model, `2σ²`.
    pub sigma2_half: f64,
    pub g_a_max: f64,
    pub g_u_max: f64,
    /// Half-power beamwidth of the AP array (vertical = horizontal), rad.
    pub phi_a: f64,
    /// Half-power beamwidth of the UE array, rad.
    pub phi_u: f64,
    /// Depression angle from an AP to its coverage boundary, rad.
    pub phi_ap: f64,
    /// Exponent of the pointing-loss power law; `+∞` without pointing error.
    pub beta: f64,
    pub p_t_mw: f64,
    pub n0_mw: f64,
    /// `h_A - h_U`, m.
    pub dh: f64,
    pub sim_radius: f64,
}

impl DerivedConstants {
    pub fn g_max(&self) -> f64 {
        self.g_a_max * self.g_u_max
    }

    /// Total LoS decay rate `α + η`.
    pub fn blockage_rate(&self) -> f64 {
        self.alpha + self.eta
    }

    pub fn has_pointing_error(&self) -> bool {
        self.beta.is_finite()
    }
}

pub fn derive_constants(s: &Scenario) -> DerivedConstants {
    let dh = s.h_a - s.h_u;
    let alpha = 2.0 * s.lambda_b * s.r_b * (s.h_b - s.h_u) / dh;
    let eta = 2.0 * s.lambda_w * s.mean_l_w / std::f64::consts::PI;
    let xi = (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * s.f)).powi(2);
    let sigma2_half = 1.0 / (s.mu as f64 * (s.k + 1.0));
    let pi = std::f64::consts::PI;
    let na = s.n_a as f64;
    let nu = s.n_u as f64;
    let sig = s.sigma_theta_rad();
    let beta = if sig == 0.0 {
        f64::INFINITY
    } else {
        GAUSSIAN_BEAM_FACTOR.powi(2) / (2.0 * sig * sig * (na * na + nu * nu))
    };
    let rate = alpha + eta;
    let sim_radius = s.sim_radius.unwrap_or(if rate > 0.0 {
        30f64.max(10.0 / rate)
    } else {
        30.0
    });
    DerivedConstants {
        alpha,
        eta,
        xi,
        sigma2_half,
        g_a_max: pi * na * na,
        g_u_max: pi * nu * nu,
        phi_a: 2.0 * HPBW_FACTOR / na,
        phi_u: 2.0 * HPBW_FACTOR / nu,
        phi_ap: (dh / s.r_a).atan(),
        beta,
        p_t_mw: dbm_to_mw(s.p_t_dbm),
        n0_mw: dbm_to_mw(s.n0_dbm),
        dh,
        sim_radius,
    }
}
