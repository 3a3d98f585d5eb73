//! Coverage curves, threshold grids and the plain-text formats they are
//! written in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Analytic,
    MonteCarlo,
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Analytic => "analytic",
            Engine::MonteCarlo => "monte-carlo",
        })
    }
}

/// Coverage probability over a grid of SINR thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub gamma_db: Vec<f64>,
    pub values: Vec<f64>,
    /// 95% interval half-widths; Monte Carlo curves only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<Vec<f64>>,
    pub provenance: Engine,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl CoverageCurve {
    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma_db,coverage");
        if self.ci_halfwidth.is_some() {
            out.push_str(",ci_halfwidth");
        }
        out.push('\n');
        for (i, (&g, &v)) in self.gamma_db.iter().zip(&self.values).enumerate() {
            out.push_str(&format!("{},{}", fmt_sig(g), fmt_sig(v)));
            if let Some(ci) = &self.ci_halfwidth {
                out.push_str(&format!(",{}", fmt_sig(ci[i])));
            }
            out.push('\n');
        }
        out
    }
}

/// Format with six significant digits: fixed notation for moderate
/// magnitudes, scientific otherwise.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        let decimals = (5 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // Rounding can carry into a new digit (9.999996 -> 10.00000).
        if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 6 {
            let d = decimals.saturating_sub(1);
            return format!("{x:.d$}");
        }
        s
    } else {
        format!("{x:.5e}")
    }
}

/// Inclusive arithmetic grid `start, start+step, ..., ≤ stop`.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::Input(format!(
            "invalid grid {start}:{stop}:{step}; need start <= stop and step > 0"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            let v = start + i as f64 * step;
            (v * 1e9).round() / 1e9
        })
        .collect())
}

/// Parse `a:b:step` into a grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Input(format!("expected a:b:step, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    linear_grid(nums[0], nums[1], nums[2])
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(0.123456789), "0.123457");
        assert_eq!(fmt_sig(-10.0), "-10.0000");
        assert_eq!(fmt_sig(1.0), "1.00000");
        assert_eq!(fmt_sig(9.9999996), "10.0000");
        assert_eq!(fmt_sig(1.5e-7), "1.50000e-7");
        assert_eq!(fmt_sig(0.0), "0");
    }

    #[test]
    fn grids() {
        let g = parse_grid("-10:40:2").unwrap();
        assert_eq!(g.len(), 26);
        assert_eq!(g[0], -10.0);
        assert_eq!(*g.last().unwrap(), 40.0);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("3:1:1").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn csv_layout() {
        let c = CoverageCurve {
            gamma_db: vec![0.0, 10.0],
            values: vec![0.9, 0.5],
            ci_halfwidth: Some(vec![0.01, 0.02]),
            provenance: Engine::MonteCarlo,
            metadata: serde_json::Value::Null,
        };
        assert_eq!(c.to_csv(), "gamma_db,coverage,ci_halfwidth\n0,0.900000,0.0100000\n10.0000,0.500000,0.0200000\n");
        assert!(c.is_nonincreasing());
    }
}
