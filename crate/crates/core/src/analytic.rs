//! Closed-form coverage engine: Laplace transform of interference plus
//! noise, conditional coverage through the incomplete-gamma expansion of the
//! fading law, and the outer average over pointing loss and association
//! distance.
//!
//! The conditional coverage is assembled from the normalized Taylor
//! coefficients `a_l = (-s)^l L^{(l)}(s) / l!`. These are the probabilities
//! of a mixed Poisson law, so they are non-negative and sum to one, and the
//! recurrence that produces them never subtracts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::InterfererAntenna;
use crate::channel::{large_scale_gain, spreading_absorption, MftrModel};
use crate::curve::{db_to_linear, CoverageCurve, Engine};
use crate::error::{Error, Result};
use crate::geometry::{los_intensity, los_mass_total, nearest_los_pdf, nearest_los_quantile};
use crate::params::{derive_constants, DerivedConstants, Scenario};
use crate::quad::{composite_nodes, geometric_breaks, GaussLegendre};

/// How the fading threshold scales with the SINR threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RhoConvention {
    /// `ρ = γ / (2σ² P_t ξ G_max h W(d0))`, consistent with the fading CDF.
    #[default]
    Derived,
    /// The same with an extra `(j+μ)` factor per series term; kept for
    /// comparison only and much slower.
    AsPrinted,
}

/// Discretization and truncation settings of the analytic engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Panel breaks of the association-distance integral, as fractions of
    /// the total LoS-association probability. The last break sets the
    /// neglected tail mass.
    pub d0_breaks: Vec<f64>,
    pub d0_order: usize,
    /// Panel width in `u = -ln h_pe`, further capped at `hpe_panel / (0.8 β)`
    /// (0.5/β at the default).
    pub hpe_panel: f64,
    pub hpe_order: usize,
    /// Neglected pointing-loss mass `e^{-β u_max}`.
    pub hpe_tail: f64,
    /// Spacing of the conditional-coverage table in `ln s`.
    pub ln_s_step: f64,
    pub int_order: usize,
    /// Width of the first interference panel, m.
    pub int_first: f64,
    pub int_growth: f64,
    /// The interference integral stops where `d e^{-(α+η)d}` falls below
    /// this fraction of its peak.
    pub int_cutoff: f64,
    /// Series tolerance of each conditional-coverage evaluation.
    pub series_tol: f64,
    /// Grid spacing, in `ln x`, of the fading moment table.
    pub table_step: f64,
    /// Half-width, in `ln x`, of the fading moment table.
    pub table_span: f64,
    pub rho: RhoConvention,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            d0_breaks: vec![0.0, 0.05, 0.25, 0.5, 0.75, 0.9, 0.97, 0.995, 0.9999, 1.0 - 1e-6],
            d0_order: 6,
            hpe_panel: 0.4,
            hpe_order: 4,
            hpe_tail: 1e-10,
            ln_s_step: 0.1,
            int_order: 6,
            int_first: 0.2,
            int_growth: 1.15,
            int_cutoff: 1e-8,
            series_tol: 1e-8,
            table_step: 0.01,
            table_span: 30.0,
            rho: RhoConvention::Derived,
        }
    }
}

impl QuadratureSpec {
    /// Every grid twice as dense.
    pub fn refined(&self) -> Self {
        let mut breaks = Vec::with_capacity(2 * self.d0_breaks.len());
        for w in self.d0_breaks.windows(2) {
            breaks.push(w[0]);
            breaks.push(0.5 * (w[0] + w[1]));
        }
        breaks.extend(self.d0_breaks.last());
        Self {
            d0_breaks: breaks,
            hpe_panel: 0.5 * self.hpe_panel,
            ln_s_step: 0.5 * self.ln_s_step,
            int_first: 0.5 * self.int_first,
            int_growth: self.int_growth.sqrt(),
            table_step: 0.5 * self.table_step,
            ..self.clone()
        }
    }
}

/// Reproducibility record attached to every analytic curve.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticMetadata {
    pub quadrature: QuadratureSpec,
    /// Interference integral cutoff, m.
    pub d_int: f64,
    /// Largest association distance on the quadrature grid, m.
    pub d0_max: f64,
    /// Probability of having any LoS AP.
    pub los_association_mass: f64,
    /// Last fading-series index used by the coverage sum.
    pub j_retained: usize,
    /// Fading-series index reached when the law was built.
    pub j_series: usize,
    /// Largest Taylor order any evaluation reached.
    pub l_max_reached: usize,
    pub conditional_evaluations: usize,
    pub interferer_gains: &'static str,
}

/// `ln ψ_k(x)` on a uniform `ln x` grid, where
/// `ψ_k(x) = E[(xH')^k e^{-xH'} / k!]` and `H' = H / 2σ²`. Column 0 holds
/// `ln(1 - E[e^{-xH'}])` instead.
#[derive(Debug, Clone)]
struct MomentTable {
    ln_x0: f64,
    step: f64,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MomentTable {
    fn build(model: &MftrModel, k_max: usize, step: f64, span: f64) -> Self {
        let rows = (2.0 * span / step).round() as usize + 1;
        let cols = k_max + 1;
        let ln_x0 = -span;
        let data: Vec<f64> = (0..rows)
            .into_par_iter()
            .flat_map_iter(|r| {
                let x = (ln_x0 + r as f64 * step).exp();
                let mut out = vec![0.0; cols];
                model.accumulate_poisson_moments(x, 1.0, &mut out);
                out[0] = model.laplace_complement(x / model.sigma2_half, 1.0);
                out.into_iter().map(f64::ln)
            })
            .collect();
        Self {
            ln_x0,
            step,
            rows,
            cols,
            data,
        }
    }

    /// Row index and cubic Lagrange weights for `x`; `None` outside the
    /// interior of the grid.
    fn locate(&self, x: f64) -> Option<(usize, [f64; 4])> {
        let pos = (x.ln() - self.ln_x0) / self.step;
        let r = pos.floor();
        if !(r >= 1.0 && r + 2.0 < self.rows as f64) {
            return None;
        }
        let t = pos - r;
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        Some((r as usize - 1, w))
    }

    #[inline]
    fn value(&self, row: usize, w: &[f64; 4], k: usize) -> f64 {
        let c = self.cols;
        let base = row * c + k;
        let v = [
            self.data[base],
            self.data[base + c],
            self.data[base + 2 * c],
            self.data[base + 3 * c],
        ];
        if v.iter().any(|x| !x.is_finite()) {
            return 0.0;
        }
        (w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3]).exp()
    }
}

/// Interference measure for one association distance: effective link
/// amplitudes `P_t ξ G W(d)` with their quadrature-weighted intensities.
#[derive(Debug, Clone)]
pub struct InterferenceKernel {
    pub d0: f64,
    pub amps: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Evaluator for one scenario.
#[derive(Debug, Clone)]
pub struct AnalyticEngine {
    pub scenario: Scenario,
    pub constants: DerivedConstants,
    pub model: MftrModel,
    pub antenna: InterfererAntenna,
    pub spec: QuadratureSpec,
    pub d_int: f64,
    /// Last series index used by the coverage sum.
    pub j_retained: usize,
    /// `Σ_{j: j+μ > l} w_j` for `l = 0..j_retained+μ`.
    tail: Vec<f64>,
    table: MomentTable,
    int_rule: GaussLegendre,
}

impl AnalyticEngine {
    pub fn new(s: &Scenario) -> Result<Self> {
        Self::with_spec(s, QuadratureSpec::default())
    }

    pub fn with_spec(s: &Scenario, spec: QuadratureSpec) -> Result<Self> {
        s.validate()?;
        let constants = derive_constants(s);
        let model = MftrModel::from_scenario(s)?;
        let antenna = InterfererAntenna::new(s, &constants)?;
        let w = model.weights();
        let mut j_retained = w.len() - 1;
        let mut acc = 0.0;
        for j in (0..w.len()).rev() {
            acc += w[j];
            if acc > 0.1 * spec.series_tol {
                j_retained = j;
                break;
            }
        }
        let mu = s.mu as usize;
        let n_max = j_retained + mu;
        let tail: Vec<f64> = (0..n_max)
            .map(|l| w.iter().enumerate().filter(|(j, _)| j + mu > l).map(|(_, &x)| x).sum())
            .collect();
        let table = MomentTable::build(&model, n_max, spec.table_step, spec.table_span);
        let d_int = interference_cutoff(&constants, s, spec.int_cutoff);
        let int_rule = GaussLegendre::new(spec.int_order);
        Ok(Self {
            scenario: s.clone(),
            constants,
            model,
            antenna,
            spec,
            d_int,
            j_retained,
            tail,
            table,
            int_rule,
        })
    }

    /// Largest Taylor order the coverage sum can use.
    pub fn l_max(&self) -> usize {
        self.tail.len() - 1
    }

    /// `ρ` for a unit SINR threshold, i.e. `1 / (2σ² P_t ξ G_max h W(d0))`.
    pub fn rho_unit(&self, h_pe: f64, d0: f64) -> f64 {
        let c = &self.constants;
        let w = spreading_absorption(d0, c.dh, self.scenario.eps_f);
        1.0 / (c.sigma2_half * c.p_t_mw * c.xi * c.g_max() * h_pe * w)
    }

    pub fn kernel(&self, d0: f64) -> InterferenceKernel {
        let c = &self.constants;
        let s = &self.scenario;
        let mut amps = Vec::new();
        let mut weights = Vec::new();
        if d0 < self.d_int && s.lambda_a > 0.0 {
            let r_max = crate::antenna::r_u0_max(d0, c);
            let mut breaks = geometric_breaks(d0, self.d_int, self.spec.int_first, self.spec.int_growth);
            if r_max > d0 && r_max < self.d_int {
                let pos = breaks.partition_point(|&b| b < r_max);
                if breaks[pos] != r_max {
                    breaks.insert(pos, r_max);
                }
            }
            for (d, wq) in composite_nodes(&self.int_rule, &breaks) {
                let lam = los_intensity(d, c, s) * wq;
                let pmf = self.antenna.pmf_given_vertical(d <= r_max);
                let base = c.p_t_mw * large_scale_gain(d, c, s).h_l;
                for (g, p) in pmf.iter() {
                    if p > 0.0 {
                        amps.push(base * g);
                        weights.push(lam * p);
                    }
                }
            }
        }
        InterferenceKernel { d0, amps, weights }
    }

    /// `L_{I+N0}(s | d0)`.
    pub fn laplace_interference(&self, s: f64, d0: f64) -> f64 {
        let k = self.kernel(d0);
        let exponent: f64 = k
            .amps
            .iter()
            .zip(&k.weights)
            .map(|(&a, &w)| w * self.model.laplace_complement(s, a))
            .sum();
        (-s * self.constants.n0_mw - exponent).exp()
    }

    /// Mean interference power at the typical UE given `d0`, mW.
    pub fn mean_interference(&self, d0: f64) -> f64 {
        let k = self.kernel(d0);
        let mean_h = self.model.mean();
        k.amps.iter().zip(&k.weights).map(|(&a, &w)| w * a * mean_h).sum()
    }

    /// `L^{(l)}(s | d0)` for `l = 0..=l_max`, from the derivatives of the
    /// exponent and the exponential composition rule.
    pub fn laplace_derivatives(&self, s: f64, d0: f64, l_max: usize) -> Vec<f64> {
        let k = self.kernel(d0);
        let mut g = vec![0.0; l_max + 1];
        for (&a, &w) in k.amps.iter().zip(&k.weights) {
            let d = self.model.laplace_factor_derivatives(s, a, l_max);
            for (gk, dk) in g.iter_mut().zip(&d).skip(1) {
                *gk += w * dk;
            }
        }
        if l_max >= 1 {
            g[1] -= self.constants.n0_mw;
        }
        let mut out = vec![0.0; l_max + 1];
        out[0] = self.laplace_interference(s, d0);
        for l in 1..=l_max {
            let mut acc = 0.0;
            let mut binom = 1.0;
            for kk in 1..=l {
                acc += binom * g[kk] * out[l - kk];
                binom *= (l - kk) as f64 / kk as f64;
            }
            out[l] = acc;
        }
        out
    }

    /// Normalized Taylor coefficients `a_l = (-s)^l L^{(l)}(s) / l!` for
    /// `l = 0..=l_max`, computed with the moment table.
    pub fn taylor_coefficients(&self, kernel: &InterferenceKernel, s: f64, l_max: usize) -> Vec<f64> {
        let mut ev = TaylorEval::new(self, kernel, s);
        (0..=l_max).map(|l| ev.coefficient(l)).collect()
    }

    /// Coverage given the pointing loss, the association distance and a
    /// linear SINR threshold.
    pub fn conditional_coverage(&self, h_pe: f64, d0: f64, gamma: f64) -> Result<f64> {
        let kernel = self.kernel(d0);
        let rho = gamma * self.rho_unit(h_pe, d0);
        Ok(self.coverage_at(&kernel, rho)?.0)
    }

    /// Conditional coverage at `s = ρ`; also returns the highest Taylor
    /// order used.
    pub fn coverage_at(&self, kernel: &InterferenceKernel, rho: f64) -> Result<(f64, usize)> {
        let (value, used) = match self.spec.rho {
            RhoConvention::Derived => self.coverage_derived(kernel, rho),
            RhoConvention::AsPrinted => self.coverage_as_printed(kernel, rho),
        };
        if !(-1e-6..=1.0 + 1e-6).contains(&value) {
            return Err(Error::Clamp { value });
        }
        Ok((value.clamp(0.0, 1.0), used))
    }

    fn coverage_derived(&self, kernel: &InterferenceKernel, rho: f64) -> (f64, usize) {
        let mut ev = TaylorEval::new(self, kernel, rho);
        if ev.underflow() {
            return (0.0, 0);
        }
        let tol = self.spec.series_tol;
        let mut cov = 0.0;
        let mut mass = 0.0;
        let mut used = 0;
        for l in 0..=self.l_max() {
            let a = ev.coefficient(l);
            cov += a * self.tail[l];
            mass += a;
            used = l;
            let next_tail = self.tail.get(l + 1).copied().unwrap_or(0.0);
            if (1.0 - mass) * next_tail < tol {
                break;
            }
        }
        (cov, used)
    }

    fn coverage_as_printed(&self, kernel: &InterferenceKernel, rho: f64) -> (f64, usize) {
        let mu = self.scenario.mu as usize;
        let w = self.model.weights();
        let mut cov = 0.0;
        let mut used = 0;
        for (j, &wj) in w.iter().enumerate().take(self.j_retained + 1) {
            let n = j + mu;
            let mut ev = TaylorEval::new(self, kernel, n as f64 * rho);
            if ev.underflow() {
                continue;
            }
            let part: f64 = (0..n).map(|l| ev.coefficient(l)).sum();
            cov += wj * part;
            used = used.max(n - 1);
        }
        (cov, used)
    }

    /// Association-distance nodes and weights `f_{D0}(d0) w`.
    pub fn d0_nodes(&self) -> Vec<(f64, f64)> {
        let c = &self.constants;
        let s = &self.scenario;
        let total = -(-los_mass_total(c, s)).exp_m1();
        if total <= 0.0 {
            return Vec::new();
        }
        let breaks: Vec<f64> = self
            .spec
            .d0_breaks
            .iter()
            .filter_map(|&q| nearest_los_quantile(q * total, c, s))
            .collect();
        let rule = GaussLegendre::new(self.spec.d0_order);
        composite_nodes(&rule, &breaks)
            .into_iter()
            .map(|(d, w)| (d, w * nearest_los_pdf(d, c, s)))
            .collect()
    }

    /// Coverage for every grid threshold given `d0`, averaged over the
    /// pointing loss. Returns the values and the highest Taylor order used.
    fn coverage_given_d0(&self, d0: f64, gammas: &[f64]) -> Result<(Vec<f64>, usize, usize)> {
        let kernel = self.kernel(d0);
        let unit = self.rho_unit(1.0, d0);
        let beta = self.constants.beta;
        let mut used = 0;
        if !beta.is_finite() {
            let mut out = Vec::with_capacity(gammas.len());
            for &g in gammas {
                let (v, u) = self.coverage_at(&kernel, g * unit)?;
                used = used.max(u);
                out.push(v);
            }
            return Ok((out, used, gammas.len()));
        }
        let g_min = gammas.iter().copied().fold(f64::INFINITY, f64::min);
        let mut table = CoverageTable::new((g_min * unit).ln(), self.spec.ln_s_step);
        let u_max = -self.spec.hpe_tail.ln() / beta;
        // Keeps the weight e^{-βu} nearly polynomial on every panel.
        let panel = self.spec.hpe_panel.min(self.spec.hpe_panel / (0.8 * beta));
        let rule = GaussLegendre::new(self.spec.hpe_order);
        let mut out = Vec::with_capacity(gammas.len());
        for &g in gammas {
            let ln_rho0 = (g * unit).ln();
            let mut acc = 0.0;
            let mut u0 = 0.0;
            while u0 < u_max {
                let u1 = (u0 + panel).min(u_max);
                if table.value(self, &kernel, ln_rho0 + u0, &mut used)? < 1e-13 {
                    break;
                }
                for (u, w) in rule.on(u0, u1) {
                    let c = table.value(self, &kernel, ln_rho0 + u, &mut used)?;
                    acc += w * beta * (-beta * u).exp() * c;
                }
                u0 = u1;
            }
            out.push(acc.clamp(0.0, 1.0));
        }
        Ok((out, used, table.values.len()))
    }

    /// Coverage probability over a grid of thresholds in dB.
    pub fn coverage_curve(&self, gamma_db: &[f64]) -> Result<CoverageCurve> {
        let gammas: Vec<f64> = gamma_db.iter().map(|&g| db_to_linear(g)).collect();
        let nodes = self.d0_nodes();
        let parts: Vec<(Vec<f64>, usize, usize)> = nodes
            .par_iter()
            .map(|&(d0, _)| self.coverage_given_d0(d0, &gammas))
            .collect::<Result<_>>()?;
        let mut values = vec![0.0; gammas.len()];
        let mut l_max_reached = 0;
        let mut evals = 0;
        for ((_, w), (part, used, n)) in nodes.iter().zip(&parts) {
            for (v, p) in values.iter_mut().zip(part) {
                *v += w * p;
            }
            l_max_reached = l_max_reached.max(*used);
            evals += n;
        }
        for v in values.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        // Removes quadrature noise of order 1e-12 at saturated thresholds.
        for i in 1..values.len() {
            let rise = values[i] - values[i - 1];
            if gamma_db[i] >= gamma_db[i - 1] && rise > 0.0 && rise < 1e-9 {
                values[i] = values[i - 1];
            }
        }
        let meta = AnalyticMetadata {
            quadrature: self.spec.clone(),
            d_int: self.d_int,
            d0_max: nodes.last().map(|n| n.0).unwrap_or(0.0),
            los_association_mass: -(-los_mass_total(&self.constants, &self.scenario)).exp_m1(),
            j_retained: self.j_retained,
            j_series: self.model.j_max,
            l_max_reached,
            conditional_evaluations: evals,
            interferer_gains: "cone-model pmf",
        };
        Ok(CoverageCurve {
            gamma_db: gamma_db.to_vec(),
            values,
            ci_halfwidth: None,
            provenance: Engine::Analytic,
            metadata: serde_json::to_value(meta).expect("metadata serializes"),
        })
    }

    pub fn coverage_probability(&self, gamma_db: f64) -> Result<f64> {
        Ok(self.coverage_curve(&[gamma_db])?.values[0])
    }
}

/// Lazily evaluated Taylor coefficients at one `s`.
struct TaylorEval<'a> {
    engine: &'a AnalyticEngine,
    s: f64,
    g0: f64,
    /// Table position per kernel entry, or `None` for direct evaluation.
    located: Vec<Option<(usize, [f64; 4])>>,
    weights: &'a [f64],
    amps: &'a [f64],
    direct: Vec<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
}

impl<'a> TaylorEval<'a> {
    fn new(engine: &'a AnalyticEngine, kernel: &'a InterferenceKernel, s: f64) -> Self {
        let model = &engine.model;
        let sig = model.sigma2_half;
        let table = &engine.table;
        let mut located = Vec::with_capacity(kernel.amps.len());
        let mut g0 = -s * engine.constants.n0_mw;
        let mut need_direct = false;
        for (&amp, &w) in kernel.amps.iter().zip(&kernel.weights) {
            let x = s * sig * amp;
            let loc = if x > 0.0 { table.locate(x) } else { None };
            match loc {
                Some((row, ref lw)) => g0 -= w * table.value(row, lw, 0),
                None => {
                    g0 -= w * model.laplace_complement(s, amp);
                    need_direct |= x > 0.0;
                }
            }
            located.push(loc);
        }
        let l_cap = engine.l_max() + 1;
        let mut direct = Vec::new();
        if need_direct {
            direct = vec![0.0; l_cap + 1];
            for (i, (&amp, &w)) in kernel.amps.iter().zip(&kernel.weights).enumerate() {
                let x = s * sig * amp;
                if located[i].is_none() && x > 0.0 {
                    model.accumulate_poisson_moments(x, w, &mut direct);
                }
            }
        }
        Self {
            engine,
            s,
            g0,
            located,
            weights: &kernel.weights,
            amps: &kernel.amps,
            direct,
            c: vec![0.0],
            a: Vec::new(),
        }
    }

    fn underflow(&self) -> bool {
        self.g0 < -700.0
    }

    fn c_k(&mut self, k: usize) -> f64 {
        while self.c.len() <= k {
            let kk = self.c.len();
            let table = &self.engine.table;
            let mut acc = if kk == 1 {
                self.s * self.engine.constants.n0_mw
            } else {
                0.0
            };
            if kk < table.cols {
                for (loc, &w) in self.located.iter().zip(self.weights) {
                    if let Some((row, lw)) = loc {
                        acc += w * table.value(*row, lw, kk);
                    }
                }
            } else {
                // Beyond the table: evaluate directly.
                let sig = self.engine.model.sigma2_half;
                for (&amp, &w) in self.amps.iter().zip(self.weights) {
                    let x = self.s * sig * amp;
                    if x > 0.0 {
                        let mut v = vec![0.0; kk + 1];
                        self.engine.model.accumulate_poisson_moments(x, w, &mut v);
                        acc += v[kk];
                    }
                }
            }
            if let Some(d) = self.direct.get(kk) {
                acc += d;
            }
            self.c.push(acc);
        }
        self.c[k]
    }

    fn coefficient(&mut self, l: usize) -> f64 {
        while self.a.len() <= l {
            let n = self.a.len();
            let v = if n == 0 {
                self.g0.exp()
            } else {
                let mut acc = 0.0;
                for k in 1..=n {
                    acc += k as f64 * self.c_k(k) * self.a[n - k];
                }
                acc / n as f64
            };
            self.a.push(v);
        }
        self.a[l]
    }
}

/// Conditional coverage on a uniform `ln s` grid, extended on demand and
/// read back through cubic interpolation.
struct CoverageTable {
    ln_s0: f64,
    step: f64,
    values: Vec<f64>,
    /// Index from which every value is treated as zero.
    zero_from: Option<usize>,
}

impl CoverageTable {
    fn new(ln_s0: f64, step: f64) -> Self {
        Self {
            ln_s0: ln_s0 - step,
            step,
            values: Vec::new(),
            zero_from: None,
        }
    }

    fn ensure(
        &mut self,
        engine: &AnalyticEngine,
        kernel: &InterferenceKernel,
        idx: usize,
        used: &mut usize,
    ) -> Result<()> {
        while self.values.len() <= idx {
            let i = self.values.len();
            if self.zero_from.is_some() {
                self.values.push(0.0);
                continue;
            }
            let s = (self.ln_s0 + i as f64 * self.step).exp();
            let (v, u) = engine.coverage_at(kernel, s)?;
            *used = (*used).max(u);
            if v < 1e-14 {
                self.zero_from = Some(i);
            }
            self.values.push(v);
        }
        Ok(())
    }

    fn value(
        &mut self,
        engine: &AnalyticEngine,
        kernel: &InterferenceKernel,
        ln_s: f64,
        used: &mut usize,
    ) -> Result<f64> {
        let pos = ((ln_s - self.ln_s0) / self.step).max(0.0);
        let r = (pos.floor() as usize).max(1);
        self.ensure(engine, kernel, r + 2, used)?;
        let t = pos - r as f64;
        let v = &self.values[r - 1..r + 3];
        let w = [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ];
        let out = w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3];
        Ok(out.clamp(0.0, 1.0))
    }
}

/// Distance beyond which the LoS interferer intensity `d e^{-(α+η)d}` is
/// below `rel` of its peak. Without blockage the absorption rate takes the
/// role of `α+η`.
pub fn interference_cutoff(c: &DerivedConstants, s: &Scenario, rel: f64) -> f64 {
    let a = if c.blockage_rate() > 0.0 {
        c.blockage_rate()
    } else {
        s.eps_f
    };
    let f = |d: f64| (d * a).ln() - a * d + 1.0 - rel.ln();
    let mut lo = 1.0 / a;
    let mut hi = 2.0 * lo;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `L_{I+N0}(s | d0)` for a scenario.
pub fn laplace_interference(s_val: f64, d0: f64, s: &Scenario) -> Result<f64> {
    Ok(AnalyticEngine::new(s)?.laplace_interference(s_val, d0))
}

/// Coverage probability at a threshold in dB.
pub fn coverage_probability(gamma_db: f64, s: &Scenario) -> Result<f64> {
    AnalyticEngine::new(s)?.coverage_probability(gamma_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> AnalyticEngine {
        AnalyticEngine::new(&Scenario::default()).unwrap()
    }

    #[test]
    fn cutoff_reference() {
        let e = engine();
        let a = e.constants.blockage_rate();
        let peak = (-1.0f64).exp() / a;
        let v = e.d_int * (-a * e.d_int).exp();
        assert!((v / peak - 1e-8).abs() < 1e-12);
        assert!(e.d_int > 200.0 && e.d_int < 300.0, "{}", e.d_int);
    }

    #[test]
    fn laplace_at_zero_is_one() {
        let e = engine();
        for d0 in [0.0, 0.5, 2.0, 10.0, 40.0] {
            assert_eq!(e.laplace_interference(0.0, d0), 1.0);
        }
    }

    #[test]
    fn no_interferers_leaves_noise() {
        let s = Scenario { lambda_a: 1e-12, ..Scenario::default() };
        let e = AnalyticEngine::new(&s).unwrap();
        let sv = 1e7;
        let expect = (-sv * e.constants.n0_mw).exp();
        assert!((e.laplace_interference(sv, 2.0) - expect).abs() < 1e-9);
    }

    #[test]
    fn scaled_coefficients_match_raw_derivatives() {
        let e = engine();
        let d0 = 2.0;
        let kernel = e.kernel(d0);
        for scale in [0.1, 1.0, 10.0] {
            let s = scale * e.rho_unit(1.0, d0);
            let raw = e.laplace_derivatives(s, d0, 12);
            let scaled = e.taylor_coefficients(&kernel, s, 12);
            let mut fact = 1.0;
            for l in 0..=12 {
                if l > 0 {
                    fact *= l as f64;
                }
                let from_raw = (-s).powi(l as i32) * raw[l] / fact;
                let tol = 1e-6 * scaled[l].abs().max(1e-12);
                assert!((from_raw - scaled[l]).abs() < tol, "s={scale} l={l}: {from_raw} vs {}", scaled[l]);
            }
        }
    }

    #[test]
    fn coefficients_form_a_distribution() {
        let e = engine();
        let kernel = e.kernel(3.0);
        let s = 30.0 * e.rho_unit(1.0, 3.0);
        let a = e.taylor_coefficients(&kernel, s, e.l_max());
        assert!(a.iter().all(|&x| x >= 0.0));
        let sum: f64 = a.iter().sum();
        assert!(sum <= 1.0 + 1e-9 && sum > 0.99, "{sum}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let e = engine();
        let d0 = 2.0;
        let s = e.rho_unit(1.0, d0);
        let l_max = 4;
        let d = e.laplace_derivatives(s, d0, l_max);
        let h = 1e-4 * s;
        let lo = e.laplace_derivatives(s - h, d0, l_max);
        let hi = e.laplace_derivatives(s + h, d0, l_max);
        let fd0 = (e.laplace_interference(s + h, d0) - e.laplace_interference(s - h, d0)) / (2.0 * h);
        assert!((fd0 / d[1] - 1.0).abs() < 1e-4);
        for l in 1..=l_max {
            let fd = (hi[l - 1] - lo[l - 1]) / (2.0 * h);
            assert!((fd / d[l] - 1.0).abs() < 1e-4, "l={l}: {fd} vs {}", d[l]);
        }
    }

    #[test]
    fn first_derivative_at_zero_is_mean_load() {
        let e = engine();
        let d = e.laplace_derivatives(0.0, 2.0, 1);
        let expect = -(e.constants.n0_mw + e.mean_interference(2.0));
        assert!((d[1] / expect - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conditional_coverage_limits() {
        let e = engine();
        assert!((e.conditional_coverage(1.0, 2.0, 1e-9).unwrap() - 1.0).abs() < 1e-6);
        assert!(e.conditional_coverage(1.0, 2.0, db_to_linear(120.0)).unwrap() < 1e-3);
        let mut prev = 1.0;
        for db in (-10..=40).step_by(5) {
            let v = e.conditional_coverage(0.5, 4.0, db_to_linear(db as f64)).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let e = engine();
        let kernel = e.kernel(2.0);
        let s = 200.0 * e.rho_unit(1.0, 2.0);
        let a = e.taylor_coefficients(&kernel, s, 40);
        // Direct evaluation without the table.
        let mut c = vec![0.0; 41];
        let x_of = |amp: f64| s * e.model.sigma2_half * amp;
        for (&amp, &w) in kernel.amps.iter().zip(&kernel.weights) {
            e.model.accumulate_poisson_moments(x_of(amp), w, &mut c);
        }
        c[1] += s * e.constants.n0_mw;
        let g0: f64 = -s * e.constants.n0_mw
            - kernel
                .amps
                .iter()
                .zip(&kernel.weights)
                .map(|(&amp, &w)| w * e.model.laplace_complement(s, amp))
                .sum::<f64>();
        let mut b = vec![g0.exp()];
        for n in 1..=40 {
            let v: f64 = (1..=n).map(|k| k as f64 * c[k] * b[n - k]).sum::<f64>() / n as f64;
            b.push(v);
        }
        for l in 0..=40 {
            assert!((a[l] - b[l]).abs() <= 1e-6 * b[l] + 1e-300, "l={l}: {} vs {}", a[l], b[l]);
        }
    }

    #[test]
    fn coverage_saturates_at_low_threshold() {
        let e = engine();
        let p = e.coverage_probability(-60.0).unwrap();
        assert!(p >= 0.999, "{p}");
    }
}
