//! Monte Carlo engine: AP and blockage realizations, nearest-LoS
//! association, pointing error, fading and interference, with per-trial
//! random streams so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::{r_u0_max, sample_pointing_loss, InterfererAntenna, PointingMode, PointingModel};
use crate::channel::{spreading_absorption, MftrModel};
use crate::curve::{db_to_linear, fmt_sig, linear_to_db, CoverageCurve, Engine};
use crate::error::{Error, Result};
use crate::geometry::{
    is_los, los_probability, poisson_count, sample_ap_field, sample_blockage_field, BlockageField, Point2,
};
use crate::params::{derive_constants, DerivedConstants, Scenario};
use crate::stats::{wilson_halfwidth, Z95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlockageMode {
    /// Each AP is LoS independently with probability `e^{-(α+η)d}`.
    #[default]
    Thinned,
    /// Explicit humans and walls.
    Geometric,
}

impl std::str::FromStr for BlockageMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thinned" => Ok(Self::Thinned),
            "geometric" => Ok(Self::Geometric),
            other => Err(Error::Input(format!("unknown blockage mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimOptions {
    pub trials: usize,
    pub seed: u64,
    pub blockage: BlockageMode,
    pub pointing: PointingMode,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SimOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            blockage: BlockageMode::Thinned,
            pointing: PointingMode::Exact,
            workers: None,
        }
    }
}

/// Outcome of one network realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    /// Horizontal distance to the serving AP; `None` without any LoS AP.
    pub d0: Option<f64>,
    pub sinr: Option<f64>,
    pub h_pe: f64,
    pub n_los_aps: usize,
    pub signal_mw: f64,
    pub interference_mw: f64,
}

impl TrialResult {
    fn no_ap(n_los_aps: usize) -> Self {
        Self {
            d0: None,
            sinr: None,
            h_pe: f64::NAN,
            n_los_aps,
            signal_mw: 0.0,
            interference_mw: 0.0,
        }
    }

    pub fn covered(&self, gamma: f64) -> bool {
        self.sinr.is_some_and(|x| x > gamma)
    }
}

/// Random stream for trial `index`, independent of execution order.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Desired and interfering powers of one conditional draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDraw {
    pub signal_mw: f64,
    pub interference_mw: f64,
}

/// Simulator state shared by all trials.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub scenario: Scenario,
    pub constants: DerivedConstants,
    pub model: MftrModel,
    pub antenna: InterfererAntenna,
    pub pointing: PointingModel,
    /// Serving-link fading gain used instead of a fresh draw.
    pub fixed_fading: Option<f64>,
}

impl Simulator {
    pub fn new(s: &Scenario, pointing: PointingMode) -> Result<Self> {
        s.validate()?;
        let constants = derive_constants(s);
        Ok(Self {
            scenario: s.clone(),
            model: MftrModel::from_scenario(s)?,
            antenna: InterfererAntenna::new(s, &constants)?,
            pointing: PointingModel::from_scenario(s, pointing),
            constants,
            fixed_fading: None,
        })
    }

    fn path(&self, d: f64) -> f64 {
        let c = &self.constants;
        c.p_t_mw * c.xi * spreading_absorption(d, c.dh, self.scenario.eps_f)
    }

    /// Horizontal distances of the LoS APs under independent thinning.
    pub fn thinned_los_distances<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let r = self.constants.sim_radius;
        let n = poisson_count(self.scenario.lambda_a * std::f64::consts::PI * r * r, rng);
        let rate = self.constants.blockage_rate();
        (0..n)
            .filter_map(|_| {
                let d = r * rng.random::<f64>().sqrt();
                (rng.random::<f64>() < (-rate * d).exp()).then_some(d)
            })
            .collect()
    }

    /// LoS AP distances for an explicit blockage realization.
    pub fn geometric_los_distances<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let aps = sample_ap_field(&self.scenario, &self.constants, rng);
        let field = sample_blockage_field(&self.scenario, &self.constants, rng).indexed(2.0);
        aps.positions
            .iter()
            .filter(|&&p| is_los(p, &field, &self.scenario))
            .map(|p| p.norm())
            .collect()
    }

    /// Distance to the nearest LoS AP for an explicit blockage realization,
    /// testing APs nearest first.
    pub fn geometric_nearest_los<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let mut aps = sample_ap_field(&self.scenario, &self.constants, rng).positions;
        let field = sample_blockage_field(&self.scenario, &self.constants, rng);
        aps.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        aps.into_iter()
            .find(|&p| is_los(p, &field, &self.scenario))
            .map(|p| p.norm())
    }

    /// Powers at the UE given the LoS AP distances.
    fn evaluate<R: Rng + ?Sized>(&self, mut los: Vec<f64>, rng: &mut R) -> TrialResult {
        let n = los.len();
        if n == 0 {
            return TrialResult::no_ap(0);
        }
        let (i0, &d0) = los
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        los.swap_remove(i0);
        let h_pe = sample_pointing_loss(&self.pointing, rng);
        let h_s = self.fixed_fading.unwrap_or_else(|| self.model.sample(rng));
        let signal = self.path(d0) * self.constants.g_max() * h_pe * h_s;
        let interference = self.interference(d0, &los, rng);
        let n0 = self.constants.n0_mw;
        TrialResult {
            d0: Some(d0),
            sinr: Some(signal / (interference + n0)),
            h_pe,
            n_los_aps: n,
            signal_mw: signal,
            interference_mw: interference,
        }
    }

    fn interference<R: Rng + ?Sized>(&self, d0: f64, others: &[f64], rng: &mut R) -> f64 {
        let r_max = r_u0_max(d0, &self.constants);
        others
            .iter()
            .map(|&d| {
                let g = self.antenna.sample(d <= r_max, rng);
                self.path(d) * g * self.model.sample(rng)
            })
            .sum()
    }

    pub fn run_trial<R: Rng + ?Sized>(&self, blockage: BlockageMode, rng: &mut R) -> TrialResult {
        let los = match blockage {
            BlockageMode::Thinned => self.thinned_los_distances(rng),
            BlockageMode::Geometric => self.geometric_los_distances(rng),
        };
        self.evaluate(los, rng)
    }

    /// Run trials `0..n` in parallel; results are in trial order.
    pub fn run(&self, opts: &SimOptions) -> Result<Vec<TrialResult>> {
        let work = || -> Vec<TrialResult> {
            (0..opts.trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = trial_rng(opts.seed, i);
                    self.run_trial(opts.blockage, &mut rng)
                })
                .collect()
        };
        match opts.workers {
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
                Ok(pool.install(work))
            }
            None => Ok(work()),
        }
    }

    /// Draw with the serving AP fixed at `d0` and the pointing loss fixed at
    /// `h_pe`: the other LoS APs form a thinned PPP beyond `d0`.
    pub fn conditional_draw<R: Rng + ?Sized>(&self, d0: f64, h_pe: f64, rng: &mut R) -> LinkDraw {
        let r = self.constants.sim_radius.max(d0);
        let area = std::f64::consts::PI * (r * r - d0 * d0);
        let n = poisson_count(self.scenario.lambda_a * area, rng);
        let others: Vec<f64> = (0..n)
            .filter_map(|_| {
                let d = (d0 * d0 + rng.random::<f64>() * (r * r - d0 * d0)).sqrt();
                (rng.random::<f64>() < los_probability(d, &self.constants)).then_some(d)
            })
            .collect();
        let h_s = self.fixed_fading.unwrap_or_else(|| self.model.sample(rng));
        let signal = self.path(d0) * self.constants.g_max() * h_pe * h_s;
        LinkDraw {
            signal_mw: signal,
            interference_mw: self.interference(d0, &others, rng),
        }
    }

    /// Explicit scene of the first draws of trial `index` in geometric mode.
    pub fn scene(&self, seed: u64, index: u64) -> SceneDump {
        let mut rng = trial_rng(seed, index);
        let aps = sample_ap_field(&self.scenario, &self.constants, &mut rng);
        let field = sample_blockage_field(&self.scenario, &self.constants, &mut rng);
        SceneDump::new(&aps.positions, field, &self.scenario)
    }
}

/// Per-threshold coverage fractions over shared trials.
pub fn coverage_from_trials(trials: &[TrialResult], gamma_db: &[f64]) -> CoverageCurve {
    let n = trials.len();
    let mut sinrs: Vec<f64> = trials.iter().filter_map(|t| t.sinr).collect();
    sinrs.sort_by(f64::total_cmp);
    let mut values = Vec::with_capacity(gamma_db.len());
    let mut ci = Vec::with_capacity(gamma_db.len());
    for &g in gamma_db {
        let lin = db_to_linear(g);
        let k = sinrs.len() - sinrs.partition_point(|&x| x <= lin);
        values.push(if n > 0 { k as f64 / n as f64 } else { 0.0 });
        ci.push(wilson_halfwidth(k, n, Z95));
    }
    CoverageCurve {
        gamma_db: gamma_db.to_vec(),
        values,
        ci_halfwidth: Some(ci),
        provenance: Engine::MonteCarlo,
        metadata: serde_json::Value::Null,
    }
}

/// Monte Carlo coverage curve.
pub fn estimate_coverage(s: &Scenario, gamma_db: &[f64], opts: &SimOptions) -> Result<CoverageCurve> {
    if opts.trials < 1000 {
        return Err(Error::Input(format!("need at least 1000 trials, got {}", opts.trials)));
    }
    let sim = Simulator::new(s, opts.pointing)?;
    let trials = sim.run(opts)?;
    let mut curve = coverage_from_trials(&trials, gamma_db);
    curve.metadata = serde_json::json!({
        "trials": opts.trials,
        "seed": opts.seed,
        "blockage": opts.blockage,
        "pointing": opts.pointing,
        "sim_radius": sim.constants.sim_radius,
        "interferer_gains": "independent beam-hit draws from the cone-model pmf",
        "no_los_trials": trials.iter().filter(|t| t.d0.is_none()).count(),
    });
    Ok(curve)
}

/// Per-trial CSV with columns
/// `trial,d0,n_los_aps,h_pe,signal_mW,interference_mW,sinr_dB`.
pub fn trials_csv(trials: &[TrialResult]) -> String {
    let mut out = String::from("trial,d0,n_los_aps,h_pe,signal_mW,interference_mW,sinr_dB\n");
    let opt = |x: Option<f64>| x.map(fmt_sig).unwrap_or_default();
    for (i, t) in trials.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            opt(t.d0),
            t.n_los_aps,
            opt(t.d0.map(|_| t.h_pe)),
            fmt_sig(t.signal_mw),
            fmt_sig(t.interference_mw),
            opt(t.sinr.map(linear_to_db)),
        ));
    }
    out
}

/// Explicit scene for external visualization.
#[derive(Debug, Clone, Serialize)]
pub struct SceneDump {
    pub aps: Vec<Point2>,
    pub los: Vec<bool>,
    pub humans: Vec<Point2>,
    pub human_radius: f64,
    pub walls: Vec<[Point2; 2]>,
    pub region_radius: f64,
}

impl SceneDump {
    pub fn new(aps: &[Point2], field: BlockageField, s: &Scenario) -> Self {
        let field = field.indexed(2.0);
        let los = aps.iter().map(|&p| is_los(p, &field, s)).collect();
        Self {
            aps: aps.to_vec(),
            los,
            humans: field.humans.iter().map(|h| h.center).collect(),
            human_radius: s.r_b,
            walls: field
                .walls
                .iter()
                .map(|w| {
                    let (a, b) = w.endpoints();
                    [a, b]
                })
                .collect(),
            region_radius: field.region_radius,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::large_scale_gain;

    #[test]
    fn empty_network_is_uncovered() {
        let s = Scenario { lambda_a: 0.0, ..Scenario::default() };
        let sim = Simulator::new(&s, PointingMode::Exact).unwrap();
        let mut rng = trial_rng(1, 0);
        let t = sim.run_trial(BlockageMode::Thinned, &mut rng);
        assert_eq!(t.d0, None);
        assert!(!t.covered(0.0));
    }

    #[test]
    fn single_link_budget() {
        let s = Scenario::default();
        let mut sim = Simulator::new(&s, PointingMode::Exact).unwrap();
        sim.fixed_fading = Some(1.0);
        let mut rng = trial_rng(1, 0);
        let t = sim.evaluate(vec![2.0], &mut rng);
        let c = &sim.constants;
        let expect = c.p_t_mw * c.g_max() * large_scale_gain(2.0, c, &s).h_l / c.n0_mw;
        assert!((t.sinr.unwrap() / expect - 1.0).abs() < 1e-12);
        assert_eq!(t.interference_mw, 0.0);
    }

    #[test]
    fn serving_ap_is_nearest() {
        let sim = Simulator::new(&Scenario::default(), PointingMode::Exact).unwrap();
        let mut rng = trial_rng(3, 0);
        for _ in 0..50 {
            let los = sim.thinned_los_distances(&mut rng);
            let m = los.iter().copied().fold(f64::INFINITY, f64::min);
            let t = sim.evaluate(los.clone(), &mut rng);
            assert_eq!(t.d0, Some(m));
            assert_eq!(t.n_los_aps, los.len());
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sim = Simulator::new(&Scenario::default(), PointingMode::Exact).unwrap();
        let mut opts = SimOptions::new(300, 42);
        opts.workers = Some(1);
        let a = sim.run(&opts).unwrap();
        opts.workers = Some(3);
        let b = sim.run(&opts).unwrap();
        assert_eq!(trials_csv(&a), trials_csv(&b));
    }

    #[test]
    fn coverage_is_monotone() {
        let sim = Simulator::new(&Scenario::default(), PointingMode::Exact).unwrap();
        let trials = sim.run(&SimOptions::new(2000, 7)).unwrap();
        let grid: Vec<f64> = (-10..=40).step_by(2).map(f64::from).collect();
        let c = coverage_from_trials(&trials, &grid);
        assert!(c.is_nonincreasing());
        let low = coverage_from_trials(&trials, &[-100.0]);
        assert!(low.values[0] > 0.999);
    }

    #[test]
    fn too_few_trials_rejected() {
        assert!(estimate_coverage(&Scenario::default(), &[0.0], &SimOptions::new(10, 1)).is_err());
    }
}
