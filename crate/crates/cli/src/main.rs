mod figures;
mod manifest;
mod table;
mod validate;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thzcov::analytic::{AnalyticEngine, QuadratureSpec, RhoConvention};
use thzcov::antenna::PointingMode;
use thzcov::curve::{parse_grid, CoverageCurve};
use thzcov::params::{load_scenario, Scenario};
use thzcov::simulate::{coverage_from_trials, trials_csv, BlockageMode, SimOptions, Simulator};

use figures::{FigureId, FigureRequest};
use manifest::{read_manifest, write_sidecar, Recorder, Sweep};

/// Coverage of indoor THz networks: analytic engine, Monte Carlo simulator,
/// cross-validation and figure datasets.
#[derive(Debug, Parser)]
#[command(name = "thzcov", version, about)]
struct Cli {
    /// Worker threads for the engines; results do not depend on it.
    #[arg(long, global = true, value_name = "W")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coverage curve from the analytic engine.
    Analytic(AnalyticArgs),
    /// Coverage curve from Monte Carlo simulation.
    Simulate(SimulateArgs),
    /// Run both engines and compare them pointwise.
    Compare(CompareArgs),
    /// Paired analytic and simulated datasets for one figure.
    Figure(FigureArgs),
    /// Quick self-checks of both engines.
    Validate(ValidateArgs),
    /// Write one geometric realization as JSON.
    DumpScene(DumpSceneArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
struct ScenarioArgs {
    /// Scenario file (TOML key-value); omitted keys take reference values.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Override one scenario key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
struct OutputArgs {
    /// Output file; writes `<PATH>.manifest.json` beside it. Stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Clone, Args)]
struct GridArgs {
    /// SINR thresholds in dB as start:stop:step.
    #[arg(long, value_name = "A:B:STEP", default_value = "-10:40:2", allow_hyphen_values = true)]
    gamma_grid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BlockageArg {
    Thinned,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PointingArg {
    Exact,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RhoArg {
    Derived,
    AsPrinted,
}

#[derive(Debug, Clone, Args)]
struct SimArgs {
    /// Monte Carlo trials; defaults to the scenario's `trials`.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    #[arg(long, value_enum, default_value = "thinned")]
    blockage: BlockageArg,
    /// Pointing-loss model of the simulator.
    #[arg(long, value_enum, default_value = "exact")]
    pointing: PointingArg,
}

#[derive(Debug, Clone, Args)]
struct AnalyticArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Fading threshold convention; `as-printed` is for comparison only.
    #[arg(long, value_enum, default_value = "derived")]
    rho: RhoArg,
}

#[derive(Debug, Clone, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Master seed of the per-trial random streams.
    #[arg(long, value_name = "S")]
    seed: u64,
    /// Also write per-trial records as CSV.
    #[arg(long, value_name = "PATH")]
    dump_trials: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Report file (JSON by default). Stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Master seed; required unless both curves are supplied.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Largest allowed |analytic - simulated| per threshold.
    #[arg(long, default_value_t = 0.03)]
    tol: f64,
    /// Use a saved analytic curve (JSON) instead of computing one.
    #[arg(long, value_name = "PATH")]
    analytic_curve: Option<PathBuf>,
    /// Use a saved simulated curve (JSON) instead of simulating.
    #[arg(long, value_name = "PATH")]
    simulated_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct FigureArgs {
    #[arg(value_enum)]
    id: FigureId,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_name = "S")]
    seed: u64,
    /// Thresholds of coverage-vs-threshold, dB.
    #[arg(long, value_name = "A:B:STEP", default_value = "-10:40:2", allow_hyphen_values = true)]
    gamma_grid: String,
    /// Pointing error standard deviations in degrees, comma separated.
    /// Defaults: 1.5 for hpe-pdf, 0,0.5,1.5 otherwise.
    #[arg(long, value_delimiter = ',', value_name = "DEG,..")]
    sigmas: Vec<f64>,
    /// Histogram bins of hpe-pdf over [0, 1].
    #[arg(long, default_value_t = 50)]
    bins: usize,
}

#[derive(Debug, Clone, Args)]
struct ValidateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_name = "S", default_value_t = 7)]
    seed: u64,
    /// Draws per sampling check.
    #[arg(long, value_name = "N", default_value_t = 20_000)]
    trials: usize,
    /// JSON report file. Stdout summary only when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct DumpSceneArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_name = "S")]
    seed: u64,
    /// Trial index whose random stream builds the scene.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct ReplayArgs {
    /// Manifest written beside an earlier output.
    manifest: PathBuf,
    /// Where to write the regenerated output.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

impl From<BlockageArg> for BlockageMode {
    fn from(b: BlockageArg) -> Self {
        match b {
            BlockageArg::Thinned => BlockageMode::Thinned,
            BlockageArg::Geometric => BlockageMode::Geometric,
        }
    }
}

impl From<PointingArg> for PointingMode {
    fn from(p: PointingArg) -> Self {
        match p {
            PointingArg::Exact => PointingMode::Exact,
            PointingArg::Gaussian => PointingMode::Gaussian,
        }
    }
}

/// Scenario resolution; a replay pins the scenario recorded in its manifest.
struct Session {
    pinned: Option<Scenario>,
    recorder: Recorder,
}

impl Session {
    fn scenario(&self, args: &ScenarioArgs) -> Result<Scenario> {
        if let Some(s) = &self.pinned {
            return Ok(s.clone());
        }
        let mut s = match &args.scenario {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading scenario {}", path.display()))?;
                load_scenario(&text).with_context(|| format!("scenario {}", path.display()))?
            }
            None => Scenario::default(),
        };
        for kv in &args.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            s = s.with_override(k.trim(), v.trim()).with_context(|| format!("--set {kv}"))?;
        }
        Ok(s)
    }
}

fn sim_options(s: &Scenario, sim: &SimArgs, seed: u64) -> SimOptions {
    SimOptions {
        trials: sim.trials.unwrap_or(s.trials),
        seed,
        blockage: sim.blockage.into(),
        pointing: sim.pointing.into(),
        workers: None,
    }
}

fn write_output(out: Option<&Path>, data: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, data).with_context(|| format!("writing {}", path.display())),
        None => match std::io::stdout().write_all(data.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn curve_text(curve: &CoverageCurve, format: Format) -> Result<String> {
    Ok(match format {
        Format::Csv => curve.to_csv(),
        Format::Json => serde_json::to_string_pretty(curve)? + "\n",
    })
}

fn run_analytic(ctx: &Session, a: &AnalyticArgs) -> Result<ExitCode> {
    let s = ctx.scenario(&a.scenario)?;
    let grid = parse_grid(&a.grid.gamma_grid)?;
    let spec = QuadratureSpec {
        rho: match a.rho {
            RhoArg::Derived => RhoConvention::Derived,
            RhoArg::AsPrinted => RhoConvention::AsPrinted,
        },
        ..QuadratureSpec::default()
    };
    let curve = AnalyticEngine::with_spec(&s, spec.clone())?
        .coverage_curve(&grid)
        .context("analytic engine")?;
    let out = a.output.out.as_deref();
    write_output(out, &curve_text(&curve, a.output.format)?)?;
    if let Some(path) = out {
        let m = ctx.recorder.finish(
            "analytic",
            &s,
            &["analytic"],
            Sweep::new("gamma_db", grid),
            None,
            None,
            json!({ "quadrature": spec }),
            &[path.to_path_buf()],
        );
        write_sidecar(path, &m)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(ctx: &Session, a: &SimulateArgs) -> Result<ExitCode> {
    let s = ctx.scenario(&a.scenario)?;
    let grid = parse_grid(&a.grid.gamma_grid)?;
    let opts = sim_options(&s, &a.sim, a.seed);
    if opts.trials < 1000 {
        bail!("--trials must be at least 1000, got {}", opts.trials);
    }
    let sim = Simulator::new(&s, opts.pointing)?;
    let trials = sim.run(&opts).context("Monte Carlo engine")?;
    let mut curve = coverage_from_trials(&trials, &grid);
    curve.metadata = json!({
        "trials": opts.trials,
        "seed": opts.seed,
        "blockage": opts.blockage,
        "pointing": opts.pointing,
        "sim_radius": sim.constants.sim_radius,
        "interferer_gains": "independent beam-hit draws from the cone-model pmf",
        "no_los_trials": trials.iter().filter(|t| t.d0.is_none()).count(),
    });
    let out = a.output.out.as_deref();
    write_output(out, &curve_text(&curve, a.output.format)?)?;
    let mut outputs: Vec<PathBuf> = out.map(Path::to_path_buf).into_iter().collect();
    if let Some(path) = &a.dump_trials {
        write_output(Some(path), &trials_csv(&trials))?;
        outputs.push(path.clone());
    }
    let m = ctx.recorder.finish(
        "simulate",
        &s,
        &["monte-carlo"],
        Sweep::new("gamma_db", grid),
        Some(opts.seed),
        Some(opts.trials),
        json!({ "blockage": opts.blockage, "pointing": opts.pointing }),
        &outputs,
    );
    for path in &outputs {
        write_sidecar(path, &m)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComparePoint {
    gamma_db: f64,
    analytic: f64,
    simulated: f64,
    ci_halfwidth: Option<f64>,
    abs_diff: f64,
    pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompareReport {
    tol: f64,
    pass: bool,
    max_abs_diff: f64,
    points: Vec<ComparePoint>,
}

fn load_curve(path: &Path) -> Result<CoverageCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a JSON coverage curve", path.display()))
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()))
}

/// Pointwise comparison; a point passes when the difference is strictly
/// below `tol`, so `tol = 0` always fails.
fn compare_curves(a: &CoverageCurve, m: &CoverageCurve, tol: f64) -> Result<CompareReport> {
    if !same_grid(&a.gamma_db, &m.gamma_db) {
        bail!(
            "threshold grids differ: analytic has {} points, simulated has {}",
            a.gamma_db.len(),
            m.gamma_db.len()
        );
    }
    let points: Vec<ComparePoint> = (0..a.gamma_db.len())
        .map(|i| {
            let d = (a.values[i] - m.values[i]).abs();
            ComparePoint {
                gamma_db: a.gamma_db[i],
                analytic: a.values[i],
                simulated: m.values[i],
                ci_halfwidth: m.ci_halfwidth.as_ref().map(|c| c[i]),
                abs_diff: d,
                pass: d < tol,
            }
        })
        .collect();
    Ok(CompareReport {
        tol,
        pass: points.iter().all(|p| p.pass),
        max_abs_diff: points.iter().map(|p| p.abs_diff).fold(0.0, f64::max),
        points,
    })
}

fn report_csv(r: &CompareReport) -> String {
    let mut t = table::Table::new(&["gamma_db", "analytic", "simulated", "ci_halfwidth", "abs_diff", "pass"]);
    for p in &r.points {
        t.push(vec![
            p.gamma_db.into(),
            p.analytic.into(),
            p.simulated.into(),
            p.ci_halfwidth.into(),
            p.abs_diff.into(),
            if p.pass { "true" } else { "false" }.into(),
        ]);
    }
    t.to_csv()
}

fn run_compare(ctx: &Session, a: &CompareArgs) -> Result<ExitCode> {
    if a.tol.is_nan() || a.tol < 0.0 {
        bail!("--tol must be >= 0");
    }
    let s = ctx.scenario(&a.scenario)?;
    let grid = parse_grid(&a.grid.gamma_grid)?;
    let analytic = match &a.analytic_curve {
        Some(p) => load_curve(p)?,
        None => AnalyticEngine::new(&s)?.coverage_curve(&grid).context("analytic engine")?,
    };
    let seed = a.seed;
    let simulated = match &a.simulated_curve {
        Some(p) => load_curve(p)?,
        None => {
            let seed = seed.context("--seed is required when the simulation runs")?;
            let opts = sim_options(&s, &a.sim, seed);
            thzcov::simulate::estimate_coverage(&s, &grid, &opts).context("Monte Carlo engine")?
        }
    };
    for (curve, name) in [(&analytic, "analytic"), (&simulated, "simulated")] {
        if !same_grid(&curve.gamma_db, &grid) {
            bail!("{name} curve grid does not match --gamma-grid {}", a.grid.gamma_grid);
        }
    }
    let report = compare_curves(&analytic, &simulated, a.tol)?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => report_csv(&report),
    };
    write_output(a.out.as_deref(), &text)?;
    if let Some(path) = &a.out {
        let m = ctx.recorder.finish(
            "compare",
            &s,
            &["analytic", "monte-carlo"],
            Sweep::new("gamma_db", grid),
            seed,
            Some(a.sim.trials.unwrap_or(s.trials)),
            json!({ "tol": a.tol, "quadrature": QuadratureSpec::default() }),
            std::slice::from_ref(path),
        );
        write_sidecar(path, &m)?;
    }
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "compare: {} of {} points exceed tol {} (max diff {:.4})",
            report.points.iter().filter(|p| !p.pass).count(),
            report.points.len(),
            a.tol,
            report.max_abs_diff
        );
        Ok(ExitCode::from(2))
    }
}

fn run_figure(ctx: &Session, a: &FigureArgs) -> Result<ExitCode> {
    let s = ctx.scenario(&a.scenario)?;
    let grid = parse_grid(&a.gamma_grid)?;
    let sigmas = if a.sigmas.is_empty() {
        figures::default_sigmas(a.id)
    } else {
        a.sigmas.clone()
    };
    let sim = sim_options(&s, &a.sim, a.seed);
    if a.id != FigureId::HpePdf && sim.trials < 1000 {
        bail!("--trials must be at least 1000, got {}", sim.trials);
    }
    let req = FigureRequest {
        scenario: &s,
        sigmas: &sigmas,
        gamma_db: &grid,
        bins: a.bins,
        sim: sim.clone(),
    };
    let table = figures::build(a.id, &req)?;
    let text = match a.output.format {
        Format::Csv => table.to_csv(),
        Format::Json => serde_json::to_string_pretty(&table.to_json())? + "\n",
    };
    let out = a.output.out.as_deref();
    write_output(out, &text)?;
    if let Some(path) = out {
        let (engines, sweep): (&[&str], Sweep) = match a.id {
            FigureId::HpePdf => (&["pointing-loss-law", "monte-carlo"], Sweep::new("h_pe", vec![])),
            FigureId::CoverageVsThreshold => (&["analytic", "monte-carlo"], Sweep::new("gamma_db", grid)),
            FigureId::CoverageVsNa => (
                &["analytic", "monte-carlo"],
                Sweep::new("N_A", figures::NA_SWEEP.iter().map(|&n| n as f64).collect()),
            ),
        };
        let m = ctx.recorder.finish(
            &format!("figure {}", a.id.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()),
            &s,
            engines,
            sweep,
            Some(a.seed),
            Some(sim.trials),
            json!({ "sigma_theta_deg": sigmas, "bins": a.bins, "pointing": sim.pointing, "blockage": sim.blockage }),
            &[path.to_path_buf()],
        );
        write_sidecar(path, &m)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_validate(ctx: &Session, a: &ValidateArgs) -> Result<ExitCode> {
    let s = ctx.scenario(&a.scenario)?;
    let report = validate::run(&s, a.seed, a.trials)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(path) = &a.out {
        write_output(Some(path), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        let m = ctx.recorder.finish(
            "validate",
            &s,
            &["analytic", "monte-carlo"],
            Sweep::new("check", vec![]),
            Some(a.seed),
            Some(a.trials),
            json!({}),
            std::slice::from_ref(path),
        );
        write_sidecar(path, &m)?;
    }
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_dump_scene(ctx: &Session, a: &DumpSceneArgs) -> Result<ExitCode> {
    let s = ctx.scenario(&a.scenario)?;
    let sim = Simulator::new(&s, PointingMode::Exact)?;
    let scene = sim.scene(a.seed, a.trial);
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&scene)? + "\n"))?;
    if let Some(path) = &a.out {
        let m = ctx.recorder.finish(
            "dump-scene",
            &s,
            &["geometry"],
            Sweep::new("trial", vec![a.trial as f64]),
            Some(a.seed),
            None,
            json!({}),
            std::slice::from_ref(path),
        );
        write_sidecar(path, &m)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Replace the value of `--out` in recorded arguments.
fn retarget(args: &[String], out: &Path) -> Vec<String> {
    let out = out.to_string_lossy().into_owned();
    let mut v = Vec::with_capacity(args.len() + 2);
    let mut found = false;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
            v.push(a.clone());
            v.push(out.clone());
            found = true;
        } else if a.starts_with("--out=") {
            v.push(format!("--out={out}"));
            found = true;
        } else {
            v.push(a.clone());
        }
    }
    if !found {
        v.push("--out".into());
        v.push(out);
    }
    v
}

fn parse(args: &[String]) -> std::result::Result<Cli, clap::Error> {
    Cli::try_parse_from(std::iter::once("thzcov").chain(args.iter().map(String::as_str)))
}

fn execute(cli: Cli, args: Vec<String>, pinned: Option<Scenario>) -> Result<ExitCode> {
    if let Some(w) = cli.workers {
        // A replay reuses the pool built for the outer invocation.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global();
    }
    let session = Session {
        pinned,
        recorder: Recorder::start(args),
    };
    match &cli.command {
        Command::Analytic(a) => run_analytic(&session, a),
        Command::Simulate(a) => run_simulate(&session, a),
        Command::Compare(a) => run_compare(&session, a),
        Command::Figure(a) => run_figure(&session, a),
        Command::Validate(a) => run_validate(&session, a),
        Command::DumpScene(a) => run_dump_scene(&session, a),
        Command::Replay(r) => {
            let m = read_manifest(&r.manifest)?;
            let args = retarget(&m.args, &r.out);
            let inner = parse(&args).context("manifest arguments no longer parse")?;
            if matches!(inner.command, Command::Replay(_)) {
                bail!("manifest records a replay");
            }
            execute(inner, args, Some(m.scenario))
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = parse(&args).unwrap_or_else(|e| e.exit());
    match execute(cli, args, None) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
