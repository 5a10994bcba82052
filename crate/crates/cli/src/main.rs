//! `escna`: simulate, average, compare, fit, sweep and verify from the command line.
//!
//! Exit status is 0 on success, 2 for usage and validation errors and 1 for
//! failures at run time. Every run writes a JSON manifest next to its main
//! output (or to `--manifest`), including failed runs.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use escna_core::avgverify::{
    verify_uniform_limits, verify_weak_limits, LimitReport, WeakLimitTarget,
};
use escna_core::defaults;
use escna_core::esc::{
    averaged_system, averaged_system_conjecture, averaged_system_theorem1, epsilon_bound_evenpow,
    epsilon_bound_m0, equilibrium_boundary_uu, ControllerConfig, EscController, Phase,
};
use escna_core::expr::{parse_in, Bindings, Scope};
use escna_core::integrate::{compare, integrate_average, integrate_closed_loop, Status, Trajectory};
use escna_core::model::{builtin, deadzone_saturation, load_system, NonAffineSystem};
use escna_core::oddpoly::fit_odd_polynomial;
use escna_core::sweep::{
    boundary_agreement, run_sweep, summarize, write_boundary_csv, write_grid_csv, Region, SweepSpec,
};

#[derive(Parser, Serialize)]
#[command(name = "escna", version, about = "Extremum seeking control of systems non-affine in control")]
struct Cli {
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Integrate the closed loop and write `t,x1..xn,u`.
    Simulate(SimulateArgs),
    /// Integrate the closed-form averaged system and write `t,x1..xn`.
    Average(AverageArgs),
    /// Sup-norm and terminal distance between two trajectory CSVs.
    Compare(CompareArgs),
    /// Least-squares odd polynomial fit of a scalar nonlinearity.
    Fit(FitArgs),
    /// Stability-region sweep over two parameters.
    Sweep(SweepArgs),
    /// Uniform or weak limit checks of the dither terms.
    VerifyLimits(VerifyArgs),
    /// Analytic stability boundaries.
    Boundary(BoundaryArgs),
}

#[derive(Args, Serialize)]
struct SystemArgs {
    /// Built-in system: example1, example1_approx, uu, evenpow, nonlfinal.
    #[arg(long)]
    builtin: Option<String>,
    /// JSON system description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Even-channel strength for uu, evenpow and nonlfinal.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    epsilon: f64,
}

#[derive(Args, Serialize)]
struct ControllerArgs {
    /// JSON controller description; individual flags take precedence.
    #[arg(long)]
    controller: Option<PathBuf>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    /// Potential V(x,t) driving the dither phase.
    #[arg(long = "V")]
    v: Option<String>,
    /// Use the system output y in the phase instead of V.
    #[arg(long)]
    output_feedback: bool,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    controller: ControllerArgs,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
    /// Horizon.
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long, default_value_t = defaults::STEPS_PER_PERIOD)]
    steps_per_period: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Construction {
    /// Theorem-1 construction when its preconditions hold, conjectured form otherwise.
    Auto,
    Theorem1,
    Conjecture,
}

#[derive(Args, Serialize)]
struct AverageArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    controller: ControllerArgs,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
    #[arg(long = "T")]
    horizon: f64,
    /// RK4 steps over the horizon.
    #[arg(long, default_value_t = defaults::AVERAGE_STEPS)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Construction::Auto)]
    construction: Construction,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum NamedNonlinearity {
    DeadzoneSaturation,
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// Named nonlinearity to fit.
    #[arg(long, value_enum, conflicts_with = "h")]
    nonlinearity: Option<NamedNonlinearity>,
    /// Expression in u to fit.
    #[arg(long)]
    h: Option<String>,
    /// Highest power index m (degree 2m+1).
    #[arg(long)]
    degree: usize,
    /// Fit on [-U, U].
    #[arg(long, default_value_t = 2.0)]
    half_width: f64,
    #[arg(long, default_value_t = 401)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Preset {
    Uu,
    Evenpow,
    Nonlfinal,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum RegionArg {
    All,
    LargerAlphaOmegaHalf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// Start from a built-in sweep.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// JSON sweep description; individual flags take precedence.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    /// Points per axis.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    theta_conv: Option<f64>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    steps_per_period: Option<usize>,
    #[arg(long)]
    x_star: Option<f64>,
    /// Relative margin around the boundary excluded from the agreement score.
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    #[arg(long, value_enum, default_value_t = RegionArg::All)]
    region: RegionArg,
    #[arg(long, default_value_t = defaults::JOBS)]
    jobs: usize,
    /// Directory receiving grid.csv, boundary.csv and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LimitKindArg {
    Uniform,
    Weak,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TargetArg {
    Coefficient,
    FrequencyScaled,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    kind: LimitKindArg,
    #[arg(long)]
    m: u32,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Increasing frequencies, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
    omegas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = TargetArg::Coefficient)]
    target: TargetArg,
    #[arg(long, default_value_t = defaults::QUADRATURE_NODES_PER_PERIOD)]
    nodes_per_period: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BoundarySystem {
    Uu,
    Evenpow,
}

#[derive(Args, Serialize)]
struct BoundaryArgs {
    #[arg(long, value_enum)]
    system: BoundarySystem,
    #[arg(long, default_value_t = 100.0)]
    k: f64,
    /// Controller index (default: 2 for uu, 1 for evenpow).
    #[arg(long)]
    m: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long)]
    omega: f64,
    /// Dither strength (evenpow only).
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// Equilibrium bound (uu only).
    #[arg(long, default_value_t = defaults::THETA_CONV)]
    x_star: f64,
    #[arg(long)]
    out: PathBuf,
}

/// How a run failed.
enum Failure {
    /// Bad flags, inputs or parameters: exit 2.
    Usage(anyhow::Error),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

type Outcome<T> = Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    params: serde_json::Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    results: BTreeMap<String, serde_json::Value>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Bookkeeping shared by all subcommands.
struct Run {
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    results: BTreeMap<String, serde_json::Value>,
}

impl Run {
    fn read_input(&mut self, path: &Path) -> Outcome<String> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))
            .map_err(usage)?;
        self.inputs.insert(
            path.display().to_string(),
            hex::encode(Sha256::digest(text.as_bytes())),
        );
        Ok(text)
    }

    fn create(&mut self, path: &Path) -> Outcome<BufWriter<File>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))
                .map_err(runtime)?;
        }
        let f = File::create(path)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(runtime)?;
        self.outputs.push(path.display().to_string());
        Ok(BufWriter::new(f))
    }

    fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Outcome<()> {
        let w = self.create(path)?;
        serde_json::to_writer_pretty(w, value).map_err(runtime)
    }

    fn result<T: Serialize>(&mut self, key: &str, value: T) {
        self.results
            .insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn load_system_from(run: &mut Run, args: &SystemArgs) -> Outcome<NonAffineSystem> {
    match (&args.builtin, &args.config) {
        (Some(name), cfg) => {
            if cfg.is_some() {
                warn("both --builtin and --config given; using --builtin");
            }
            builtin(name, args.epsilon).map_err(usage)
        }
        (None, Some(path)) => {
            let text = run.read_input(path)?;
            load_system(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(usage)
        }
        (None, None) => Err(usage(anyhow!("one of --builtin or --config is required"))),
    }
}

fn controller_from(run: &mut Run, args: &ControllerArgs, dim: usize) -> Outcome<EscController> {
    let mut cfg = match &args.controller {
        Some(path) => {
            let text = run.read_input(path)?;
            Some(
                serde_json::from_str::<ControllerConfig>(&text)
                    .with_context(|| format!("in {}", path.display()))
                    .map_err(usage)?,
            )
        }
        None => None,
    };
    let from_file = cfg.is_some();
    let take = |name: &str, flag: Option<f64>, slot: Option<&mut f64>| -> Outcome<f64> {
        match (flag, slot) {
            (Some(v), Some(s)) => {
                warn(&format!("--{name} overrides the controller file"));
                *s = v;
                Ok(v)
            }
            (Some(v), None) => Ok(v),
            (None, Some(s)) => Ok(*s),
            (None, None) => Err(usage(anyhow!("--{name} is required"))),
        }
    };
    let omega = take("omega", args.omega, cfg.as_mut().map(|c| &mut c.omega))?;
    let alpha = take("alpha", args.alpha, cfg.as_mut().map(|c| &mut c.alpha))?;
    let k = take("k", args.k, cfg.as_mut().map(|c| &mut c.k))?;
    let m = match (args.m, cfg.as_ref().map(|c| c.m)) {
        (Some(m), Some(_)) => {
            warn("--m overrides the controller file");
            m
        }
        (Some(m), None) | (None, Some(m)) => m,
        (None, None) => return Err(usage(anyhow!("--m is required"))),
    };
    let file_phase = cfg.as_ref().map(|c| (c.v.clone(), c.output_feedback));
    let phase = if args.output_feedback {
        Phase::Output
    } else if let Some(v) = &args.v {
        if from_file {
            warn("--V overrides the controller file");
        }
        Phase::Potential(
            parse_in(v, &Scope::state(dim))
                .with_context(|| format!("in --V {v:?}"))
                .map_err(usage)?,
        )
    } else {
        match file_phase {
            Some((_, true)) => Phase::Output,
            Some((Some(v), false)) => Phase::Potential(
                parse_in(&v, &Scope::state(dim))
                    .with_context(|| format!("in controller V {v:?}"))
                    .map_err(usage)?,
            ),
            _ => return Err(usage(anyhow!("one of --V or --output-feedback is required"))),
        }
    };
    EscController::new(m, alpha, omega, k, phase).map_err(usage)
}

fn check_x0(x0: &[f64], sys: &NonAffineSystem) -> Outcome<()> {
    if x0.len() != sys.dim {
        return Err(usage(anyhow!(
            "--x0 has {} entries but the system has dimension {}",
            x0.len(),
            sys.dim
        )));
    }
    Ok(())
}

fn simulate(run: &mut Run, a: &SimulateArgs) -> Outcome<()> {
    let sys = load_system_from(run, &a.system)?;
    let c = controller_from(run, &a.controller, sys.dim)?;
    check_x0(&a.x0, &sys)?;
    c.check_against(&sys).map_err(usage)?;
    let traj = integrate_closed_loop(&sys, &c, &a.x0, a.t0, a.horizon, a.steps_per_period)
        .map_err(runtime)?;
    if let Status::BlowUp { t } = traj.status {
        warn(&format!("state exceeded the blow-up cutoff at t = {t}"));
    }
    run.result("status", traj.status);
    run.result("amplitude", c.amplitude());
    run.result("dt", traj.meta.dt);
    run.result("final_state", traj.last_state());
    let w = run.create(&a.out)?;
    traj.write_csv(w).map_err(runtime)
}

fn average(run: &mut Run, a: &AverageArgs) -> Outcome<()> {
    let sys = load_system_from(run, &a.system)?;
    let c = controller_from(run, &a.controller, sys.dim)?;
    check_x0(&a.x0, &sys)?;
    let avg = match a.construction {
        Construction::Auto => averaged_system(&sys, &c),
        Construction::Theorem1 => averaged_system_theorem1(&sys, &c),
        Construction::Conjecture => averaged_system_conjecture(&sys, &c),
    }
    .map_err(usage)?;
    let traj = integrate_average(&avg, &a.x0, a.t0, a.horizon, a.steps, sys.blowup_cutoff)
        .map_err(runtime)?;
    run.result("provenance", avg.provenance);
    run.result("constants", &avg.constants);
    run.result(
        "field",
        avg.field.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
    );
    run.result("status", traj.status);
    run.result("final_state", traj.last_state());
    let w = run.create(&a.out)?;
    traj.write_csv(w).map_err(runtime)
}

fn read_trajectory(run: &mut Run, path: &Path) -> Outcome<Trajectory> {
    let text = run.read_input(path)?;
    Trajectory::read_csv(BufReader::new(text.as_bytes()))
        .with_context(|| format!("in {}", path.display()))
        .map_err(usage)
}

fn compare_cmd(run: &mut Run, a: &CompareArgs) -> Outcome<()> {
    let ta = read_trajectory(run, &a.a)?;
    let tb = read_trajectory(run, &a.b)?;
    let report = compare(&ta, &tb).map_err(usage)?;
    run.result("sup_error", report.sup_error);
    run.write_json(&a.out, &report)
}

#[derive(Serialize)]
struct FitReport {
    target: String,
    degree_index: usize,
    coeffs: Vec<f64>,
    half_width: f64,
    samples: usize,
    sup_error: f64,
}

fn fit(run: &mut Run, a: &FitArgs) -> Outcome<()> {
    let (target, fitted) = match (&a.nonlinearity, &a.h) {
        (Some(NamedNonlinearity::DeadzoneSaturation), _) => (
            "deadzone_saturation".to_string(),
            fit_odd_polynomial(deadzone_saturation, a.degree, a.half_width, a.samples),
        ),
        (None, Some(src)) => {
            let e = parse_in(src, &Scope::control())
                .with_context(|| format!("in --h {src:?}"))
                .map_err(usage)?;
            // probe once so that domain errors surface as usage errors
            for u in [-a.half_width, 0.0, a.half_width] {
                e.eval(&Bindings::new().u(u))
                    .with_context(|| format!("--h is not defined at u = {u}"))
                    .map_err(usage)?;
            }
            let h = |u: f64| e.eval(&Bindings::new().u(u)).unwrap_or(f64::NAN);
            (src.clone(), fit_odd_polynomial(h, a.degree, a.half_width, a.samples))
        }
        (None, None) => return Err(usage(anyhow!("one of --nonlinearity or --h is required"))),
    };
    let fitted = fitted.map_err(usage)?;
    let report = FitReport {
        target,
        degree_index: a.degree,
        coeffs: fitted.poly.coeffs().to_vec(),
        half_width: fitted.half_width,
        samples: fitted.samples,
        sup_error: fitted.sup_error,
    };
    run.result("coeffs", &report.coeffs);
    run.result("sup_error", report.sup_error);
    run.write_json(&a.out, &report)
}

fn sweep_cmd(run: &mut Run, a: &SweepArgs) -> Outcome<()> {
    let grid_default = a.grid.unwrap_or(defaults::GRID_SIZE);
    let mut spec = match (&a.spec, a.preset) {
        (Some(path), preset) => {
            if preset.is_some() {
                warn("both --spec and --preset given; using --spec");
            }
            let text = run.read_input(path)?;
            serde_json::from_str::<SweepSpec>(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(usage)?
        }
        (None, Some(Preset::Uu)) => SweepSpec::uu(a.m.unwrap_or(2), a.epsilon.unwrap_or(0.05), grid_default),
        (None, Some(Preset::Evenpow)) => SweepSpec::evenpow(a.m.unwrap_or(1), grid_default),
        (None, Some(Preset::Nonlfinal)) => SweepSpec::nonlfinal(a.m.unwrap_or(0), grid_default),
        (None, None) => return Err(usage(anyhow!("one of --preset or --spec is required"))),
    };
    let from_file = a.spec.is_some();
    let note = |name: &str| {
        if from_file {
            warn(&format!("--{name} overrides the sweep file"));
        }
    };
    if let Some(m) = a.m {
        note("m");
        spec.m = m;
    }
    if let Some(e) = a.epsilon {
        note("epsilon");
        spec.epsilon = e;
    }
    if let Some(v) = a.alpha {
        note("alpha");
        spec.alpha = v;
    }
    if let Some(v) = a.k {
        note("k");
        spec.k = v;
    }
    if let Some(g) = a.grid {
        note("grid");
        spec.axes[0].count = g;
        spec.axes[1].count = g;
    }
    if let Some(v) = a.horizon {
        note("T");
        spec.horizon = v;
    }
    if let Some(v) = a.theta_conv {
        note("theta-conv");
        spec.theta_conv = v;
    }
    if let Some(v) = a.cutoff {
        note("cutoff");
        spec.cutoff = v;
    }
    if let Some(v) = a.steps_per_period {
        note("steps-per-period");
        spec.steps_per_period = v;
    }
    if let Some(v) = a.x_star {
        note("x-star");
        spec.x_star = Some(v);
    }
    let grid = run_sweep(&spec, a.jobs).map_err(|e| match e {
        escna_core::sweep::SweepError::Io(_) | escna_core::sweep::SweepError::Pool(_) => runtime(e),
        other => usage(other),
    })?;
    let region = match a.region {
        RegionArg::All => Region::All,
        RegionArg::LargerAlphaOmegaHalf => Region::LargerAlphaOmegaHalf,
    };
    let agreement = match &grid.boundary {
        Some(_) => match boundary_agreement(&grid, a.margin, region) {
            Ok(s) => Some(s),
            Err(e) => {
                warn(&e.to_string());
                None
            }
        },
        None => None,
    };
    let w = run.create(&a.out_dir.join("grid.csv"))?;
    write_grid_csv(&grid, w).map_err(runtime)?;
    if grid.boundary.is_some() {
        let w = run.create(&a.out_dir.join("boundary.csv"))?;
        write_boundary_csv(&grid, w).map_err(runtime)?;
    }
    let summary = summarize(&grid, agreement);
    if let Some(s) = &summary.agreement {
        run.result("agreement", s.score);
    }
    run.write_json(&a.out_dir.join("summary.json"), &summary)
}

fn verify(run: &mut Run, a: &VerifyArgs) -> Outcome<()> {
    let report: LimitReport = match a.kind {
        LimitKindArg::Uniform => verify_uniform_limits(a.m, &a.omegas, a.alpha, a.nodes_per_period),
        LimitKindArg::Weak => {
            let target = match a.target {
                TargetArg::Coefficient => WeakLimitTarget::Coefficient,
                TargetArg::FrequencyScaled => WeakLimitTarget::FrequencyScaled,
            };
            verify_weak_limits(a.m, &a.omegas, a.alpha, target, a.nodes_per_period)
        }
    }
    .map_err(usage)?;
    run.result("passed", report.passed);
    run.result("failures", report.failures().count());
    run.write_json(&a.out, &report)
}

#[derive(Serialize)]
struct BoundaryReport {
    system: &'static str,
    parameter: &'static str,
    value: f64,
}

fn boundary_cmd(run: &mut Run, a: &BoundaryArgs) -> Outcome<()> {
    let report = match a.system {
        BoundarySystem::Uu => BoundaryReport {
            system: "uu",
            parameter: "alpha",
            value: equilibrium_boundary_uu(a.k, a.m.unwrap_or(2), a.epsilon, a.omega, a.x_star)
                .map_err(usage)?,
        },
        BoundarySystem::Evenpow => {
            let value = match a.m.unwrap_or(1) {
                0 => epsilon_bound_m0(a.alpha, a.omega),
                1 => epsilon_bound_evenpow(a.k, a.alpha, a.omega),
                m => return Err(usage(anyhow!("no epsilon bound for m = {m}; use 0 or 1"))),
            };
            BoundaryReport {
                system: "evenpow",
                parameter: "epsilon",
                value,
            }
        }
    };
    println!("{} boundary: {} = {:.16e}", report.system, report.parameter, report.value);
    run.result("value", report.value);
    run.write_json(&a.out, &report)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Average(_) => "average",
            Command::Compare(_) => "compare",
            Command::Fit(_) => "fit",
            Command::Sweep(_) => "sweep",
            Command::VerifyLimits(_) => "verify-limits",
            Command::Boundary(_) => "boundary",
        }
    }

    fn params(&self) -> serde_json::Value {
        let v = match self {
            Command::Simulate(a) => serde_json::to_value(a),
            Command::Average(a) => serde_json::to_value(a),
            Command::Compare(a) => serde_json::to_value(a),
            Command::Fit(a) => serde_json::to_value(a),
            Command::Sweep(a) => serde_json::to_value(a),
            Command::VerifyLimits(a) => serde_json::to_value(a),
            Command::Boundary(a) => serde_json::to_value(a),
        };
        v.unwrap_or(serde_json::Value::Null)
    }

    /// Default manifest location, derived from the main output.
    fn manifest_path(&self) -> PathBuf {
        let with_suffix = |p: &Path| {
            let mut s = p.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        };
        match self {
            Command::Simulate(a) => with_suffix(&a.out),
            Command::Average(a) => with_suffix(&a.out),
            Command::Compare(a) => with_suffix(&a.out),
            Command::Fit(a) => with_suffix(&a.out),
            Command::Sweep(a) => a.out_dir.join("manifest.json"),
            Command::VerifyLimits(a) => with_suffix(&a.out),
            Command::Boundary(a) => with_suffix(&a.out),
        }
    }

    fn execute(&self, run: &mut Run) -> Outcome<()> {
        match self {
            Command::Simulate(a) => simulate(run, a),
            Command::Average(a) => average(run, a),
            Command::Compare(a) => compare_cmd(run, a),
            Command::Fit(a) => fit(run, a),
            Command::Sweep(a) => sweep_cmd(run, a),
            Command::VerifyLimits(a) => verify(run, a),
            Command::Boundary(a) => boundary_cmd(run, a),
        }
    }
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let mut run = Run {
        inputs: BTreeMap::new(),
        outputs: Vec::new(),
        results: BTreeMap::new(),
    };
    let outcome = cli.command.execute(&mut run);
    let (code, error) = match &outcome {
        Ok(()) => (ExitCode::SUCCESS, None),
        Err(Failure::Usage(e)) => (ExitCode::from(2), Some(format!("{e:#}"))),
        Err(Failure::Runtime(e)) => (ExitCode::from(1), Some(format!("{e:#}"))),
    };
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    let manifest = RunManifest {
        command: cli.command.name().into(),
        params: cli.command.params(),
        inputs: run.inputs,
        outputs: run.outputs,
        results: run.results,
        wall_time_s: start.elapsed().as_secs_f64(),
        error,
    };
    let path = cli.manifest.clone().unwrap_or_else(|| cli.command.manifest_path());
    if let Err(e) = write_manifest(&path, &manifest) {
        eprintln!("error: cannot write manifest: {e:#}");
        if outcome.is_ok() {
            return ExitCode::from(1);
        }
    }
    code
}
