//! Command-line interface: construction, simulation, collision
//! experiments, and the validation suites.
//!
//! Exit codes are a stable contract: 0 success, 1 validation failure,
//! 2 invalid spec, 3 singular termination, 4 collision-experiment
//! failure. Set CURVED_RNBP_LOG={error|info|debug} for diagnostics.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::dynamics::ProjectedState;
use crate::equilibria::{omega_squared, residual_check, OmegaSign, PolygonConfig};
use crate::error::{Error, Result};
use crate::geometry::{conformal_factor, project, PlanePoint, SpaceSign};
use crate::integrate::{
    collision_experiment, simulate_primaries, simulate_restricted, ChartPolicy,
    IntegratorSettings, PrimaryTrajectory, Termination, Trajectory,
};
use crate::regularization::Chart;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INVALID_SPEC: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;
pub const EXIT_COLLISION_FAILED: i32 = 4;

#[derive(Parser)]
#[command(
    name = "curved-rnbp",
    about = "Restricted (n+1)-body problem on S^2 and H^2: polygonal relative \
             equilibria and collision regularization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Angular velocity of the polygon relative equilibrium
    Omega(SpecArgs),
    /// Integrate the full n-body polygon and check rigidity
    SimulatePrimaries(SimulateArgs),
    /// Integrate the massless particle in the rotating frame
    Simulate(SimulateArgs),
    /// Aim the particle at a primary and traverse the collision
    Collision(CollisionArgs),
    /// Run the invariant suites of every module
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// s2 (sphere) or h2 (hyperbolic plane)
    #[arg(long)]
    space: Option<SpaceSign>,
    /// number of primaries (>= 2)
    #[arg(long)]
    n: Option<usize>,
    /// polygon radius in the rotation plane
    #[arg(long)]
    r: Option<f64>,
    /// rotation sense: plus or minus
    #[arg(long)]
    omega_sign: Option<String>,
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// physical integration time
    #[arg(long)]
    tmax: Option<f64>,
    /// absolute and relative tolerance of the adaptive integrator
    #[arg(long)]
    tol: Option<f64>,
    /// identity | local:K | global | auto (restricted runs only)
    #[arg(long)]
    chart: Option<String>,
    /// CSV trajectory output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// initial state u v p_u p_v (restricted runs only)
    #[arg(long, num_args = 4, value_names = ["U", "V", "PU", "PV"])]
    state: Option<Vec<f64>>,
}

#[derive(Args)]
struct CollisionArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// 1-based index of the target primary
    #[arg(long)]
    k: Option<usize>,
    /// initial distance from the primary
    #[arg(long)]
    offset: Option<f64>,
    /// initial speed toward the primary (0 = released at inertial rest)
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// force a chart; `identity` documents the unregularized failure
    #[arg(long)]
    chart: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// seed of the sampled checks
    #[arg(long)]
    seed: Option<u64>,
    /// fault injection: scale Omega in the equilibrium checks
    #[arg(long, hide = true, default_value_t = 1.0)]
    perturb_omega: f64,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// JSON mirror of the run specification; any field may be omitted.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileSpec {
    space: Option<String>,
    n: Option<usize>,
    r: Option<f64>,
    omega_sign: Option<String>,
    tmax: Option<f64>,
    tol: Option<f64>,
    chart: Option<String>,
    out: Option<String>,
    seed: Option<u64>,
    k: Option<usize>,
    offset: Option<f64>,
    speed: Option<f64>,
    initial_state: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq)]
enum ChartChoice {
    Identity,
    Local(usize),
    Global,
    Auto,
}

impl FromStr for ChartChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ChartChoice::Identity),
            "global" => Ok(ChartChoice::Global),
            "auto" => Ok(ChartChoice::Auto),
            other => {
                if let Some(k) = other.strip_prefix("local:") {
                    let k: usize = k
                        .parse()
                        .map_err(|_| Error::Domain(format!("bad chart index in '{other}'")))?;
                    if k == 0 {
                        return Err(Error::Domain("chart indices are 1-based".into()));
                    }
                    Ok(ChartChoice::Local(k - 1))
                } else {
                    Err(Error::Domain(format!(
                        "unknown chart '{other}' (identity | local:K | global | auto)"
                    )))
                }
            }
        }
    }
}

fn load_file_spec(path: &Option<PathBuf>) -> Result<FileSpec> {
    match path {
        None => Ok(FileSpec::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Domain(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Domain(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn parse_sign(s: &str) -> Result<OmegaSign> {
    match s {
        "+" | "plus" => Ok(OmegaSign::Positive),
        "-" | "minus" => Ok(OmegaSign::Negative),
        other => Err(Error::Domain(format!("bad omega sign '{other}'"))),
    }
}

fn resolve_config(args: &SpecArgs, file: &FileSpec) -> Result<PolygonConfig> {
    let space = match (&args.space, &file.space) {
        (Some(s), _) => *s,
        (None, Some(s)) => s.parse()?,
        (None, None) => SpaceSign::Sphere,
    };
    let n = args.n.or(file.n).unwrap_or(3);
    let r = args.r.or(file.r).unwrap_or(0.5);
    let sign = match (&args.omega_sign, &file.omega_sign) {
        (Some(s), _) => parse_sign(s)?,
        (None, Some(s)) => parse_sign(s)?,
        (None, None) => OmegaSign::Positive,
    };
    PolygonConfig::new(space, n, r, sign)
}

fn settings_with(tol: Option<f64>, file: &FileSpec) -> Result<IntegratorSettings> {
    let mut settings = IntegratorSettings::default();
    if let Some(t) = tol.or(file.tol) {
        settings.abs_tol = t;
        settings.rel_tol = t;
    }
    settings.validate()?;
    Ok(settings)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &PathBuf) -> Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path)
        .map_err(|e| Error::Domain(format!("cannot create {}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "t,s,chart,u,v,p_u,p_v,H,Hhat").map_err(io_err)?;
    Ok(w)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Domain(format!("write failed: {e}"))
}

fn write_restricted_csv(path: &PathBuf, traj: &Trajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    for s in &traj.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt(s.t),
            fmt(s.s),
            s.chart.label(),
            fmt(s.state.u),
            fmt(s.state.v),
            fmt(s.state.p_u),
            fmt(s.state.p_v),
            fmt(s.h),
            s.hhat.map(fmt).unwrap_or_default(),
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn write_primaries_csv(
    config: &PolygonConfig,
    path: &PathBuf,
    traj: &PrimaryTrajectory,
) -> Result<()> {
    // one row per body per sample, in body order; positions are the
    // stereographic projections and p = lambda * (udot, vdot)
    let space = config.space();
    let mut w = csv_writer(path)?;
    for s in &traj.samples {
        for b in &s.bodies {
            let p = project(space, &b.q)?;
            let [x, _, z] = b.q.coords();
            let d = 1.0 + z;
            let du = (b.qdot[0] * d - x * b.qdot[2]) / (d * d);
            let dv = (b.qdot[1] * d - b.q.coords()[1] * b.qdot[2]) / (d * d);
            let lambda = conformal_factor(space, &p)?;
            writeln!(
                w,
                "{},{},identity,{},{},{},{},{},",
                fmt(s.t),
                fmt(s.t),
                fmt(p.u),
                fmt(p.v),
                fmt(lambda * du),
                fmt(lambda * dv),
                fmt(s.energy),
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

fn termination_exit(t: Termination) -> i32 {
    match t {
        Termination::Completed => EXIT_OK,
        _ => EXIT_SINGULAR,
    }
}

fn cmd_omega(args: &SpecArgs) -> Result<i32> {
    let file = load_file_spec(&args.config)?;
    let config = resolve_config(args, &file)?;
    let report = json!({
        "space": config.space().to_string(),
        "n": config.n(),
        "r": config.r(),
        "omega_squared": omega_squared(config.space(), config.n(), config.r())?,
        "omega": config.omega(),
        "residual": residual_check(&config),
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(EXIT_OK)
}

fn cmd_simulate_primaries(args: &SimulateArgs) -> Result<i32> {
    let file = load_file_spec(&args.spec.config)?;
    let config = resolve_config(&args.spec, &file)?;
    let settings = settings_with(args.tol, &file)?;
    let t_max = args.tmax.or(file.tmax).unwrap_or(10.0);
    log::info!("integrating {} primaries to t = {t_max}", config.n());
    let traj = simulate_primaries(&config, t_max, &settings)?;
    let out = args.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));
    if let Some(path) = &out {
        write_primaries_csv(&config, path, &traj)?;
    }
    let e0 = traj.samples[0].energy;
    let summary = json!({
        "command": "simulate-primaries",
        "termination": traj.termination,
        "message": traj.message,
        "samples": traj.samples.len(),
        "bodies": config.n(),
        "rigid_deviation": crate::integrate::rigid_rotation_deviation(&config, &traj)?,
        "energy_drift": traj.samples.iter().map(|s| (s.energy - e0).abs()).fold(0.0, f64::max),
        "csv": out.as_ref().map(|p| p.display().to_string()),
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(termination_exit(traj.termination))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let file = load_file_spec(&args.spec.config)?;
    let config = resolve_config(&args.spec, &file)?;
    let settings = settings_with(args.tol, &file)?;
    let t_max = args.tmax.or(file.tmax).unwrap_or(10.0);
    let state = match (&args.state, &file.initial_state) {
        (Some(v), _) => [v[0], v[1], v[2], v[3]],
        (None, Some(v)) => *v,
        (None, None) => [0.02, 0.01, 0.0, 0.0],
    };
    let s0 = ProjectedState::new(state[0], state[1], state[2], state[3]);
    let choice = match (&args.chart, &file.chart) {
        (Some(c), _) => c.parse::<ChartChoice>()?,
        (None, Some(c)) => c.parse::<ChartChoice>()?,
        (None, None) => ChartChoice::Auto,
    };
    let policy = match choice {
        ChartChoice::Identity => ChartPolicy::Fixed(Chart::Identity),
        ChartChoice::Local(k) => {
            if k >= config.n() {
                return Err(Error::Domain(format!(
                    "chart local:{} out of range for n = {}",
                    k + 1,
                    config.n()
                )));
            }
            ChartPolicy::Fixed(Chart::local(k))
        }
        ChartChoice::Global => ChartPolicy::Fixed(Chart::global(&config)),
        ChartChoice::Auto => ChartPolicy::Auto,
    };
    log::info!("restricted run to t = {t_max} with policy {policy:?}");
    let traj = simulate_restricted(&config, &s0, t_max, &policy, &settings)?;
    let out = args.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));
    if let Some(path) = &out {
        write_restricted_csv(path, &traj)?;
    }
    let summary = json!({
        "command": "simulate",
        "termination": traj.termination,
        "message": traj.message,
        "samples": traj.samples.len(),
        "switches": traj.switches,
        "max_switch_jump": traj.max_switch_jump,
        "energy_constant": traj.energy_constant,
        "energy_drift": traj.energy_drift(),
        "csv": out.as_ref().map(|p| p.display().to_string()),
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(termination_exit(traj.termination))
}

fn cmd_collision(args: &CollisionArgs) -> Result<i32> {
    let file = load_file_spec(&args.spec.config)?;
    let config = resolve_config(&args.spec, &file)?;
    let settings = settings_with(args.tol, &file)?;
    let k1 = args.k.or(file.k).unwrap_or(1);
    if k1 == 0 || k1 > config.n() {
        return Err(Error::Domain(format!(
            "primary index {k1} out of range (1..={})",
            config.n()
        )));
    }
    let k = k1 - 1;
    let offset = args.offset.or(file.offset).unwrap_or(0.1);
    let speed = args.speed.or(file.speed).unwrap_or(1.0);

    let forced_identity = matches!(
        args.chart.as_deref().map(ChartChoice::from_str),
        Some(Ok(ChartChoice::Identity))
    );
    if forced_identity {
        // documents the unregularized failure: the control run alone
        let wk = crate::equilibria::projected_primaries(&config).w[k];
        let radial = wk / wk.norm();
        let z0 = wk + offset * radial;
        let vel = -speed * radial;
        let s0 = crate::dynamics::velocity_to_momentum(
            &config,
            &PlanePoint::from_complex(z0),
            vel.re,
            vel.im,
        )?;
        let traj = simulate_restricted(
            &config,
            &s0,
            50.0,
            &ChartPolicy::Fixed(Chart::Identity),
            &settings,
        )?;
        let min_d = traj
            .samples
            .iter()
            .map(|s| (s.state.complex().z - wk).norm())
            .fold(f64::INFINITY, f64::min);
        let report = json!({
            "command": "collision",
            "chart": "identity",
            "traversed": false,
            "control_termination": traj.termination,
            "control_min_distance": min_d,
        });
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
        return Ok(EXIT_COLLISION_FAILED);
    }

    log::info!("collision experiment at primary {k1}, offset {offset}, speed {speed}");
    let report = collision_experiment(&config, k, offset, speed, &settings)?;
    let ok = report.traversed && report.control_termination == Termination::StepUnderflow;
    let mut doc = serde_json::to_value(&report).unwrap();
    doc["command"] = json!("collision");
    doc["k"] = json!(k1);
    println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    Ok(if ok { EXIT_OK } else { EXIT_COLLISION_FAILED })
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let file = load_file_spec(&args.config)?;
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let results = crate::checks::run_all(seed, args.perturb_omega);
    let passed = results.iter().all(|r| r.pass);
    let report = json!({
        "command": "validate",
        "seed": seed,
        "perturb_omega": args.perturb_omega,
        "passed": passed,
        "checks": results,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(if passed { EXIT_OK } else { EXIT_VALIDATION })
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("CURVED_RNBP_LOG", "error"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Omega(a) => cmd_omega(a),
        Command::SimulatePrimaries(a) => cmd_simulate_primaries(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Collision(a) => cmd_collision(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Domain(_) | Error::Ambiguity(_) => EXIT_INVALID_SPEC,
                Error::Collision(_) | Error::Antipodal(_) | Error::Singularity(_)
                | Error::StepUnderflow { .. } => EXIT_SINGULAR,
                Error::Convergence(_) => EXIT_COLLISION_FAILED,
            }
        }
    }
}
