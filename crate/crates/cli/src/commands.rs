use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use hysim_core::benchmarks::nav::{self, NavInstance, Verdict};
use hysim_core::benchmarks::oscillator::{self, OscillatorParams};
use hysim_core::benchmarks::{self, Scenario, BUILTIN_NAMES};
use hysim_core::io::{read_control_csv, write_trajectory_csv, SystemFile};
use hysim_core::metric::rho_hat;
use hysim_core::simulator::{
    convergence_study, execute_exact, fit_loglog_slope, orbital_stability_probe, ExactConfig,
    StudySpec,
};
use hysim_core::{relax, ControlSignal, Integrator, ModeId, SimConfig, Termination, Trajectory};

use crate::manifest::RunManifest;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FALSIFIED: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;
pub const EXIT_NOT_COMPLETED: u8 = 4;

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
#[group(required = true, multiple = false)]
pub struct SystemArgs {
    /// Built-in system name.
    #[arg(long)]
    pub system: Option<String>,
    /// JSON system description.
    #[arg(long)]
    pub system_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SystemArgs,
    /// Step size.
    #[arg(long, default_value_t = 1e-2)]
    pub h: f64,
    /// Relaxation width.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    /// Horizon; defaults to the scenario's own.
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long, default_value = "midpoint")]
    pub integrator: Integrator,
    /// Piecewise-constant control as CSV (time, then one column per input).
    #[arg(long)]
    pub control: Option<PathBuf>,
    /// Transition budget.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_transitions: usize,
    /// Radius of an orbital-stability probe around the initial condition.
    #[arg(long)]
    pub perturb: Option<f64>,
    /// Perturbed runs of the probe.
    #[arg(long, default_value_t = 8)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub source: SystemArgs,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
    pub h: Vec<f64>,
    /// Comma-separated relaxation widths.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3])]
    pub eps: Vec<f64>,
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long, default_value = "midpoint")]
    pub integrator: Integrator,
    /// Add the PS scheme error at every step size (oscillator systems only).
    #[arg(long)]
    pub ps: bool,
    /// Guard samples per edge for the quotient distance.
    #[arg(long, default_value_t = 16)]
    pub n_g: usize,
    /// Evaluation times for the quotient distance.
    #[arg(long, default_value_t = 400)]
    pub grid: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct VerifyNavArgs {
    /// Built-in instance (nav-a, nav-b, nav-c) or a JSON instance file.
    #[arg(long)]
    pub instance: String,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-1)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long = "T", default_value_t = 30.0)]
    pub t_end: f64,
    #[arg(long, default_value = "midpoint")]
    pub integrator: Integrator,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn load_scenario(src: &SystemArgs) -> anyhow::Result<Scenario> {
    match (&src.system, &src.system_file) {
        (Some(name), _) => benchmarks::builtin(name)?.ok_or_else(|| {
            anyhow!("unknown system '{name}'; built-in systems: {}", BUILTIN_NAMES.join(", "))
        }),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file = SystemFile::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            let system = Arc::new(file.build()?);
            let mode = ModeId(file.initial_mode);
            system.check_mode(mode)?;
            let x0 = file
                .initial_state
                .clone()
                .ok_or_else(|| anyhow!("{} has no initial_state", path.display()))?;
            let control = ControlSignal::constant(system.control_midpoint(), system.control_range().to_vec())?;
            Ok(Scenario {
                system,
                mode,
                x0,
                control,
                horizon: 10.0,
            })
        }
        (None, None) => bail!("one of --system or --system-file is required"),
    }
}

/// Oscillator parameters of a built-in oscillator scenario.
fn oscillator_params(src: &SystemArgs) -> Option<OscillatorParams> {
    match src.system.as_deref()? {
        "oscillator-ex1" => Some(OscillatorParams::example1()),
        "oscillator-ex2" => Some(OscillatorParams::example2()),
        "oscillator-zeno" => Some(OscillatorParams::zeno()),
        _ => None,
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    termination: &'a Termination,
    stats: &'a hysim_core::simulator::SimStats,
    zeno: &'a Option<hysim_core::simulator::ZenoEstimate>,
    end_time: Option<f64>,
}

pub fn simulate(a: &SimulateArgs) -> anyhow::Result<u8> {
    let sc = load_scenario(&a.source)?;
    let t_end = a.t_end.unwrap_or(sc.horizon);
    let mut cfg = SimConfig::new(a.h, a.eps, t_end).integrator(a.integrator);
    cfg.max_transitions = a.max_transitions;
    cfg.validate()?;
    let control = match &a.control {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            read_control_csv(f, sc.system.control_range().to_vec())?
        }
        None => sc.control.clone(),
    };
    let rsys = relax(sc.system.clone(), a.eps)?;
    let res = hysim_core::simulate(&rsys, sc.mode, &sc.x0, &control, &cfg)?;

    prepare_out(&a.out)?;
    let mut outputs = vec!["trajectory.csv", "result.json"];
    let mut w = create(&a.out, "trajectory.csv")?;
    write_trajectory_csv(&mut w, &res.trajectory)?;
    w.flush()?;
    write_json(
        &a.out,
        "result.json",
        &SimulateSummary {
            termination: &res.termination,
            stats: &res.stats,
            zeno: &res.zeno,
            end_time: res.trajectory.end_time(),
        },
    )?;
    if let Some(delta) = a.perturb {
        let probe = orbital_stability_probe(&rsys, sc.mode, &sc.x0, &control, &cfg, delta, a.trials, a.seed)?;
        write_json(&a.out, "probe.json", &probe)?;
        outputs.push("probe.json");
    }
    RunManifest::new("simulate", a, &outputs)?.write(&a.out)?;

    eprintln!(
        "{}: {:?} at t = {} after {} transitions",
        a.source.system.as_deref().unwrap_or("system file"),
        res.termination,
        res.trajectory.end_time().unwrap_or(0.0),
        res.stats.transitions
    );
    Ok(match res.termination {
        Termination::HorizonReached | Termination::BoundaryStop { .. } => EXIT_OK,
        _ => EXIT_NOT_COMPLETED,
    })
}

/// Samples of the analytic solution dense enough for the quotient distance.
const REFERENCE_SAMPLES: usize = 20_000;

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

#[derive(Serialize)]
struct ConvergeSummary {
    slope_h: Option<f64>,
    slope_eps: Option<f64>,
    ps_slope_h: Option<f64>,
    rows: usize,
}

pub fn converge(a: &ConvergeArgs) -> anyhow::Result<u8> {
    if a.h.is_empty() || a.eps.is_empty() {
        bail!("need at least one --h and one --eps value");
    }
    let sc = load_scenario(&a.source)?;
    let t_end = a.t_end.unwrap_or(sc.horizon);
    let osc = oscillator_params(&a.source).map(|mut p| {
        p.t_max = t_end;
        p
    });
    if a.ps && osc.is_none() {
        bail!("--ps needs a built-in oscillator system");
    }
    let analytic = match &osc {
        Some(p) => Some(oscillator::oscillator_analytic(p, t_end, 1e-13)?),
        None => None,
    };
    // Without an analytic solution the reference is the event-located run.
    let reference: Trajectory = match &analytic {
        Some(sol) => sol.to_trajectory(REFERENCE_SAMPLES),
        None => {
            execute_exact(sc.system.clone(), sc.mode, &sc.x0, &sc.control, t_end, &ExactConfig::default())?
                .trajectory
        }
    };
    // An event-located run may stop at a boundary before the horizon.
    let t_cmp = match reference.end_time() {
        Some(end) if end < t_end => {
            eprintln!("warning: reference stops at t = {end}; comparing up to there");
            end
        }
        _ => t_end,
    };
    let position = analytic.as_ref().map(|sol| move |t: f64| sol.position(t));
    let position_ref = position.as_ref().map(|f| (0usize, f as &(dyn Fn(f64) -> f64 + Sync)));
    let spec = StudySpec {
        system: sc.system.clone(),
        mode: sc.mode,
        x0: sc.x0.clone(),
        control: sc.control.clone(),
        base: SimConfig::new(a.h[0], a.eps[0], t_cmp).integrator(a.integrator),
        reference: Some(&reference),
        position: position_ref,
        n_g: a.n_g,
        grid: a.grid,
    };
    spec.base.validate()?;
    let table = convergence_study(&spec, &a.h, &a.eps)?;

    let ps: Vec<Option<f64>> = match (&osc, &analytic, a.ps) {
        (Some(p), Some(sol), true) => a
            .h
            .iter()
            .map(|&h| -> anyhow::Result<Option<f64>> {
                Ok(Some(rho_hat(&oscillator::ps_method(p, h)?, |t| sol.position(t))?))
            })
            .collect::<anyhow::Result<_>>()?,
        _ => vec![None; a.h.len()],
    };
    let ps_of = |h: f64| a.h.iter().position(|&x| x == h).and_then(|i| ps[i]);

    prepare_out(&a.out)?;
    let mut w = create(&a.out, "convergence.csv")?;
    let mut header = "h,eps,rho_eps,rho_hat".to_string();
    if a.ps {
        header.push_str(",ps_rho_hat");
    }
    writeln!(w, "{header},steps,transitions")?;
    for r in &table.rows {
        let mut line = format!("{},{},{},{}", r.h, r.eps, fmt_opt(r.rho_eps), fmt_opt(r.rho_hat));
        if a.ps {
            line.push(',');
            line.push_str(&fmt_opt(ps_of(r.h)));
        }
        writeln!(w, "{line},{},{}", r.steps, r.transitions)?;
    }
    w.flush()?;

    let mut t = create(&a.out, "timing.csv")?;
    writeln!(t, "h,eps,wall_time")?;
    for r in &table.rows {
        writeln!(t, "{},{},{}", r.h, r.eps, r.wall_time)?;
    }
    t.flush()?;

    let ps_slope_h = if a.ps {
        let (hs, es): (Vec<f64>, Vec<f64>) = a.h.iter().zip(&ps).filter_map(|(&h, e)| e.map(|e| (h, e))).unzip();
        fit_loglog_slope(&hs, &es)
    } else {
        None
    };
    write_json(
        &a.out,
        "summary.json",
        &ConvergeSummary {
            slope_h: table.slope_h,
            slope_eps: table.slope_eps,
            ps_slope_h,
            rows: table.rows.len(),
        },
    )?;
    RunManifest::new("converge", a, &["convergence.csv", "timing.csv", "summary.json"])?.write(&a.out)?;
    eprintln!(
        "{} rows; slope in h {}, slope in eps {}",
        table.rows.len(),
        fmt_opt(table.slope_h),
        fmt_opt(table.slope_eps)
    );
    Ok(EXIT_OK)
}

fn load_instance(spec: &str) -> anyhow::Result<NavInstance> {
    if let Some(inst) = NavInstance::builtin(spec) {
        return Ok(inst);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("'{spec}' is neither a built-in instance (nav-a, nav-b, nav-c) nor a file");
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let inst: NavInstance = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    inst.cells()?;
    Ok(inst)
}

pub fn verify_nav(a: &VerifyNavArgs) -> anyhow::Result<u8> {
    let inst = load_instance(&a.instance)?;
    if a.samples == 0 {
        bail!("--samples must be positive");
    }
    let cfg = SimConfig::new(a.h, a.eps, a.t_end).integrator(a.integrator);
    cfg.validate()?;
    let report = nav::verify_nav(&inst, a.samples, &cfg)?;
    prepare_out(&a.out)?;
    write_json(&a.out, "report.json", &report)?;
    RunManifest::new("verify-nav", a, &["report.json"])?.write(&a.out)?;
    eprintln!(
        "{}: {} samples, {} reached the goal, {} hit the obstacle",
        report.instance,
        report.samples,
        report.goal_hits(),
        report.obstacle_hits()
    );
    Ok(match report.verdict {
        Verdict::Verified => {
            eprintln!("verified");
            EXIT_OK
        }
        Verdict::Falsified { .. } => {
            eprintln!("falsified");
            EXIT_FALSIFIED
        }
        Verdict::Inconclusive { .. } => {
            eprintln!("inconclusive");
            EXIT_INCONCLUSIVE
        }
    })
}

pub fn rerun(path: &Path, out: Option<PathBuf>) -> anyhow::Result<u8> {
    let m = RunManifest::read(path)?;
    if m.tool_version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, running {}",
            m.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let params = m.parameters.clone();
    match m.command.as_str() {
        "simulate" => {
            let mut a: SimulateArgs = serde_json::from_value(params)?;
            if let Some(o) = out {
                a.out = o;
            }
            simulate(&a)
        }
        "converge" => {
            let mut a: ConvergeArgs = serde_json::from_value(params)?;
            if let Some(o) = out {
                a.out = o;
            }
            converge(&a)
        }
        "verify-nav" => {
            let mut a: VerifyNavArgs = serde_json::from_value(params)?;
            if let Some(o) = out {
                a.out = o;
            }
            verify_nav(&a)
        }
        other => bail!("manifest records unknown command '{other}'"),
    }
}
