//! Discrete approximation of relaxed executions, plus event-located exact
//! and relaxed executions used as oracles.

mod exact;
mod study;
mod zeno;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::integrators::{Integrator, IntegratorError};
use crate::metric::MetricError;
use crate::model::{ControlSignal, EdgeId, HybridSystem, ModeId};
use crate::relaxation::{Classification, RelaxedPoint, RelaxedSystem, StripHit};
use crate::trajectory::{Trajectory, TrajectoryError, TrajectoryMeta, TransitionRecord};

pub use exact::{execute_exact, relaxed_execute, ExactConfig};
pub use study::{
    convergence_study, fit_loglog_slope, orbital_stability_probe, ConvergenceRow,
    ConvergenceTable, ProbeReport, StudySpec,
};
pub use zeno::{detect_zeno, ZenoEstimate, ZENO_WINDOW};

/// Distance inside the domain below which a constraint counts as touched
/// when deciding whether an exhausted halving sequence is a legitimate stop.
const BOUNDARY_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial condition is not in the domain of {mode}")]
    InvalidInitial { mode: ModeId },
    #[error(
        "step halving exhausted at t = {t} in {mode} without reaching an outward-pointing \
         non-guard boundary"
    )]
    DegenerateGeometry { t: f64, mode: ModeId },
    #[error(
        "constraint {constraint} of {mode} is grazed tangentially near t = {t}: no sign change \
         brackets the event, and the execution is not orbitally stable there"
    )]
    Tangential { t: f64, mode: ModeId, constraint: usize },
}

/// Which strip wins when a step lands past several overlapping guards.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
}

impl TieBreak {
    fn pick<T>(self, mut hits: Vec<T>) -> Option<T> {
        match self {
            TieBreak::LowestIndex => (!hits.is_empty()).then(|| hits.swap_remove(0)),
            TieBreak::HighestIndex => hits.pop(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub h: f64,
    pub eps: f64,
    pub t_end: f64,
    pub n_max: u32,
    pub max_transitions: usize,
    pub tie_break: TieBreak,
    pub integrator: Integrator,
}

impl SimConfig {
    pub fn new(h: f64, eps: f64, t_end: f64) -> Self {
        Self {
            h,
            eps,
            t_end,
            n_max: 40,
            max_transitions: 1_000_000,
            tie_break: TieBreak::LowestIndex,
            integrator: Integrator::Midpoint,
        }
    }

    pub fn integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [("h", self.h), ("eps", self.eps), ("T", self.t_end)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_max < 1 {
            return Err(SimError::Config("n_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    HorizonReached,
    /// Halving exhausted on a non-guard boundary with outward field.
    BoundaryStop { mode: ModeId, constraint: usize },
    TransitionBudgetExhausted,
    /// Budget exhausted while the transition times accumulate.
    ZenoSuspected(ZenoEstimate),
    /// The caller's monitor asked to stop.
    MonitorStop,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub steps: usize,
    pub halvings: usize,
    pub max_halvings: u32,
    pub transitions: usize,
    /// `(t_k, n)` for every accepted step that needed `n > 0` halvings.
    pub halved_steps: Vec<(f64, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trajectory: Trajectory,
    pub termination: Termination,
    pub stats: SimStats,
    pub zeno: Option<ZenoEstimate>,
}

impl SimResult {
    fn finish(trajectory: Trajectory, termination: Termination, stats: SimStats) -> Self {
        let zeno = detect_zeno(&trajectory);
        let termination = match (termination, &zeno) {
            (Termination::TransitionBudgetExhausted, Some(z)) => Termination::ZenoSuspected(z.clone()),
            (other, _) => other,
        };
        Self {
            trajectory,
            termination,
            stats,
            zeno,
        }
    }
}

/// Discrete approximation from `(j0, p0)` under control `u`.
pub fn simulate(
    rsys: &RelaxedSystem,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    simulate_with_monitor(rsys, j0, p0, u, cfg, |_, _| false)
}

pub(crate) fn check_start(
    sys: &HybridSystem,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
) -> Result<(), SimError> {
    sys.check_mode(j0)?;
    sys.check_dim(j0, p0)?;
    if u.dim() != sys.control_dim() {
        return Err(SimError::Config(format!(
            "control has dimension {}, system expects {}",
            u.dim(),
            sys.control_dim()
        )));
    }
    if !sys.domain_contains(j0, p0)? {
        return Err(SimError::InvalidInitial { mode: j0 });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A constraint near which the field points outward and no guard is active.
pub(crate) fn outward_boundary(
    sys: &HybridSystem,
    j: ModeId,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Option<usize> {
    let f = sys.field(j, t, x, u);
    let domain = &sys.mode(j).domain;
    (0..domain.constraints.len()).find(|&i| {
        let c = &domain.constraints[i];
        c.eval(x) > -BOUNDARY_SLACK
            && dot(&c.gradient(x), &f) > 0.0
            && !sys
                .guards_on_constraint(j, i)
                .any(|e| (e.guard.activation)(t, x, u))
    })
}

enum Traversal {
    Continue { t: f64, mode: ModeId, x: Vec<f64> },
    Stop(Termination),
}

/// As [`simulate`]; `monitor(t, point)` runs on every new sample and stops
/// the run when it returns `true`.
pub fn simulate_with_monitor<M>(
    rsys: &RelaxedSystem,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
    cfg: &SimConfig,
    mut monitor: M,
) -> Result<SimResult, SimError>
where
    M: FnMut(f64, &RelaxedPoint) -> bool,
{
    cfg.validate()?;
    if rsys.eps() != cfg.eps {
        return Err(SimError::Config(format!(
            "relaxation width {} does not match configured eps {}",
            rsys.eps(),
            cfg.eps
        )));
    }
    let sys = rsys.base();
    check_start(sys, j0, p0, u)?;

    let mut traj = Trajectory::new(TrajectoryMeta {
        source: format!("simulate:{}", sys.name),
        eps: Some(cfg.eps),
        h: Some(cfg.h),
        integrator: Some(cfg.integrator.name().to_string()),
    });
    let mut stats = SimStats::default();
    let (mut j, mut x, mut t) = (j0, p0.to_vec(), 0.0);
    traj.push(t, RelaxedPoint::interior(j, x.clone()))?;
    let slack = 1e-12 * cfg.t_end.max(1.0);

    let termination = loop {
        if t >= cfg.t_end - slack {
            break Termination::HorizonReached;
        }
        if stats.transitions >= cfg.max_transitions {
            break Termination::TransitionBudgetExhausted;
        }
        let uk = u.eval(t).to_vec();
        let field = &sys.mode(j).field.f;
        let full = cfg.h.min(cfg.t_end - t);
        let mut accepted = None;
        for n in 0..=cfg.n_max {
            let hn = full / 2f64.powi(n as i32);
            let y = cfg.integrator.step(|s, z, v, out| field(s, z, v, out), t, &x, &uk, hn)?;
            let cls = rsys.classify(j, t, &y, &uk)?;
            if !cls.is_outside() {
                accepted = Some((n, hn, y, cls));
                break;
            }
        }
        let Some((n, hn, y, cls)) = accepted else {
            match outward_boundary(sys, j, t, &x, &uk) {
                Some(constraint) => break Termination::BoundaryStop { mode: j, constraint },
                None => return Err(SimError::DegenerateGeometry { t, mode: j }),
            }
        };
        stats.steps += 1;
        stats.halvings += n as usize;
        stats.max_halvings = stats.max_halvings.max(n);
        if n > 0 {
            stats.halved_steps.push((t, n));
        }
        let t1 = t + hn;
        match cls {
            Classification::Interior => {
                let p = RelaxedPoint::interior(j, y.clone());
                let stop = monitor(t1, &p);
                traj.push(t1, p)?;
                t = t1;
                x = y;
                if stop {
                    break Termination::MonitorStop;
                }
            }
            Classification::Strip(hits) => {
                let hit = choose_strip(rsys, u, cfg, hits, t1)?;
                let p = RelaxedPoint::Strip {
                    edge: hit.edge,
                    zeta: hit.zeta.clone(),
                    tau: hit.tau,
                };
                let stop = monitor(t1, &p);
                traj.push(t1, p)?;
                if stop {
                    break Termination::MonitorStop;
                }
                match traverse(rsys, u, cfg, &mut traj, &mut stats, &mut monitor, hit, t1)? {
                    Traversal::Continue { t: tn, mode, x: xn } => {
                        t = tn;
                        j = mode;
                        x = xn;
                    }
                    Traversal::Stop(term) => break term,
                }
            }
            Classification::Outside => unreachable!("outside steps are rejected"),
        }
    };
    Ok(SimResult::finish(traj, termination, stats))
}

/// Tie-break among overlapping strips. A candidate whose reset image would
/// leave the relaxed target domain is passed over when another one is
/// admissible.
fn choose_strip(
    rsys: &RelaxedSystem,
    u: &ControlSignal,
    cfg: &SimConfig,
    mut hits: Vec<StripHit>,
    t_in: f64,
) -> Result<StripHit, SimError> {
    if cfg.tie_break == TieBreak::HighestIndex {
        hits.reverse();
    }
    if hits.len() > 1 {
        if let Some(k) = hits.iter().position(|h| {
            let t_r = t_in + (cfg.eps - h.tau).max(0.0);
            relaxed_reset(rsys, h.edge, &h.zeta, t_r, u).is_ok()
        }) {
            return Ok(hits.swap_remove(k));
        }
    }
    Ok(hits.swap_remove(0))
}

/// Crosses the strip of `hit` entered at `t_in`, applies the reset, and
/// follows any further strips the reset image lands in.
#[allow(clippy::too_many_arguments)]
fn traverse<M>(
    rsys: &RelaxedSystem,
    u: &ControlSignal,
    cfg: &SimConfig,
    traj: &mut Trajectory,
    stats: &mut SimStats,
    monitor: &mut M,
    mut hit: StripHit,
    mut t_in: f64,
) -> Result<Traversal, SimError>
where
    M: FnMut(f64, &RelaxedPoint) -> bool,
{
    let sys = rsys.base();
    let eps = cfg.eps;
    let slack = 1e-12 * cfg.t_end.max(1.0);
    loop {
        let t_r = t_in + (eps - hit.tau).max(0.0);
        if t_r > cfg.t_end + slack {
            if cfg.t_end > t_in {
                traj.push(
                    cfg.t_end,
                    RelaxedPoint::Strip {
                        edge: hit.edge,
                        zeta: hit.zeta.clone(),
                        tau: hit.tau + (cfg.t_end - t_in),
                    },
                )?;
            }
            return Ok(Traversal::Stop(Termination::HorizonReached));
        }
        let pre = RelaxedPoint::Strip {
            edge: hit.edge,
            zeta: hit.zeta.clone(),
            tau: eps,
        };
        if t_r > t_in {
            traj.push(t_r, pre.clone())?;
        } else {
            traj.replace_last(pre.clone());
        }
        let (target, image, chained) = relaxed_reset(rsys, hit.edge, &hit.zeta, t_r, u)?;
        let post = match &chained {
            None => RelaxedPoint::interior(target, image.clone()),
            Some(h2) => RelaxedPoint::Strip {
                edge: h2.edge,
                zeta: h2.zeta.clone(),
                tau: h2.tau,
            },
        };
        stats.transitions += 1;
        traj.push_transition(TransitionRecord {
            t: t_r,
            edge: hit.edge,
            pre,
            post: post.clone(),
            dwell: t_r - t_in,
        });
        let stop = monitor(t_r, &post);
        traj.replace_last(post);
        if stop {
            return Ok(Traversal::Stop(Termination::MonitorStop));
        }
        match chained {
            None => {
                return Ok(Traversal::Continue {
                    t: t_r,
                    mode: target,
                    x: image,
                })
            }
            Some(h2) => {
                if stats.transitions >= cfg.max_transitions {
                    return Ok(Traversal::Stop(Termination::TransitionBudgetExhausted));
                }
                debug_assert_eq!(sys.edge(h2.edge).source, target);
                hit = h2;
                t_in = t_r;
            }
        }
    }
}

/// Reset of the far strip side `(zeta, eps)`. The image is classified in the
/// relaxed target domain, so it may already sit inside (or on) another
/// strip. Contact with a guard only chains when the target field points out
/// of the domain there.
fn relaxed_reset(
    rsys: &RelaxedSystem,
    e: EdgeId,
    zeta: &[f64],
    t: f64,
    u: &ControlSignal,
) -> Result<(ModeId, Vec<f64>, Option<StripHit>), SimError> {
    let sys = rsys.base();
    let edge = sys.edge(e);
    let image = (edge.reset.map)(zeta);
    sys.check_dim(edge.target, &image)?;
    let ur = u.eval(t);
    let chained = match rsys.classify_entry(edge.target, t, &image, ur)? {
        Classification::Interior => None,
        Classification::Outside => {
            return Err(ModelError::ResetOutsideDomain {
                edge: e,
                violation: sys.mode(edge.target).domain.max_violation(&image),
            }
            .into())
        }
        Classification::Strip(hits) => {
            let constraints = &sys.mode(edge.target).domain.constraints;
            let f = sys.field(edge.target, t, &image, ur);
            let hits: Vec<StripHit> = hits
                .into_iter()
                .filter(|h| {
                    let c = &constraints[sys.edge(h.edge).guard.constraint];
                    c.eval(&image) > sys.tol.domain || dot(&c.gradient(&image), &f) > 0.0
                })
                .collect();
            rsys_pick(hits)
        }
    };
    Ok((edge.target, image, chained))
}

fn rsys_pick(hits: Vec<StripHit>) -> Option<StripHit> {
    // Chained strips always follow the lowest edge index: the image of a
    // reset is deterministic and the overlapping choice rejoins after the
    // traversal.
    TieBreak::LowestIndex.pick(hits)
}
