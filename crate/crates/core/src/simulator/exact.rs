use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_start, outward_boundary, SimError, SimResult, SimStats, Termination, TieBreak};
use crate::integrators::Integrator;
use crate::model::{ControlSignal, EdgeId, HybridSystem, ModeId};
use crate::relaxation::{relax, RelaxedPoint, RelaxedSystem};
use crate::trajectory::{Trajectory, TrajectoryMeta, TransitionRecord};

/// Settings for event-located executions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    /// Fixed RK4 step between events.
    pub step: f64,
    /// Width of the final bisection bracket around an event.
    pub event_tol: f64,
    pub max_transitions: usize,
    pub tie_break: TieBreak,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            event_tol: 1e-12,
            max_transitions: 100_000,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

/// Execution with instantaneous transitions at bisected guard crossings.
pub fn execute_exact(
    sys: Arc<HybridSystem>,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
    t_end: f64,
    cfg: &ExactConfig,
) -> Result<SimResult, SimError> {
    // The width is irrelevant here: only the guard retractions are used.
    let rsys = relax(sys, 1.0)?;
    execute(&rsys, None, j0, p0, u, t_end, cfg)
}

/// Relaxed execution: transitions are located exactly, then the strip is
/// crossed at unit rate for `eps` before the reset.
pub fn relaxed_execute(
    rsys: &RelaxedSystem,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
    t_end: f64,
    cfg: &ExactConfig,
) -> Result<SimResult, SimError> {
    execute(rsys, Some(rsys.eps()), j0, p0, u, t_end, cfg)
}

fn rk4(sys: &HybridSystem, j: ModeId, t: f64, x: &[f64], u: &[f64], s: f64) -> Result<Vec<f64>, SimError> {
    let f = &sys.mode(j).field.f;
    Ok(Integrator::Rk4.step(|a, b, c, d| f(a, b, c, d), t, x, u, s)?)
}

fn push_or_replace(traj: &mut Trajectory, t: f64, p: RelaxedPoint) -> Result<(), SimError> {
    if traj.end_time().is_some_and(|last| t <= last) {
        traj.replace_last(p);
        Ok(())
    } else {
        Ok(traj.push(t, p)?)
    }
}

fn execute(
    rsys: &RelaxedSystem,
    dwell: Option<f64>,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
    t_end: f64,
    cfg: &ExactConfig,
) -> Result<SimResult, SimError> {
    let sys = rsys.base();
    if !(t_end > 0.0 && cfg.step > 0.0 && cfg.event_tol > 0.0) {
        return Err(SimError::Config("horizon, step and event tolerance must be positive".into()));
    }
    check_start(sys, j0, p0, u)?;
    let mut traj = Trajectory::new(TrajectoryMeta {
        source: format!(
            "{}:{}",
            if dwell.is_some() { "relaxed-execute" } else { "execute-exact" },
            sys.name
        ),
        eps: dwell,
        h: Some(cfg.step),
        integrator: Some(Integrator::Rk4.name().to_string()),
    });
    let mut stats = SimStats::default();
    let (mut j, mut x, mut t) = (j0, p0.to_vec(), 0.0);
    traj.push(t, RelaxedPoint::interior(j, x.clone()))?;
    let slack = 1e-12 * t_end.max(1.0);
    let first_substep = (1e3 * cfg.event_tol).min(cfg.step);
    let mut substep = cfg.step;

    let termination = loop {
        if t >= t_end - slack {
            break Termination::HorizonReached;
        }
        if stats.transitions >= cfg.max_transitions {
            break Termination::TransitionBudgetExhausted;
        }
        let uk = u.eval(t).to_vec();
        let s = substep.min(t_end - t);
        let y = rk4(sys, j, t, &x, &uk, s)?;
        stats.steps += 1;
        let constraints = &sys.mode(j).domain.constraints;

        // Earliest upward crossing over all constraints.
        let mut event: Option<(f64, Vec<usize>)> = None;
        for (i, c) in constraints.iter().enumerate() {
            let (cb, ca) = (c.eval(&x), c.eval(&y));
            let te = if ca > 0.0 && cb <= 0.0 {
                let (mut lo, mut hi) = (0.0, s);
                while hi - lo > cfg.event_tol {
                    let mid = 0.5 * (lo + hi);
                    if c.eval(&rk4(sys, j, t, &x, &uk, mid)?) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            } else if ca > 0.0 && ca > cb {
                // Started marginally outside through rounding and moving out.
                0.0
            } else {
                if cb <= 0.0 && ca <= 0.0 && c.eval(&rk4(sys, j, t, &x, &uk, 0.5 * s)?) > 0.0 {
                    return Err(SimError::Tangential {
                        t: t + 0.5 * s,
                        mode: j,
                        constraint: i,
                    });
                }
                continue;
            };
            match &mut event {
                Some((best, list)) if (te - *best).abs() <= cfg.event_tol => {
                    *best = best.min(te);
                    list.push(i);
                }
                Some((best, _)) if te > *best => {}
                _ => event = Some((te, vec![i])),
            }
        }

        let Some((te, crossed)) = event else {
            traj.push(t + s, RelaxedPoint::interior(j, y.clone()))?;
            t += s;
            x = y;
            substep = (2.0 * substep).min(cfg.step);
            continue;
        };

        let t_e = t + te;
        let x_e = if te > 0.0 { rk4(sys, j, t, &x, &uk, te)? } else { x.clone() };
        let mut candidates: Vec<(EdgeId, Vec<f64>)> = Vec::new();
        for &i in &crossed {
            for edge in sys.guards_on_constraint(j, i) {
                let (zeta, _) = rsys.strip_coordinates(edge.id, &x_e)?;
                if (edge.guard.activation)(t_e, &zeta, &uk) {
                    candidates.push((edge.id, zeta));
                }
            }
        }
        candidates.sort_by_key(|(e, _)| *e);
        let Some((e, zeta)) = cfg.tie_break.pick(candidates) else {
            push_or_replace(&mut traj, t_e, RelaxedPoint::interior(j, x_e.clone()))?;
            let constraint = outward_boundary(sys, j, t_e, &x_e, &uk).unwrap_or(crossed[0]);
            break Termination::BoundaryStop { mode: j, constraint };
        };

        let (target, image) = sys.apply_reset(e, &zeta)?;
        let post = RelaxedPoint::interior(target, image.clone());
        let (t_r, pre) = match dwell {
            None => (t_e, RelaxedPoint::interior(j, zeta.clone())),
            Some(eps) => {
                push_or_replace(
                    &mut traj,
                    t_e,
                    RelaxedPoint::Strip {
                        edge: e,
                        zeta: zeta.clone(),
                        tau: 0.0,
                    },
                )?;
                if t_e + eps > t_end + slack {
                    traj.push(
                        t_end,
                        RelaxedPoint::Strip {
                            edge: e,
                            zeta,
                            tau: t_end - t_e,
                        },
                    )?;
                    break Termination::HorizonReached;
                }
                let pre = RelaxedPoint::Strip {
                    edge: e,
                    zeta: zeta.clone(),
                    tau: eps,
                };
                traj.push(t_e + eps, pre.clone())?;
                (t_e + eps, pre)
            }
        };
        push_or_replace(&mut traj, t_r, post.clone())?;
        traj.push_transition(TransitionRecord {
            t: t_r,
            edge: e,
            pre,
            post,
            dwell: dwell.unwrap_or(0.0),
        });
        stats.transitions += 1;
        t = t_r;
        j = target;
        x = image;
        substep = first_substep;
    };
    Ok(SimResult::finish(traj, termination, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::oscillator::{oscillator_analytic, oscillator_system, OscillatorParams, CONTROL_RANGE};
    use crate::model::{Constraint, DomainSpec, VectorFieldSpec};

    fn zero_u() -> ControlSignal {
        ControlSignal::zero(vec![CONTROL_RANGE]).unwrap()
    }

    #[test]
    fn first_impact_matches_closed_form() {
        let p = OscillatorParams::example1();
        let sys = Arc::new(oscillator_system(&p).unwrap());
        let res = execute_exact(sys, ModeId(0), &p.initial_state(), &zero_u(), 3.0, &ExactConfig::default()).unwrap();
        let analytic = oscillator_analytic(&p, 3.0, 1e-12).unwrap();
        let t_exact = res.trajectory.transitions()[0].t;
        let t_ref = analytic.impacts()[0].t;
        assert!((t_exact - t_ref).abs() < 1e-9, "{t_exact} vs {t_ref}");
    }

    #[test]
    fn impact_count_agrees_with_analytic() {
        let p = OscillatorParams::example1();
        let sys = Arc::new(oscillator_system(&p).unwrap());
        let horizon = p.t_max;
        let res = execute_exact(sys, ModeId(0), &p.initial_state(), &zero_u(), horizon, &ExactConfig::default())
            .unwrap();
        let analytic = oscillator_analytic(&p, horizon, 1e-12).unwrap();
        let times = res.trajectory.transition_times();
        assert_eq!(times.len(), analytic.impacts().len());
        for (a, b) in times.iter().zip(analytic.impacts()) {
            assert!((a - b.t).abs() < 1e-6, "{a} vs {}", b.t);
        }
    }

    #[test]
    fn no_guards_reduces_to_rk4() {
        let mut b = HybridSystem::builder("decay");
        b.add_mode(
            "a",
            DomainSpec::new(1, vec![(-2.0, 2.0)]).constraint(Constraint::upper(1, 0, 2.0)),
            VectorFieldSpec::new(|_, x, _, out| out[0] = -x[0]),
        );
        let sys = Arc::new(b.build().unwrap());
        let u = ControlSignal::zero(vec![]).unwrap();
        let cfg = ExactConfig {
            step: 0.1,
            ..ExactConfig::default()
        };
        let res = execute_exact(sys.clone(), ModeId(0), &[1.0], &u, 1.0, &cfg).unwrap();
        let mut x = vec![1.0];
        for k in 0..10 {
            x = rk4(&sys, ModeId(0), k as f64 * 0.1, &x, &[], 0.1).unwrap();
        }
        let last = res.trajectory.last_point().unwrap().coords()[0];
        assert!((last - x[0]).abs() < 1e-14);
        let rsys = relax(sys, 1e-2).unwrap();
        let relaxed = relaxed_execute(&rsys, ModeId(0), &[1.0], &u, 1.0, &cfg).unwrap();
        assert_eq!(relaxed.trajectory.samples(), res.trajectory.samples());
    }

    #[test]
    fn relaxed_is_delayed_exact_after_one_transition() {
        let p = OscillatorParams::example1();
        let sys = Arc::new(oscillator_system(&p).unwrap());
        let analytic = oscillator_analytic(&p, 3.0, 1e-12).unwrap();
        let t1 = analytic.impacts()[0].t;
        let t2 = analytic.impacts()[1].t;
        let horizon = 0.5 * (t1 + t2);
        let eps = 1e-2;
        let cfg = ExactConfig::default();
        let ex = execute_exact(sys.clone(), ModeId(0), &p.initial_state(), &zero_u(), horizon, &cfg).unwrap();
        let rsys = relax(sys, eps).unwrap();
        let rel = relaxed_execute(&rsys, ModeId(0), &p.initial_state(), &zero_u(), horizon, &cfg).unwrap();
        assert_eq!(ex.trajectory.transitions().len(), 1);
        assert_eq!(rel.trajectory.transitions().len(), 1);
        let (te, tr) = (&ex.trajectory.transitions()[0], &rel.trajectory.transitions()[0]);
        assert!((tr.t - te.t - eps).abs() < 1e-12);
        assert_eq!(tr.post, te.post);
    }

    #[test]
    fn zeno_oscillator_exhausts_budget_with_estimate() {
        let p = OscillatorParams::zeno();
        let sys = Arc::new(oscillator_system(&p).unwrap());
        let cfg = ExactConfig {
            max_transitions: 20,
            ..ExactConfig::default()
        };
        let res = execute_exact(sys, ModeId(0), &p.initial_state(), &zero_u(), p.t_max, &cfg).unwrap();
        let Termination::ZenoSuspected(z) = &res.termination else {
            panic!("{:?}", res.termination)
        };
        assert!((z.point[0] - p.x_max).abs() < 1e-9);
        assert!(z.point[1].abs() < 1e-4);
        assert!(z.ratio < 1.0);
    }
}
