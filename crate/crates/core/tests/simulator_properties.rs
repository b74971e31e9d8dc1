use std::sync::Arc;

use hysim_core::benchmarks::builtin;
use hysim_core::benchmarks::oscillator::{oscillator_system, OscillatorParams, CONTROL_RANGE};
use hysim_core::benchmarks::pronk::{PronkParams, DOUBLE_STANCE};
use hysim_core::benchmarks::toy::two_interval_system;
use hysim_core::{relax, simulate, ControlSignal, Integrator, ModeId, RelaxedPoint, RelaxedSystem, SimConfig, SimResult, Termination};
use proptest::prelude::*;

fn oscillator(eps: f64) -> RelaxedSystem {
    relax(Arc::new(oscillator_system(&OscillatorParams::example1()).unwrap()), eps).unwrap()
}

fn zero_control() -> ControlSignal {
    ControlSignal::zero(vec![CONTROL_RANGE]).unwrap()
}

/// Checks the structural invariants every relaxed run must satisfy.
fn check_run(rsys: &RelaxedSystem, res: &SimResult) -> Result<(), TestCaseError> {
    let sys = rsys.base();
    let eps = rsys.eps();
    let samples = res.trajectory.samples();
    for w in samples.windows(2) {
        prop_assert!(w[1].t > w[0].t, "times {} then {}", w[0].t, w[1].t);
    }
    for s in samples {
        match &s.point {
            RelaxedPoint::Interior { mode, x } => {
                prop_assert!(sys.domain_contains(*mode, x).unwrap(), "t = {}: {x:?} outside", s.t)
            }
            RelaxedPoint::Strip { tau, .. } => prop_assert!((0.0..=eps).contains(tau), "tau {tau}"),
        }
    }
    for r in res.trajectory.transitions() {
        let RelaxedPoint::Strip { edge, zeta, tau } = &r.pre else {
            return Err(TestCaseError::fail("transition without a strip pre-point"));
        };
        prop_assert_eq!(*edge, r.edge);
        prop_assert_eq!(*tau, eps);
        let e = sys.edge(r.edge);
        let c = sys.mode(e.source).domain.constraints[e.guard.constraint].eval(zeta);
        prop_assert!(c.abs() <= sys.tol.guard, "guard residual {c}");
        let (target, image) = rsys.reset(r.edge, zeta).unwrap();
        prop_assert_eq!(r.post.clone(), RelaxedPoint::interior(target, image));
        prop_assert!(r.dwell >= 0.0 && r.dwell <= eps * (1.0 + 1e-12), "dwell {}", r.dwell);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oscillator_runs_keep_invariants(
        x0 in -1.5f64..-0.05,
        v0 in -2.0f64..2.0,
        h in 2e-3f64..2e-2,
        eps_exp in -4i32..-1,
        which in 0usize..3,
    ) {
        let eps = 10f64.powi(eps_exp);
        let rsys = oscillator(eps);
        let integrator = [Integrator::Euler, Integrator::Midpoint, Integrator::Rk4][which];
        let cfg = SimConfig::new(h, eps, 4.0).integrator(integrator);
        let u = zero_control();
        let res = simulate(&rsys, ModeId(0), &[x0, v0], &u, &cfg).unwrap();
        prop_assert_eq!(&res.termination, &Termination::HorizonReached);
        check_run(&rsys, &res)?;
        let again = simulate(&rsys, ModeId(0), &[x0, v0], &u, &cfg).unwrap();
        prop_assert_eq!(res, again);
    }

    #[test]
    fn toy_runs_stop_on_the_outer_wall(h in 1e-3f64..0.2, eps in 1e-4f64..0.3) {
        let rsys = relax(Arc::new(two_interval_system()), eps).unwrap();
        let cfg = SimConfig::new(h, eps, 10.0);
        let res = simulate(&rsys, ModeId(0), &[0.0], &ControlSignal::zero(Vec::new()).unwrap(), &cfg).unwrap();
        check_run(&rsys, &res)?;
        let is_boundary_stop = matches!(res.termination, Termination::BoundaryStop { .. });
        prop_assert!(is_boundary_stop, "{:?}", res.termination);
        prop_assert_eq!(res.trajectory.transitions().len(), 1);
        let last = res.trajectory.last_point().unwrap();
        prop_assert_eq!(last.mode(rsys.base()), ModeId(1));
        // The unit drift points out of x <= 3, and no guard sits there.
        let x = last.coords()[0];
        prop_assert!((x - 3.0).abs() <= 1e-6 * h.max(1.0), "stopped at {x}");
        // Unit speed in both intervals plus the strip dwell.
        let t = res.trajectory.end_time().unwrap();
        prop_assert!((t - (2.0 + eps)).abs() <= 1e-6 * (1.0 + h), "end time {t}");
    }
}

/// Largest energy excursion over the interior samples of the first double stance.
fn double_stance_drift(h: f64) -> f64 {
    let sc = builtin("pronk").unwrap().unwrap();
    let p = PronkParams::reference();
    let eps = 1e-2;
    let rsys = relax(sc.system.clone(), eps).unwrap();
    let cfg = SimConfig::new(h, eps, 0.5).integrator(Integrator::Rk4);
    let res = simulate(&rsys, sc.mode, &sc.x0, &sc.control, &cfg).unwrap();
    let stance: Vec<f64> = res
        .trajectory
        .samples()
        .iter()
        .skip_while(|s| !matches!(&s.point, RelaxedPoint::Interior { mode, .. } if *mode == DOUBLE_STANCE))
        .take_while(|s| matches!(&s.point, RelaxedPoint::Interior { mode, .. } if *mode == DOUBLE_STANCE))
        .map(|s| p.energy(DOUBLE_STANCE, s.point.coords()))
        .collect();
    assert!(stance.len() > 20, "{} stance samples at h = {h}", stance.len());
    stance.iter().map(|e| (e - stance[0]).abs()).fold(0.0, f64::max)
}

#[test]
fn stance_energy_drifts_at_integrator_order() {
    let coarse = double_stance_drift(4e-3);
    let fine = double_stance_drift(2e-3);
    assert!(coarse < 1e-5, "drift {coarse}");
    // Fourth order: halving h divides the drift by about 16.
    assert!(coarse / fine > 8.0, "drift {coarse} then {fine}");
}
