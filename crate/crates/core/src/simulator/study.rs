use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate, SimConfig, SimError};
use crate::metric::{rho_hat, trajectory_distance, QuotientGraph};
use crate::model::{ControlSignal, EdgeId, HybridSystem, ModeId};
use crate::relaxation::{relax, RelaxedSystem};
use crate::trajectory::Trajectory;

/// Least-squares slope of `ln y` against `ln x` over the finite, positive
/// pairs. `None` with fewer than two such pairs.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub delta: f64,
    pub trials: usize,
    /// Sup-in-time relaxed quotient distance of each perturbed run from the
    /// nominal one.
    pub deviations: Vec<f64>,
    pub max_deviation: f64,
    pub sequences_agree: bool,
    /// Perturbed runs whose transition edges differ from the nominal run.
    pub divergent: Vec<usize>,
    /// Heuristic evidence that the execution is not orbitally stable.
    pub suspect: bool,
}

/// Reruns from `trials` initial conditions drawn uniformly in the `delta`
/// ball around `p0` (rejecting points outside the domain) and compares them
/// with the nominal run.
#[allow(clippy::too_many_arguments)]
pub fn orbital_stability_probe(
    rsys: &RelaxedSystem,
    j0: ModeId,
    p0: &[f64],
    u: &ControlSignal,
    cfg: &SimConfig,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ProbeReport, SimError> {
    if !(delta >= 0.0) {
        return Err(SimError::Config(format!("perturbation radius must be non-negative, got {delta}")));
    }
    let nominal = simulate(rsys, j0, p0, u, cfg)?;
    let horizon = nominal.trajectory.end_time().unwrap_or(0.0);
    let graph = QuotientGraph::relaxed(rsys, 8)?;
    let sys = rsys.base();
    let nominal_edges = nominal.trajectory.edge_sequence();
    let grid = ((horizon / cfg.h).ceil() as usize).clamp(10, 2000);

    let runs: Vec<(f64, Vec<EdgeId>)> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<(f64, Vec<EdgeId>), SimError> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let mut p = p0.to_vec();
            for _ in 0..64 {
                let dir: Vec<f64> = (0..p0.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                if !(norm > 0.0 && norm <= 1.0) {
                    continue;
                }
                let cand: Vec<f64> = p0.iter().zip(&dir).map(|(x, d)| x + delta * d).collect();
                if sys.domain_contains(j0, &cand)? {
                    p = cand;
                    break;
                }
            }
            let run = simulate(rsys, j0, &p, u, cfg)?;
            let end = run.trajectory.end_time().unwrap_or(0.0).min(horizon);
            let d = trajectory_distance(&graph, rsys, &nominal.trajectory, &run.trajectory, end, grid)?;
            Ok((d.value, run.trajectory.edge_sequence()))
        })
        .collect::<Result<_, _>>()?;
    let deviations: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let divergent: Vec<usize> = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1 != nominal_edges)
        .map(|(i, _)| i)
        .collect();
    Ok(ProbeReport {
        delta,
        trials,
        max_deviation: deviations.iter().copied().fold(0.0, f64::max),
        deviations,
        sequences_agree: divergent.is_empty(),
        suspect: !divergent.is_empty(),
        divergent,
    })
}

/// Inputs of a convergence study.
pub struct StudySpec<'a> {
    pub system: Arc<HybridSystem>,
    pub mode: ModeId,
    pub x0: Vec<f64>,
    pub control: ControlSignal,
    /// Template; `h` and `eps` are overridden per row.
    pub base: SimConfig,
    /// Reference trajectory for the relaxed quotient distance.
    pub reference: Option<&'a Trajectory>,
    /// Reference position for the sample-time error, with the coordinate it
    /// is compared against.
    pub position: Option<(usize, &'a (dyn Fn(f64) -> f64 + Sync))>,
    pub n_g: usize,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub eps: f64,
    pub rho_eps: Option<f64>,
    pub rho_hat: Option<f64>,
    pub steps: usize,
    pub transitions: usize,
    /// Seconds; not part of any deterministic output.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Slope in `h` at the largest `eps`.
    pub slope_h: Option<f64>,
    /// Slope in `eps` at the smallest `h`.
    pub slope_eps: Option<f64>,
}

impl ConvergenceRow {
    /// `rho_hat` when available, else `rho_eps`.
    pub fn error(&self) -> f64 {
        self.rho_hat.or(self.rho_eps).unwrap_or(f64::NAN)
    }
}

/// Runs every `(h, eps)` pair in parallel and fits log-log slopes.
pub fn convergence_study(spec: &StudySpec<'_>, hs: &[f64], epss: &[f64]) -> Result<ConvergenceTable, SimError> {
    if hs.is_empty() || epss.is_empty() {
        return Err(SimError::Config("convergence study needs at least one h and one eps".into()));
    }
    if let Some(r) = spec.reference {
        let end = r.end_time().unwrap_or(f64::NEG_INFINITY);
        if end < spec.base.t_end - 1e-9 * spec.base.t_end.max(1.0) {
            return Err(SimError::Config(format!(
                "reference ends at {end}, before the horizon {}",
                spec.base.t_end
            )));
        }
    }
    let pairs: Vec<(f64, f64)> = epss
        .iter()
        .flat_map(|&e| hs.iter().map(move |&h| (h, e)))
        .collect();
    let rows = pairs
        .par_iter()
        .map(|&(h, eps)| -> Result<ConvergenceRow, SimError> {
            let start = Instant::now();
            let rsys = relax(spec.system.clone(), eps)?;
            let mut cfg = spec.base.clone();
            cfg.h = h;
            cfg.eps = eps;
            let res = simulate(&rsys, spec.mode, &spec.x0, &spec.control, &cfg)?;
            let rho_eps = match spec.reference {
                Some(r) => {
                    let graph = QuotientGraph::relaxed(&rsys, spec.n_g)?;
                    let end = res.trajectory.end_time().unwrap_or(0.0).min(cfg.t_end);
                    Some(trajectory_distance(&graph, &rsys, r, &res.trajectory, end, spec.grid)?.value)
                }
                None => None,
            };
            let rho_hat = match spec.position {
                Some((i, f)) => Some(rho_hat(&res.trajectory.component(i), f)?),
                None => None,
            };
            Ok(ConvergenceRow {
                h,
                eps,
                rho_eps,
                rho_hat,
                steps: res.stats.steps,
                transitions: res.stats.transitions,
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let eps_max = epss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h_min = hs.iter().copied().fold(f64::INFINITY, f64::min);
    let slope = |sel: &dyn Fn(&ConvergenceRow) -> bool, key: &dyn Fn(&ConvergenceRow) -> f64| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| sel(r)).map(|r| (key(r), r.error())).unzip();
        fit_loglog_slope(&xs, &ys)
    };
    Ok(ConvergenceTable {
        slope_h: slope(&|r| r.eps == eps_max, &|r| r.h),
        slope_eps: slope(&|r| r.h == h_min, &|r| r.eps),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::oscillator::{oscillator_system, OscillatorParams, CONTROL_RANGE};
    use crate::model::{Constraint, DomainSpec, VectorFieldSpec};

    #[test]
    fn slope_of_power_law() {
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((fit_loglog_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_loglog_slope(&[1.0], &[1.0]), None);
        assert_eq!(fit_loglog_slope(&[1.0, 2.0], &[0.0, f64::NAN]), None);
    }

    #[test]
    fn zero_radius_probe_has_zero_deviation() {
        let p = OscillatorParams::example1();
        let rsys = relax(Arc::new(oscillator_system(&p).unwrap()), 1e-3).unwrap();
        let u = ControlSignal::zero(vec![CONTROL_RANGE]).unwrap();
        let cfg = SimConfig::new(1e-2, 1e-3, 2.0);
        let r = orbital_stability_probe(&rsys, ModeId(0), &p.initial_state(), &u, &cfg, 0.0, 3, 7).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(r.sequences_agree && !r.suspect);
    }

    #[test]
    fn example1_probe_is_stable() {
        let p = OscillatorParams::example1();
        let rsys = relax(Arc::new(oscillator_system(&p).unwrap()), 1e-3).unwrap();
        let u = ControlSignal::zero(vec![CONTROL_RANGE]).unwrap();
        // Strip entry depth is quantized to h|v|, which shifts the dwell and
        // the post-reset state by O(h |v| |f|), here a few 1e-3.
        let cfg = SimConfig::new(1e-5, 1e-3, 3.0);
        let r = orbital_stability_probe(&rsys, ModeId(0), &p.initial_state(), &u, &cfg, 1e-4, 4, 1).unwrap();
        assert!(r.sequences_agree, "{r:?}");
        assert!(r.max_deviation < 0.05, "{}", r.max_deviation);
    }

    #[test]
    fn guard_free_halving_ratio_matches_order() {
        let mut b = HybridSystem::builder("decay");
        b.add_mode(
            "a",
            DomainSpec::new(1, vec![(-2.0, 2.0)]).constraint(Constraint::upper(1, 0, 2.0)),
            VectorFieldSpec::new(|_, x, _, out| out[0] = -x[0]),
        );
        let exact = |t: f64| (-t).exp();
        let spec = StudySpec {
            system: Arc::new(b.build().unwrap()),
            mode: ModeId(0),
            x0: vec![1.0],
            control: ControlSignal::zero(vec![]).unwrap(),
            base: SimConfig::new(0.1, 1e-3, 2.0),
            reference: None,
            position: Some((0, &exact)),
            n_g: 4,
            grid: 10,
        };
        let table = convergence_study(&spec, &[0.1, 0.05, 0.025], &[1e-3]).unwrap();
        let slope = table.slope_h.unwrap();
        assert!((slope - 2.0).abs() < 0.1, "{slope}");
        let e: Vec<f64> = table.rows.iter().map(|r| r.error()).collect();
        assert!((e[0] / e[1] - 4.0).abs() < 0.4);
    }

    #[test]
    fn short_reference_is_rejected() {
        let p = OscillatorParams::example1();
        let sys = Arc::new(oscillator_system(&p).unwrap());
        let mut short = Trajectory::default();
        short
            .push(0.0, crate::relaxation::RelaxedPoint::interior(ModeId(0), p.initial_state()))
            .unwrap();
        let spec = StudySpec {
            system: sys,
            mode: ModeId(0),
            x0: p.initial_state(),
            control: ControlSignal::zero(vec![CONTROL_RANGE]).unwrap(),
            base: SimConfig::new(1e-2, 1e-3, 1.0),
            reference: Some(&short),
            position: None,
            n_g: 4,
            grid: 10,
        };
        assert!(matches!(convergence_study(&spec, &[1e-2], &[1e-3]), Err(SimError::Config(_))));
    }
}
