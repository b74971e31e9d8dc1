//! Forced linear oscillator with a rigid stop.
//!
//! `x'' + 2a x' + w^2 x = (F cos(W t) + u) / m` on `x <= x_max`; hitting the
//! stop with `x' >= 0` resets the velocity to `-c x'`. The sinusoidal forcing
//! enters through the time argument of the field, the control `u` is an
//! additional external input (zero in all benchmarks).

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Constraint, DomainSpec, GuardSpec, HybridSystem, ModeId, ResetSpec, VectorFieldSpec};
use crate::relaxation::RelaxedPoint;
use crate::trajectory::{Trajectory, TrajectoryMeta, TransitionRecord};
use crate::model::EdgeId;

/// Range of the external control input.
pub const CONTROL_RANGE: (f64, f64) = (-100.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Damping rate.
    pub a: f64,
    /// Coefficient of restitution.
    pub c: f64,
    pub omega: f64,
    pub x_max: f64,
    pub x0: f64,
    pub v0: f64,
    pub t_max: f64,
    /// Forcing amplitude `F`.
    pub forcing_amp: f64,
    /// Forcing frequency `W`.
    pub forcing_freq: f64,
    pub mass: f64,
}

impl OscillatorParams {
    pub fn example1() -> Self {
        Self {
            a: 0.05,
            c: 0.9,
            omega: 2.5,
            x_max: 14.0,
            x0: 11.36263,
            v0: 31.40358,
            t_max: 40.0 * std::f64::consts::PI,
            forcing_amp: 20.0,
            forcing_freq: 2.5,
            mass: 1.0,
        }
    }

    pub fn example2() -> Self {
        Self {
            a: 0.95,
            c: 0.5,
            omega: 1.0,
            x_max: -0.8,
            x0: -0.8,
            v0: 0.0,
            t_max: 4.0 * std::f64::consts::PI,
            forcing_amp: 1.0,
            forcing_freq: 1.0,
            mass: 1.0,
        }
    }

    /// Undamped, unforced drop onto the stop: impacts accumulate in finite time.
    pub fn zeno() -> Self {
        Self {
            a: 0.0,
            c: 0.5,
            omega: 1.0,
            x_max: -0.8,
            x0: -2.0,
            v0: 0.0,
            t_max: 8.0,
            forcing_amp: 0.0,
            forcing_freq: 1.0,
            mass: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            self.a,
            self.c,
            self.omega,
            self.x_max,
            self.x0,
            self.v0,
            self.t_max,
            self.forcing_amp,
            self.forcing_freq,
            self.mass,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("non-finite oscillator parameter".into()));
        }
        if !(self.omega > 0.0 && self.mass > 0.0) {
            return Err(ModelError::InvalidParameter("omega and mass must be positive".into()));
        }
        if !(0.0 <= self.a && self.a < self.omega) {
            return Err(ModelError::InvalidParameter(format!(
                "damping must be sub-critical, got a = {} with omega = {}",
                self.a, self.omega
            )));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(ModelError::InvalidParameter(format!(
                "restitution {} outside [0, 1]",
                self.c
            )));
        }
        if self.x0 > self.x_max {
            return Err(ModelError::InvalidParameter("initial position beyond the stop".into()));
        }
        Ok(())
    }

    /// Sinusoidal forcing `F cos(W t)`.
    pub fn forcing(&self, t: f64) -> f64 {
        self.forcing_amp * (self.forcing_freq * t).cos()
    }

    pub fn damped_frequency(&self) -> f64 {
        (self.omega * self.omega - self.a * self.a).sqrt()
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![self.x0, self.v0]
    }

    /// Coefficients `(P, Q)` of the particular solution `P cos(W t) + Q sin(W t)`.
    pub fn particular_coefficients(&self) -> Result<(f64, f64), ModelError> {
        if self.forcing_amp == 0.0 {
            return Ok((0.0, 0.0));
        }
        let w = self.forcing_freq;
        let d = self.omega * self.omega - w * w;
        let e = 2.0 * self.a * w;
        let den = d * d + e * e;
        if den == 0.0 {
            return Err(ModelError::InvalidParameter(
                "undamped resonant forcing has no bounded particular solution".into(),
            ));
        }
        let f = self.forcing_amp / self.mass;
        Ok((f * d / den, f * e / den))
    }

    /// Rough amplitude scale used for bounding boxes.
    fn amplitude_scale(&self) -> f64 {
        let (p, q) = self.particular_coefficients().unwrap_or((0.0, 0.0));
        self.x0.abs() + self.x_max.abs() + self.v0.abs() / self.omega + p.hypot(q) + 1.0
    }
}

/// One mode, one self-edge at the stop.
pub fn oscillator_system(p: &OscillatorParams) -> Result<HybridSystem, ModelError> {
    p.validate()?;
    let q = *p;
    let span = 2.0 * q.amplitude_scale();
    let vmax = q.omega * span + q.v0.abs();
    let domain = DomainSpec::new(2, vec![(q.x_max - span, q.x_max), (-vmax, vmax)])
        .constraint(Constraint::upper(2, 0, q.x_max))
        .convex(true);
    let w2 = q.omega * q.omega;
    let lipschitz = (1.0 + w2 * w2 + 4.0 * q.a * q.a).sqrt();
    let field = VectorFieldSpec::new(move |t, x, u, out| {
        out[0] = x[1];
        out[1] = (q.forcing(t) + u[0]) / q.mass - 2.0 * q.a * x[1] - w2 * x[0];
    })
    .with_lipschitz(lipschitz);

    let mut b = HybridSystem::builder("oscillator").control_range(vec![CONTROL_RANGE]);
    let m = b.add_mode("free", domain, field);
    let c = q.c;
    b.add_edge(
        m,
        m,
        GuardSpec::new(0).activation(|_, x, _| x[1] >= 0.0),
        ResetSpec::new(move |x| vec![x[0], -c * x[1]]),
    );
    b.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub t: f64,
    pub pre_velocity: f64,
    pub post_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    /// Free flight; homogeneous coefficients in local time `t - t0`.
    Free { t0: f64, a: f64, b: f64 },
    /// Resting against the stop.
    Stuck { t0: f64 },
}

impl Piece {
    fn start(&self) -> f64 {
        match *self {
            Piece::Free { t0, .. } | Piece::Stuck { t0 } => t0,
        }
    }
}

/// Piecewise closed-form solution of the oscillator with zero external control.
#[derive(Debug, Clone)]
pub struct AnalyticSolution {
    params: OscillatorParams,
    wd: f64,
    p: f64,
    q: f64,
    pieces: Vec<Piece>,
    impacts: Vec<Impact>,
    horizon: f64,
}

/// Below this post-impact speed the remaining impact sequence is summed as a
/// geometric series and the mass is put at rest on the stop.
const ZENO_SPEED: f64 = 1e-5;
const MAX_IMPACTS: usize = 1_000_000;

/// Builds the closed-form reference on `[0, horizon]`.
///
/// Impacts are bracketed on a scan grid (geometrically refined after each
/// reset) and bisected to `impact_tol`. With the mass at rest on the stop it
/// stays there while the free acceleration `F cos(W t)/m - w^2 x_max` pushes
/// into the stop, and departs when that acceleration changes sign.
pub fn oscillator_analytic(
    params: &OscillatorParams,
    horizon: f64,
    impact_tol: f64,
) -> Result<AnalyticSolution, ModelError> {
    params.validate()?;
    if !(impact_tol > 0.0) || !(horizon > 0.0) {
        return Err(ModelError::InvalidParameter(
            "horizon and impact tolerance must be positive".into(),
        ));
    }
    let (p, q) = params.particular_coefficients()?;
    let mut sol = AnalyticSolution {
        params: *params,
        wd: params.damped_frequency(),
        p,
        q,
        pieces: Vec::new(),
        impacts: Vec::new(),
        horizon,
    };
    let pr = *params;
    let w_fast = sol.wd.max(pr.forcing_freq).max(1e-3);
    let scan = (2.0 * std::f64::consts::PI / w_fast / 200.0).min(0.01);
    let at_stop_tol = 1e-12 * (1.0 + pr.x_max.abs());
    let contact_accel = |t: f64| pr.forcing(t) / pr.mass - pr.omega * pr.omega * pr.x_max;

    let (mut t, mut x, mut v) = (0.0, pr.x0, pr.v0);
    while t < horizon {
        if sol.impacts.len() > MAX_IMPACTS {
            return Err(ModelError::InvalidParameter("impact budget exceeded".into()));
        }
        let at_stop = (x - pr.x_max).abs() <= at_stop_tol;
        if at_stop && v > 0.0 {
            let resume = sol.record_impact(t, v, &contact_accel);
            x = pr.x_max;
            v = if resume > t { 0.0 } else { -pr.c * v };
            t = resume;
            continue;
        }
        if at_stop && v == 0.0 {
            let pushing = |s: f64| contact_accel(s) > 0.0;
            if pushing(t) || (contact_accel(t) == 0.0 && contact_accel(t + 1e-9) > 0.0) {
                sol.pieces.push(Piece::Stuck { t0: t });
                let release = find_sign_change(|s| -contact_accel(s), t, horizon, scan, impact_tol);
                match release {
                    Some(tr) => {
                        t = tr;
                        x = pr.x_max;
                        v = 0.0;
                        sol.pieces.push(sol.free_piece(t, x, v));
                        let (nt, nx, nv) = sol.flow_to_impact(t, scan, impact_tol, &contact_accel)?;
                        t = nt;
                        x = nx;
                        v = nv;
                        continue;
                    }
                    None => break,
                }
            }
        }
        sol.pieces.push(sol.free_piece(t, x, v));
        let (nt, nx, nv) = sol.flow_to_impact(t, scan, impact_tol, &contact_accel)?;
        t = nt;
        x = nx;
        v = nv;
    }
    Ok(sol)
}

/// First `s > t0` in `(t0, t1]` where `g` becomes positive, bisected to `tol`.
fn find_sign_change(g: impl Fn(f64) -> f64, t0: f64, t1: f64, scan: f64, tol: f64) -> Option<f64> {
    let mut lo = t0;
    while lo < t1 {
        let hi = (lo + scan).min(t1);
        if g(hi) > 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > tol {
                let m = 0.5 * (a + b);
                if g(m) > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(b);
        }
        lo = hi;
    }
    None
}

impl AnalyticSolution {
    fn xp(&self, t: f64) -> (f64, f64) {
        let w = self.params.forcing_freq;
        let (s, c) = (w * t).sin_cos();
        (self.p * c + self.q * s, w * (-self.p * s + self.q * c))
    }

    fn free_piece(&self, t0: f64, x: f64, v: f64) -> Piece {
        let (xp, vp) = self.xp(t0);
        let a = x - xp;
        let b = (v - vp + self.params.a * a) / self.wd;
        Piece::Free { t0, a, b }
    }

    fn eval_piece(&self, piece: &Piece, t: f64) -> (f64, f64) {
        match *piece {
            Piece::Stuck { .. } => (self.params.x_max, 0.0),
            Piece::Free { t0, a, b } => {
                let s = t - t0;
                let e = (-self.params.a * s).exp();
                let (sn, cs) = (self.wd * s).sin_cos();
                let xh = e * (a * cs + b * sn);
                let vh = e * (-self.params.a * (a * cs + b * sn) + self.wd * (-a * sn + b * cs));
                let (xp, vp) = self.xp(t);
                (xh + xp, vh + vp)
            }
        }
    }

    /// Records an impact at `t` with pre-impact speed `v`. Returns the time the
    /// motion resumes, which is later than `t` only when the remaining impacts
    /// are summed as a series.
    fn record_impact(&mut self, t: f64, v: f64, contact_accel: &dyn Fn(f64) -> f64) -> f64 {
        let c = self.params.c;
        let post = -c * v;
        self.impacts.push(Impact {
            t,
            pre_velocity: v,
            post_velocity: post,
        });
        let alpha = contact_accel(t);
        if c < 1.0 && post.abs() < ZENO_SPEED && alpha > 0.0 {
            let rest = 2.0 * c * v / (alpha * (1.0 - c));
            self.pieces.push(Piece::Stuck { t0: t });
            return t + rest;
        }
        t
    }

    /// Flows the last free piece from `t` to the next impact or the horizon.
    fn flow_to_impact(
        &mut self,
        t: f64,
        scan: f64,
        tol: f64,
        contact_accel: &dyn Fn(f64) -> f64,
    ) -> Result<(f64, f64, f64), ModelError> {
        let piece = *self.pieces.last().expect("piece pushed before flowing");
        let x_max = self.params.x_max;
        let g = |s: f64| self.eval_piece(&piece, s).0 - x_max;
        let (_, v_start) = self.eval_piece(&piece, t);
        let accel = contact_accel(t).abs() + self.params.omega.powi(2) * x_max.abs() + 1.0;
        // Rounding level of the closed form; a start on the stop must first
        // move clearly inside before a crossing counts.
        let noise = 1e-13 * (1.0 + x_max.abs() + self.p.abs() + self.q.abs());
        let mut armed = g(t) < -noise;
        let mut step = if armed {
            scan
        } else {
            (0.05 * v_start.abs() / accel).clamp(1e-14, scan)
        };
        let mut lo = t;
        let mut hit = None;
        while lo < self.horizon {
            let hi = (lo + step).min(self.horizon);
            let gh = g(hi);
            if gh >= 0.0 && (armed || gh > noise) {
                let (mut a, mut b) = (lo, hi);
                while b - a > tol {
                    let m = 0.5 * (a + b);
                    if g(m) >= 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                hit = Some(b);
                break;
            }
            armed |= gh < -noise;
            lo = hi;
            step = (2.0 * step).min(scan);
        }
        match hit {
            None => {
                let (x, v) = self.eval_piece(&piece, self.horizon);
                Ok((self.horizon, x, v))
            }
            Some(ti) => {
                let (_, v) = self.eval_piece(&piece, ti);
                if v < 0.0 {
                    return Err(ModelError::InvalidParameter(format!(
                        "tangential contact at t = {ti} could not be bracketed"
                    )));
                }
                let resume = self.record_impact(ti, v, contact_accel);
                if resume > ti {
                    Ok((resume, x_max, 0.0))
                } else {
                    Ok((ti, x_max, -self.params.c * v))
                }
            }
        }
    }

    fn piece_at(&self, t: f64) -> Option<&Piece> {
        let k = self.pieces.partition_point(|p| p.start() <= t);
        self.pieces.get(k.checked_sub(1)?)
    }

    pub fn params(&self) -> &OscillatorParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `(x, x')` at `t`, right-continuous at impacts.
    pub fn state(&self, t: f64) -> (f64, f64) {
        match self.piece_at(t) {
            Some(p) => self.eval_piece(p, t),
            None => (self.params.x0, self.params.v0),
        }
    }

    pub fn position(&self, t: f64) -> f64 {
        self.state(t).0
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.state(t).1
    }

    pub fn impacts(&self) -> &[Impact] {
        &self.impacts
    }

    /// Whether the mass rests on the stop at `t`.
    pub fn is_stuck(&self, t: f64) -> bool {
        matches!(self.piece_at(t), Some(Piece::Stuck { .. }))
    }

    /// Reference trajectory on `n` uniform intervals plus every impact.
    pub fn to_trajectory(&self, n: usize) -> Trajectory {
        let mode = ModeId(0);
        let mut traj = Trajectory::new(TrajectoryMeta {
            source: "analytic".into(),
            ..Default::default()
        });
        let n = n.max(1);
        let mut grid: Vec<f64> = (0..=n).map(|k| self.horizon * k as f64 / n as f64).collect();
        grid.extend(self.impacts.iter().map(|i| i.t).filter(|&t| t <= self.horizon));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let mut next_impact = 0;
        for t in grid {
            let (x, v) = self.state(t);
            let point = RelaxedPoint::interior(mode, vec![x, v]);
            if traj.push(t, point).is_err() {
                continue;
            }
            while next_impact < self.impacts.len() && self.impacts[next_impact].t <= t {
                let imp = self.impacts[next_impact];
                if imp.t == t {
                    let pre = RelaxedPoint::interior(mode, vec![self.params.x_max, imp.pre_velocity]);
                    let post = RelaxedPoint::interior(mode, vec![self.params.x_max, imp.post_velocity]);
                    traj.replace_last(post.clone());
                    traj.push_transition(TransitionRecord {
                        t,
                        edge: EdgeId(0),
                        pre,
                        post,
                        dwell: 0.0,
                    });
                }
                next_impact += 1;
            }
        }
        traj
    }
}

/// The two-step impact scheme with positions only, as printed:
/// `z_1 = x0 + v0 h + h^2/2 (u(0) - 2a v0 - w^2 x0)` and
/// `z_{k+1} = -c z_{k-1} + min(y_k, (1 + c) x_max)` with
/// `y_k = (h^2 u(t_k) + (2 - h^2 w^2) z_k - ((1 - c) - (1 + c) a h) z_{k-1}) / (1 + a h)`.
pub fn ps_method(p: &OscillatorParams, h: f64) -> Result<Vec<(f64, f64)>, ModelError> {
    p.validate()?;
    if !(h > 0.0) {
        return Err(ModelError::InvalidParameter(format!("step must be positive, got {h}")));
    }
    let n = (p.t_max / h + 1e-9).floor() as usize;
    let u = |t: f64| p.forcing(t) / p.mass;
    let (a, c, w2) = (p.a, p.c, p.omega * p.omega);
    let mut z = Vec::with_capacity(n + 1);
    z.push(p.x0);
    if n >= 1 {
        z.push(p.x0 + p.v0 * h + 0.5 * h * h * (u(0.0) - 2.0 * a * p.v0 - w2 * p.x0));
    }
    for k in 1..n {
        let tk = k as f64 * h;
        let y = (h * h * u(tk) + (2.0 - h * h * w2) * z[k]
            - ((1.0 - c) - (1.0 + c) * a * h) * z[k - 1])
            / (1.0 + a * h);
        z.push(-c * z[k - 1] + y.min((1.0 + c) * p.x_max));
    }
    Ok(z.into_iter().enumerate().map(|(k, zk)| (k as f64 * h, zk)).collect())
}
