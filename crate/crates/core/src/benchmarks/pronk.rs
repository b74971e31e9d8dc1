//! Planar rigid body on two massless spring legs (pronking).
//!
//! Body state `(x, z, theta, xdot, zdot, thetadot)`. Stance modes append the
//! ground anchor `(ax, az)` of every attached foot: left stance and right
//! stance are 8-dimensional, double stance is 10-dimensional with the left
//! anchor first. Hips sit at `(x, z) +- (d/2)(cos theta, sin theta)`, the
//! left hip on the minus side. In flight each leg has rest length `l` and
//! makes the angle `psi` with the body normal.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    Constraint, DomainSpec, GuardSpec, HybridSystem, ModeId, ResetSpec, VectorFieldSpec,
};

pub const AERIAL: ModeId = ModeId(0);
pub const LEFT_STANCE: ModeId = ModeId(1);
pub const RIGHT_STANCE: ModeId = ModeId(2);
pub const DOUBLE_STANCE: ModeId = ModeId(3);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PronkParams {
    pub m: f64,
    pub inertia: f64,
    pub k: f64,
    pub l: f64,
    pub d: f64,
    pub g: f64,
    pub psi: f64,
    pub x0: [f64; 6],
}

impl PronkParams {
    pub fn reference() -> Self {
        Self {
            m: 1.0,
            inertia: 1.0,
            k: 30.0,
            l: 1.0,
            d: 1.0,
            g: 9.81,
            psi: PI / 5.0,
            x0: [0.0, 1.1, 0.0, 3.4, 0.0, 0.0],
        }
    }

    pub fn with_pitch_rate(mut self, thetadot: f64) -> Self {
        self.x0[5] = thetadot;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("m", self.m),
            ("I", self.inertia),
            ("k", self.k),
            ("l", self.l),
            ("d", self.d),
            ("g", self.g),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.psi > 0.0 && self.psi < PI / 2.0) {
            return Err(ModelError::InvalidParameter(format!(
                "leg angle must lie in (0, pi/2), got {}",
                self.psi
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParameter("non-finite initial state".into()));
        }
        Ok(())
    }

    /// Hip position and velocity; `side` is -1 for left, +1 for right.
    pub fn hip(&self, x: &[f64], side: f64) -> ([f64; 2], [f64; 2]) {
        let h = 0.5 * self.d * side;
        let (s, c) = x[2].sin_cos();
        (
            [x[0] + h * c, x[1] + h * s],
            [x[3] - h * s * x[5], x[4] + h * c * x[5]],
        )
    }

    /// Position and velocity of a foot held at the flight angle.
    pub fn flight_foot(&self, x: &[f64], side: f64) -> ([f64; 2], [f64; 2]) {
        let (p, v) = self.hip(x, side);
        let (s, c) = (x[2] + self.psi).sin_cos();
        (
            [p[0] + self.l * s, p[1] - self.l * c],
            [v[0] + self.l * c * x[5], v[1] + self.l * s * x[5]],
        )
    }

    /// Leg length and its rate for a foot pinned at `anchor`.
    pub fn leg(&self, x: &[f64], side: f64, anchor: [f64; 2]) -> (f64, f64) {
        let (p, v) = self.hip(x, side);
        let r = [p[0] - anchor[0], p[1] - anchor[1]];
        let len = r[0].hypot(r[1]);
        (len, (r[0] * v[0] + r[1] * v[1]) / len)
    }

    /// Kinetic, gravitational and spring energy in mode `j`.
    pub fn energy(&self, j: ModeId, x: &[f64]) -> f64 {
        let kinetic = 0.5 * self.m * (x[3] * x[3] + x[4] * x[4]) + 0.5 * self.inertia * x[5] * x[5];
        let spring: f64 = anchors(j, x)
            .into_iter()
            .map(|(side, a)| {
                let (len, _) = self.leg(x, side, a);
                0.5 * self.k * (self.l - len).powi(2)
            })
            .sum();
        kinetic + self.m * self.g * x[1] + spring
    }
}

/// Attached feet of mode `j` as `(side, anchor)`.
fn anchors(j: ModeId, x: &[f64]) -> Vec<(f64, [f64; 2])> {
    match j {
        LEFT_STANCE => vec![(-1.0, [x[6], x[7]])],
        RIGHT_STANCE => vec![(1.0, [x[6], x[7]])],
        DOUBLE_STANCE => vec![(-1.0, [x[6], x[7]]), (1.0, [x[8], x[9]])],
        _ => Vec::new(),
    }
}

fn mode_dim(j: ModeId) -> usize {
    6 + 2 * anchors(j, &[0.0; 10]).len()
}

fn field(p: PronkParams, j: ModeId) -> VectorFieldSpec {
    VectorFieldSpec::new(move |_, x, _, out| {
        let (mut fx, mut fz, mut torque) = (0.0, 0.0, 0.0);
        for (side, a) in anchors(j, x) {
            let (hip, _) = p.hip(x, side);
            let r = [hip[0] - a[0], hip[1] - a[1]];
            let len = r[0].hypot(r[1]);
            let mag = p.k * (p.l - len) / len;
            let (f0, f1) = (mag * r[0], mag * r[1]);
            let arm = [hip[0] - x[0], hip[1] - x[1]];
            fx += f0;
            fz += f1;
            torque += arm[0] * f1 - arm[1] * f0;
        }
        out[..3].copy_from_slice(&x[3..6]);
        out[3] = fx / p.m;
        out[4] = fz / p.m - p.g;
        out[5] = torque / p.inertia;
        out[6..].iter_mut().for_each(|v| *v = 0.0);
    })
}

/// `-(flight foot height)` with its gradient in the body coordinates.
fn touchdown_constraint(p: PronkParams, dim: usize, side: f64) -> Constraint {
    Constraint::with_gradient(
        move |x| -p.flight_foot(x, side).0[1],
        move |x| {
            let mut g = vec![0.0; dim];
            g[1] = -1.0;
            g[2] = -(0.5 * p.d * side * x[2].cos() + p.l * (x[2] + p.psi).sin());
            g
        },
    )
}

/// `leg length - l` for the foot anchored at `x[offset..offset + 2]`.
fn liftoff_constraint(p: PronkParams, dim: usize, side: f64, offset: usize) -> Constraint {
    Constraint::with_gradient(
        move |x| p.leg(x, side, [x[offset], x[offset + 1]]).0 - p.l,
        move |x| {
            let (hip, _) = p.hip(x, side);
            let r = [hip[0] - x[offset], hip[1] - x[offset + 1]];
            let len = r[0].hypot(r[1]);
            let u = [r[0] / len, r[1] / len];
            let h = 0.5 * p.d * side;
            let mut g = vec![0.0; dim];
            g[0] = u[0];
            g[1] = u[1];
            g[2] = h * (-x[2].sin() * u[0] + x[2].cos() * u[1]);
            g[offset] = -u[0];
            g[offset + 1] = -u[1];
            g
        },
    )
}

fn touchdown_guard(p: PronkParams, constraint: usize, side: f64) -> GuardSpec {
    GuardSpec::new(constraint)
        .activation(move |_, x, _| p.flight_foot(x, side).1[1] <= 0.0)
        .retraction(move |x| {
            // Lift the body until the foot touches the ground.
            let depth = -p.flight_foot(x, side).0[1];
            let mut zeta = x.to_vec();
            zeta[1] += depth;
            (zeta, depth)
        })
}

fn liftoff_guard(p: PronkParams, constraint: usize, side: f64, offset: usize) -> GuardSpec {
    GuardSpec::new(constraint)
        // The released leg swings to the flight angle, so its foot must clear the ground.
        .activation(move |_, x, _| {
            p.leg(x, side, [x[offset], x[offset + 1]]).1 >= 0.0 && p.flight_foot(x, side).0[1] >= 0.0
        })
        .retraction(move |x| {
            // Slide the body toward the anchor until the leg is at rest length.
            let a = [x[offset], x[offset + 1]];
            let (hip, _) = p.hip(x, side);
            let r = [hip[0] - a[0], hip[1] - a[1]];
            let len = r[0].hypot(r[1]);
            let stretch = len - p.l;
            let mut zeta = x.to_vec();
            zeta[0] -= stretch * r[0] / len;
            zeta[1] -= stretch * r[1] / len;
            (zeta, stretch)
        })
}

fn with(body: &[f64], extra: &[[f64; 2]]) -> Vec<f64> {
    let mut v = body.to_vec();
    for e in extra {
        v.extend_from_slice(e);
    }
    v
}

fn domain(j: ModeId, constraints: [Constraint; 2]) -> DomainSpec {
    let mut bbox = vec![
        (-2.0, 30.0),
        (0.0, 3.0),
        (-PI, PI),
        (-20.0, 20.0),
        (-20.0, 20.0),
        (-20.0, 20.0),
    ];
    for _ in 0..(mode_dim(j) - 6) / 2 {
        bbox.push((-2.0, 30.0));
        bbox.push((-0.1, 0.1));
    }
    let [a, b] = constraints;
    DomainSpec::new(mode_dim(j), bbox).constraint(a).constraint(b).convex(false)
}

pub fn pronk_system(p: &PronkParams) -> Result<HybridSystem, ModelError> {
    p.validate()?;
    let p = *p;
    let (left, right) = (-1.0, 1.0);
    let mut b = HybridSystem::builder("pronk");
    let a = b.add_mode(
        "aerial",
        domain(AERIAL, [touchdown_constraint(p, 6, left), touchdown_constraint(p, 6, right)]),
        field(p, AERIAL),
    );
    let l = b.add_mode(
        "left-stance",
        domain(LEFT_STANCE, [liftoff_constraint(p, 8, left, 6), touchdown_constraint(p, 8, right)]),
        field(p, LEFT_STANCE),
    );
    let r = b.add_mode(
        "right-stance",
        domain(RIGHT_STANCE, [liftoff_constraint(p, 8, right, 6), touchdown_constraint(p, 8, left)]),
        field(p, RIGHT_STANCE),
    );
    let g = b.add_mode(
        "double-stance",
        domain(
            DOUBLE_STANCE,
            [liftoff_constraint(p, 10, left, 6), liftoff_constraint(p, 10, right, 8)],
        ),
        field(p, DOUBLE_STANCE),
    );
    debug_assert_eq!((a, l, r, g), (AERIAL, LEFT_STANCE, RIGHT_STANCE, DOUBLE_STANCE));

    let foot = move |x: &[f64], side: f64| p.flight_foot(x, side).0;
    // Touchdowns.
    b.add_edge(a, l, touchdown_guard(p, 0, left), ResetSpec::new(move |x| with(x, &[foot(x, left)])));
    b.add_edge(a, r, touchdown_guard(p, 1, right), ResetSpec::new(move |x| with(x, &[foot(x, right)])));
    b.add_edge(
        l,
        g,
        touchdown_guard(p, 1, right),
        ResetSpec::new(move |x| with(&x[..8], &[foot(x, right)])),
    );
    b.add_edge(
        r,
        g,
        touchdown_guard(p, 1, left),
        ResetSpec::new(move |x| with(&x[..6], &[foot(x, left), [x[6], x[7]]])),
    );
    // Liftoffs.
    b.add_edge(l, a, liftoff_guard(p, 0, left, 6), ResetSpec::new(|x| x[..6].to_vec()));
    b.add_edge(r, a, liftoff_guard(p, 0, right, 6), ResetSpec::new(|x| x[..6].to_vec()));
    b.add_edge(
        g,
        r,
        liftoff_guard(p, 0, left, 6),
        ResetSpec::new(|x| with(&x[..6], &[[x[8], x[9]]])),
    );
    b.add_edge(g, l, liftoff_guard(p, 1, right, 8), ResetSpec::new(|x| x[..8].to_vec()));
    b.build()
}
