//! Time-stamped trajectories on the (relaxed) hybrid quotient space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EdgeId;
use crate::relaxation::{Classification, RelaxedPoint, RelaxedSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("sample time {t} does not increase past {last}")]
    NonIncreasing { t: f64, last: f64 },
    #[error("trajectory is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub point: RelaxedPoint,
}

/// A discrete transition. `pre` lies on the guard (or at the far side of the
/// strip for relaxed trajectories) and `post` is its reset image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: f64,
    pub edge: EdgeId,
    pub pre: RelaxedPoint,
    pub post: RelaxedPoint,
    /// Time spent in the strip before this reset (0 for exact executions).
    pub dwell: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub source: String,
    pub eps: Option<f64>,
    pub h: Option<f64>,
    pub integrator: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<Sample>,
    transitions: Vec<TransitionRecord>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(meta: TrajectoryMeta) -> Self {
        Self {
            samples: Vec::new(),
            transitions: Vec::new(),
            meta,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn transitions(&self) -> &[TransitionRecord] {
        &self.transitions
    }

    pub fn push(&mut self, t: f64, point: RelaxedPoint) -> Result<(), TrajectoryError> {
        if let Some(last) = self.samples.last() {
            if !(t > last.t) {
                return Err(TrajectoryError::NonIncreasing { t, last: last.t });
            }
        }
        self.samples.push(Sample { t, point });
        Ok(())
    }

    /// Replaces the point of the most recent sample, keeping its time.
    pub fn replace_last(&mut self, point: RelaxedPoint) {
        if let Some(last) = self.samples.last_mut() {
            last.point = point;
        }
    }

    pub fn push_transition(&mut self, record: TransitionRecord) {
        self.transitions.push(record);
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    pub fn last_point(&self) -> Option<&RelaxedPoint> {
        self.samples.last().map(|s| &s.point)
    }

    pub fn transition_times(&self) -> Vec<f64> {
        self.transitions.iter().map(|r| r.t).collect()
    }

    pub fn edge_sequence(&self) -> Vec<EdgeId> {
        self.transitions.iter().map(|r| r.edge).collect()
    }

    /// `(t, coords()[i])` at every stored sample.
    pub fn component(&self, i: usize) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|s| s.point.coords().get(i).map(|&v| (s.t, v)))
            .collect()
    }

    /// Point at time `t`.
    ///
    /// Linear interpolation between stored samples within a mode or strip.
    /// At a stored transition time the post-transition point is returned;
    /// just before it, the segment interpolates toward the transition's
    /// pre-point.
    pub fn eval(&self, t: f64, rsys: &RelaxedSystem) -> Result<RelaxedPoint, TrajectoryError> {
        let (start, end) = match (self.start_time(), self.end_time()) {
            (Some(s), Some(e)) => (s, e),
            _ => return Err(TrajectoryError::Empty),
        };
        let slack = 1e-12 * (1.0 + end.abs());
        if !(t >= start - slack && t <= end + slack) {
            return Err(TrajectoryError::OutOfRange { t, start, end });
        }
        let k = self.samples.partition_point(|s| s.t <= t);
        if k == 0 {
            return Ok(self.samples[0].point.clone());
        }
        let left = &self.samples[k - 1];
        if left.t == t || k == self.samples.len() {
            return Ok(left.point.clone());
        }
        let right_sample = &self.samples[k];
        let i = self.transitions.partition_point(|r| r.t < right_sample.t);
        let right = match self.transitions.get(i) {
            Some(r) if r.t == right_sample.t => &r.pre,
            _ => &right_sample.point,
        };
        let s = (t - left.t) / (right_sample.t - left.t);
        Ok(interpolate(&left.point, right, s, t, rsys))
    }
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
}

fn interpolate(
    a: &RelaxedPoint,
    b: &RelaxedPoint,
    s: f64,
    t: f64,
    rsys: &RelaxedSystem,
) -> RelaxedPoint {
    use RelaxedPoint::*;
    match (a, b) {
        (Interior { mode: ma, x: xa }, Interior { mode: mb, x: xb }) if ma == mb => Interior {
            mode: *ma,
            x: lerp(xa, xb, s),
        },
        (
            Strip {
                edge: ea,
                zeta: za,
                tau: ta,
            },
            Strip {
                edge: eb,
                zeta: zb,
                tau: tb,
            },
        ) if ea == eb => Strip {
            edge: *ea,
            zeta: lerp(za, zb, s),
            tau: ta + s * (tb - ta),
        },
        // Step that lands inside a strip: interpolate in the ambient
        // coordinates of the source mode and classify the result.
        (Interior { mode, x }, Strip { edge, zeta, tau })
            if rsys.base().edge(*edge).source == *mode =>
        {
            let far = rsys.strip_ambient(*edge, zeta, *tau);
            let y = lerp(x, &far, s);
            let u = rsys.base().control_midpoint();
            match rsys.classify(*mode, t, &y, &u) {
                Ok(Classification::Interior) | Ok(Classification::Outside) | Err(_) => Interior {
                    mode: *mode,
                    x: y,
                },
                Ok(Classification::Strip(_)) => match rsys.strip_coordinates(*edge, &y) {
                    Ok((z, tau)) => Strip {
                        edge: *edge,
                        zeta: z,
                        tau: tau.clamp(0.0, rsys.eps()),
                    },
                    Err(_) => Interior { mode: *mode, x: y },
                },
            }
        }
        _ => a.clone(),
    }
}
