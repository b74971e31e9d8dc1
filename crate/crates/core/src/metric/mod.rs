//! Length metrics on the hybrid quotient space and its relaxation.
//!
//! The induced length distance is approximated by shortest paths on a graph
//! whose nodes are guard samples, their reset images and the query points.
//! Within a mode nodes are joined by straight segments; a reset edge joins each
//! guard sample to its image at cost 0 (base space) or `eps` (relaxed space,
//! the minimal strip crossing).

mod graph;

pub use graph::{Bound, Distance, QuotientGraph, Space};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EdgeId;
use crate::relaxation::{RelaxedPoint, RelaxedSystem};
use crate::trajectory::{Trajectory, TrajectoryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("curve mixes modes or strips: expected {expected}, found {found}")]
    MixedModes { expected: String, found: String },
    #[error("points lie on different strips ({0} vs {1})")]
    MismatchedEdges(EdgeId, EdgeId),
    #[error("empty sample set")]
    Empty,
    #[error("need at least 2 guard samples, got {0}")]
    TooFewSamples(usize),
    #[error("trajectory does not cover the horizon {horizon}: {source}")]
    Horizon {
        horizon: f64,
        #[source]
        source: TrajectoryError,
    },
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Length of a polyline inside one mode.
pub fn curve_length(points: &[RelaxedPoint]) -> Result<f64, MetricError> {
    let Some(first) = points.first() else {
        return Ok(0.0);
    };
    let RelaxedPoint::Interior { mode, .. } = first else {
        return Err(MetricError::MixedModes {
            expected: "interior points".into(),
            found: "strip point".into(),
        });
    };
    let mut len = 0.0;
    for w in points.windows(2) {
        match (&w[0], &w[1]) {
            (RelaxedPoint::Interior { x: a, .. }, RelaxedPoint::Interior { mode: m, x: b })
                if m == mode && a.len() == b.len() =>
            {
                len += euclidean(a, b)
            }
            (_, other) => {
                return Err(MetricError::MixedModes {
                    expected: mode.to_string(),
                    found: format!("{other:?}"),
                })
            }
        }
    }
    Ok(len)
}

/// Strip metric: distance along the guard plus transverse separation.
/// Euclidean along the guard, which is the intrinsic distance for hyperplane guards.
pub fn strip_distance(
    e: EdgeId,
    a: (&[f64], f64),
    f: EdgeId,
    b: (&[f64], f64),
) -> Result<f64, MetricError> {
    if e != f {
        return Err(MetricError::MismatchedEdges(e, f));
    }
    Ok(euclidean(a.0, b.0) + (a.1 - b.1).abs())
}

/// Shortest-path approximation of the induced length distance.
pub fn quotient_distance(graph: &QuotientGraph, p: &RelaxedPoint, q: &RelaxedPoint) -> Distance {
    graph.distance(p, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistance {
    pub value: f64,
    /// Time at which the supremum was attained on the evaluation grid.
    pub argmax: f64,
    pub bound: Bound,
    pub evaluations: usize,
}

/// Sup over time of the quotient distance between two trajectories.
///
/// Evaluated on `grid` uniform samples of `[0, horizon]` plus every transition
/// time of either trajectory inside the horizon. At each time the guard
/// points of the transitions of either trajectory just before and after it
/// join the graph, so that points on opposite sides of a reset are compared
/// through the guard point actually crossed rather than the nearest sample.
pub fn trajectory_distance(
    graph: &QuotientGraph,
    rsys: &RelaxedSystem,
    a: &Trajectory,
    b: &Trajectory,
    horizon: f64,
    grid: usize,
) -> Result<TrajectoryDistance, MetricError> {
    for tr in [a, b] {
        let end = tr.end_time().ok_or(MetricError::Empty)?;
        if end < horizon - 1e-12 * (1.0 + horizon) {
            return Err(MetricError::Horizon {
                horizon,
                source: TrajectoryError::OutOfRange {
                    t: horizon,
                    start: tr.start_time().unwrap_or(0.0),
                    end,
                },
            });
        }
    }
    let grid = grid.max(1);
    let mut times: Vec<f64> = (0..=grid)
        .map(|k| horizon * k as f64 / grid as f64)
        .collect();
    times.extend(
        a.transition_times()
            .into_iter()
            .chain(b.transition_times())
            .filter(|&t| (0.0..=horizon).contains(&t)),
    );
    times.sort_by(f64::total_cmp);
    times.dedup();

    let guard_points = |tr: &Trajectory| -> Vec<(f64, EdgeId, Vec<f64>)> {
        tr.transitions()
            .iter()
            .map(|r| (r.t, r.edge, r.pre.coords().to_vec()))
            .collect()
    };
    let (ga, gb) = (guard_points(a), guard_points(b));
    let hints_at = |t: f64| -> Vec<(EdgeId, Vec<f64>)> {
        let mut out = Vec::new();
        for g in [&ga, &gb] {
            let k = g.partition_point(|r| r.0 <= t);
            for r in g[k.saturating_sub(1)..(k + 1).min(g.len())].iter() {
                out.push((r.1, r.2.clone()));
            }
        }
        out
    };

    let values: Vec<(f64, Distance)> = times
        .par_iter()
        .map(|&t| -> Result<(f64, Distance), MetricError> {
            let pa = a.eval(t, rsys).map_err(|source| MetricError::Horizon { horizon, source })?;
            let pb = b.eval(t, rsys).map_err(|source| MetricError::Horizon { horizon, source })?;
            Ok((t, graph.distance_with_hints(&pa, &pb, &hints_at(t))))
        })
        .collect::<Result<_, _>>()?;

    let mut best = TrajectoryDistance {
        value: 0.0,
        argmax: 0.0,
        bound: graph.bound(),
        evaluations: values.len(),
    };
    for (t, d) in values {
        if d.value > best.value || d.value.is_nan() {
            best.value = d.value;
            best.argmax = t;
        }
    }
    Ok(best)
}

/// Maximum absolute position error against a reference at the sample times.
pub fn rho_hat(samples: &[(f64, f64)], reference: impl Fn(f64) -> f64) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(samples
        .iter()
        .map(|&(t, z)| (z - reference(t)).abs())
        .fold(0.0, f64::max))
}

/// Serializable record of one metric evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pair: (String, String),
    pub value: f64,
    pub bound: Bound,
    pub n_g: usize,
}

impl MetricReport {
    pub fn new(graph: &QuotientGraph, labels: (String, String), d: &Distance) -> Self {
        Self {
            pair: labels,
            value: d.value,
            bound: d.bound,
            n_g: graph.samples_per_guard(),
        }
    }
}

pub fn point_label(p: &RelaxedPoint) -> String {
    match p {
        RelaxedPoint::Interior { mode, x } => format!("{mode}:{x:?}"),
        RelaxedPoint::Strip { edge, zeta, tau } => format!("{edge}:{zeta:?}@{tau}"),
    }
}
