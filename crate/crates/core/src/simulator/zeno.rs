use serde::{Deserialize, Serialize};

use crate::model::EdgeId;
use crate::trajectory::Trajectory;

/// Number of consecutive flow intervals fitted.
pub const ZENO_WINDOW: usize = 8;
const MIN_R2: f64 = 0.99;

/// Geometric extrapolation of accumulating transition times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZenoEstimate {
    /// Accumulation time on the trajectory clock.
    pub time: f64,
    /// Accumulation time with strip dwell removed, i.e. on the clock of the
    /// unrelaxed execution.
    pub flow_time: f64,
    /// Limit of the post-transition states.
    pub point: Vec<f64>,
    pub edge: EdgeId,
    pub ratio: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln d_k = a + b k`; returns `(b, R^2)`.
fn log_linear_fit(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let ys: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
        syy += (y - ym) * (y - ym);
    }
    let b = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    (b, r2)
}

/// Looks for geometrically shrinking flow time between transitions.
///
/// Scans windows of [`ZENO_WINDOW`] intervals from the end of the trajectory
/// backward and reports the latest window whose log-linear fit has ratio
/// below one and `R^2 > 0.99`. Returns `None` with fewer than
/// `ZENO_WINDOW + 1` transitions.
pub fn detect_zeno(traj: &Trajectory) -> Option<ZenoEstimate> {
    let tr = traj.transitions();
    if tr.len() < ZENO_WINDOW + 1 {
        return None;
    }
    let flow: Vec<f64> = tr
        .windows(2)
        .map(|w| (w[1].t - w[0].t) - w[1].dwell)
        .collect();
    let dwell_before: Vec<f64> = tr
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.dwell;
            Some(*acc)
        })
        .collect();
    for end in (ZENO_WINDOW..=flow.len()).rev() {
        let window = &flow[end - ZENO_WINDOW..end];
        let scale = window.iter().fold(0.0f64, |m, v| m.max(*v));
        if window.iter().any(|&d| !(d > 1e-12 * scale.max(1e-300))) {
            continue;
        }
        let (b, r2) = log_linear_fit(window);
        let ratio = b.exp();
        if !(ratio < 1.0 && r2 > MIN_R2) {
            continue;
        }
        let last = &tr[end];
        let tail = window[ZENO_WINDOW - 1] * ratio / (1.0 - ratio);
        let post = last.post.coords();
        let prev = tr[end - 1].post.coords();
        let gain = ratio / (1.0 - ratio);
        let point = if prev.len() == post.len() {
            post.iter().zip(prev).map(|(p, q)| p + (p - q) * gain).collect()
        } else {
            post.to_vec()
        };
        return Some(ZenoEstimate {
            time: last.t + tail,
            flow_time: last.t - dwell_before[end] + tail,
            point,
            edge: last.edge,
            ratio,
            r2,
        });
    }
    None
}
