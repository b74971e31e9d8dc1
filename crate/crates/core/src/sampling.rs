//! Deterministic low-discrepancy sampling of boxes and guards.

use crate::model::{EdgeId, HybridSystem};

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut factor = inv;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv;
    }
    value
}

/// The `index`-th Halton point in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

/// Halton point scaled into an axis-aligned box.
pub fn halton_in_box(index: u64, bbox: &[(f64, f64)]) -> Vec<f64> {
    halton(index, bbox.len())
        .into_iter()
        .zip(bbox)
        .map(|(s, (lo, hi))| lo + s * (hi - lo))
        .collect()
}

/// Newton projection onto the zero set of a constraint.
fn project_to_zero(sys: &HybridSystem, e: EdgeId, mut x: Vec<f64>) -> Option<Vec<f64>> {
    let edge = sys.edge(e);
    let c = &sys.mode(edge.source).domain.constraints[edge.guard.constraint];
    for _ in 0..50 {
        let v = c.eval(&x);
        if v.abs() <= 0.1 * sys.tol.guard {
            return Some(x);
        }
        let g = c.gradient(&x);
        let n2: f64 = g.iter().map(|gi| gi * gi).sum();
        if n2 < 1e-24 {
            return None;
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= v * gi / n2;
        }
    }
    None
}

/// `n` points on the guard of `e`, nested in `n`.
///
/// Uses the guard's own sampler when it has one; otherwise projects a Halton
/// stream over the source bounding box onto the guard constraint and keeps the
/// points that satisfy the other constraints and the activation predicate
/// (evaluated at `t = 0` and the midpoint of the control range).
pub fn guard_samples(sys: &HybridSystem, e: EdgeId, n: usize) -> Vec<Vec<f64>> {
    let edge = sys.edge(e);
    if let Some(sampler) = &edge.guard.sampler {
        return sampler(n);
    }
    let domain = &sys.mode(edge.source).domain;
    let u = sys.control_midpoint();
    let tol = sys.tol.domain;
    let mut out = Vec::with_capacity(n);
    let budget = 256 * n as u64 + 256;
    let mut index = 1u64;
    while out.len() < n && index < budget {
        let x = halton_in_box(index, &domain.bbox);
        index += 1;
        let Some(p) = project_to_zero(sys, e, x) else {
            continue;
        };
        let inside_box = p
            .iter()
            .zip(&domain.bbox)
            .all(|(v, (lo, hi))| *lo - tol <= *v && *v <= *hi + tol);
        let feasible = domain
            .constraints
            .iter()
            .enumerate()
            .all(|(i, c)| i == edge.guard.constraint || c.eval(&p) <= tol);
        if inside_box && feasible && (edge.guard.activation)(0.0, &p, &u) {
            out.push(p);
        }
    }
    out
}
