//! Guard relaxation: every guard `G_e` is thickened into a strip
//! `G_e x [0, eps]` crossed at unit speed, after which the reset fires.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{EdgeId, HybridSystem, ModeId, Retraction};

/// A point of the relaxed state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RelaxedPoint {
    Interior { mode: ModeId, x: Vec<f64> },
    /// `zeta` is a guard point in the ambient coordinates of the source mode,
    /// `tau` the transverse coordinate in `[0, eps]`.
    Strip { edge: EdgeId, zeta: Vec<f64>, tau: f64 },
}

impl RelaxedPoint {
    pub fn interior(mode: ModeId, x: Vec<f64>) -> Self {
        Self::Interior { mode, x }
    }

    /// Ambient coordinates: `x` for interior points, `zeta` for strip points.
    pub fn coords(&self) -> &[f64] {
        match self {
            Self::Interior { x, .. } => x,
            Self::Strip { zeta, .. } => zeta,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self {
            Self::Interior { .. } => None,
            Self::Strip { tau, .. } => Some(*tau),
        }
    }

    /// Mode whose coordinates `coords()` are expressed in.
    pub fn mode(&self, sys: &HybridSystem) -> ModeId {
        match self {
            Self::Interior { mode, .. } => *mode,
            Self::Strip { edge, .. } => sys.edge(*edge).source,
        }
    }
}

/// Strip membership of a point that landed past a guard.
#[derive(Debug, Clone, PartialEq)]
pub struct StripHit {
    pub edge: EdgeId,
    pub zeta: Vec<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    Interior,
    /// Candidate strips in ascending edge order; more than one when the point
    /// lies past overlapping guards.
    Strip(Vec<StripHit>),
    Outside,
}

impl Classification {
    pub fn is_outside(&self) -> bool {
        matches!(self, Self::Outside)
    }

    /// Lowest-index strip candidate.
    pub fn primary(&self) -> Option<&StripHit> {
        match self {
            Self::Strip(hits) => hits.first(),
            _ => None,
        }
    }
}

/// The relaxation of a hybrid system for a fixed strip width.
#[derive(Debug, Clone)]
pub struct RelaxedSystem {
    base: Arc<HybridSystem>,
    eps: f64,
}

/// Builds the relaxation of `sys` with strip width `eps`.
/// Retraction of `x` onto the guard of `e`, returning `(zeta, tau)`.
pub fn retract(sys: &HybridSystem, e: EdgeId, x: &[f64]) -> Result<(Vec<f64>, f64), ModelError> {
    let edge = sys.edge(e);
    match &edge.guard.retraction {
        Retraction::Custom(f) => Ok(f(x)),
        Retraction::Gradient => {
            let c = &sys.mode(edge.source).domain.constraints[edge.guard.constraint];
            let value = c.eval(x);
            let grad = c.gradient(x);
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            let norm = norm2.sqrt();
            if !(norm >= 1e-12) {
                return Err(ModelError::DegenerateGuard { edge: e, norm });
            }
            let zeta = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi - value * gi / norm2)
                .collect();
            Ok((zeta, value / norm))
        }
    }
}

pub fn relax(sys: Arc<HybridSystem>, eps: f64) -> Result<RelaxedSystem, ModelError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ModelError::InvalidParameter(format!(
            "relaxation width must be positive, got {eps}"
        )));
    }
    Ok(RelaxedSystem { base: sys, eps })
}

impl RelaxedSystem {
    pub fn base(&self) -> &HybridSystem {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<HybridSystem> {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Strip coordinates `(zeta, tau)` of `x` relative to the guard of `e`.
    pub fn strip_coordinates(&self, e: EdgeId, x: &[f64]) -> Result<(Vec<f64>, f64), ModelError> {
        retract(&self.base, e, x)
    }

    /// Ambient point `zeta + tau n` in source coordinates, where `n` is the
    /// outward unit normal of the guard constraint at `zeta`.
    pub fn strip_ambient(&self, e: EdgeId, zeta: &[f64], tau: f64) -> Vec<f64> {
        let sys = &*self.base;
        let edge = sys.edge(e);
        let c = &sys.mode(edge.source).domain.constraints[edge.guard.constraint];
        let grad = c.gradient(zeta);
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return zeta.to_vec();
        }
        zeta.iter()
            .zip(&grad)
            .map(|(z, g)| z + tau * g / norm)
            .collect()
    }

    /// Classifies an ambient point of mode `j` as interior, in one or more
    /// strips, or outside the relaxed domain.
    pub fn classify(
        &self,
        j: ModeId,
        t: f64,
        x: &[f64],
        u: &[f64],
    ) -> Result<Classification, ModelError> {
        self.classify_inner(j, t, x, u, false)
    }

    /// Like [`classify`](Self::classify), but points sitting on an active
    /// guard (`|c| <= tol`) also count as strip points with `tau = 0`. Used
    /// for points produced by a reset, which may already lie on a guard of the
    /// target mode.
    pub fn classify_entry(
        &self,
        j: ModeId,
        t: f64,
        x: &[f64],
        u: &[f64],
    ) -> Result<Classification, ModelError> {
        self.classify_inner(j, t, x, u, true)
    }

    fn classify_inner(
        &self,
        j: ModeId,
        t: f64,
        x: &[f64],
        u: &[f64],
        with_contact: bool,
    ) -> Result<Classification, ModelError> {
        let sys = &*self.base;
        sys.check_dim(j, x)?;
        let tol = sys.tol.domain;
        let domain = &sys.mode(j).domain;
        let values: Vec<f64> = domain.constraints.iter().map(|c| c.eval(x)).collect();
        if values.iter().any(|v| v.is_nan()) {
            return Ok(Classification::Outside);
        }
        let mut hits = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            if v > tol {
                let start = hits.len();
                for edge in sys.guards_on_constraint(j, i) {
                    let (zeta, tau) = self.strip_coordinates(edge.id, x)?;
                    if tau > 0.0 && tau <= self.eps && (edge.guard.activation)(t, &zeta, u) {
                        hits.push(StripHit {
                            edge: edge.id,
                            zeta,
                            tau,
                        });
                    }
                }
                if hits.len() == start {
                    return Ok(Classification::Outside);
                }
            } else if with_contact && v.abs() <= sys.tol.guard {
                for edge in sys.guards_on_constraint(j, i) {
                    let (zeta, tau) = self.strip_coordinates(edge.id, x)?;
                    if (edge.guard.activation)(t, &zeta, u) {
                        hits.push(StripHit {
                            edge: edge.id,
                            zeta,
                            tau: tau.clamp(0.0, self.eps),
                        });
                    }
                }
            }
        }
        if hits.is_empty() {
            return Ok(Classification::Interior);
        }
        hits.sort_by_key(|h| h.edge);
        Ok(Classification::Strip(hits))
    }

    /// Relaxed vector field. Interior points follow `f_j`; strip points
    /// return `(0, ..., 0, 1)`: `zeta` frozen, `tau` advancing at unit rate.
    pub fn vector_field(&self, p: &RelaxedPoint, t: f64, u: &[f64]) -> Vec<f64> {
        match p {
            RelaxedPoint::Interior { mode, x } => self.base.field(*mode, t, x, u),
            RelaxedPoint::Strip { zeta, .. } => {
                let mut v = vec![0.0; zeta.len() + 1];
                v[zeta.len()] = 1.0;
                v
            }
        }
    }

    /// Reset applied at the far side `(zeta, eps)` of the strip of `e`.
    pub fn reset(&self, e: EdgeId, zeta: &[f64]) -> Result<(ModeId, Vec<f64>), ModelError> {
        self.base.apply_reset(e, zeta)
    }
}
