//! Controlled hybrid systems in a computable form.
//!
//! A system is a finite set of modes, each with a domain given as an
//! intersection of sublevel sets `{x : c_i(x) <= 0}`, a controlled vector
//! field, and a set of outgoing edges. Every edge carries a guard (the zero
//! set of one of the source mode's constraints, restricted by an activation
//! predicate) and a reset map into the target mode.

mod control;
mod validate;

pub use control::ControlSignal;
pub use validate::{validate_system, Check, ValidationReport};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Default membership and guard tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Index of a discrete mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeId(pub usize);

/// Index of an edge. Parallel edges between the same pair of modes are allowed
/// and distinguished only by this index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ActivationFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> bool + Send + Sync>;
pub type ResetFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Custom guard retraction: maps an ambient point past the guard to its guard
/// point and transverse depth.
pub type RetractFn = Arc<dyn Fn(&[f64]) -> (Vec<f64>, f64) + Send + Sync>;
/// Supplies `n` points on a guard, nested in `n` (the first `n` points of a
/// request for `2n` are the points of a request for `n`).
pub type GuardSamplerFn = Arc<dyn Fn(usize) -> Vec<Vec<f64>> + Send + Sync>;

/// A scalar constraint `c(x) <= 0` with an optional analytic gradient.
#[derive(Clone)]
pub struct Constraint {
    value: ScalarFn,
    gradient: Option<GradientFn>,
}

impl Constraint {
    pub fn new(value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
        }
    }

    /// `w . x + b <= 0`.
    pub fn affine(w: Vec<f64>, b: f64) -> Self {
        let grad = w.clone();
        Self::with_gradient(
            move |x| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b,
            move |_| grad.clone(),
        )
    }

    /// `x[i] <= bound`.
    pub fn upper(dim: usize, i: usize, bound: f64) -> Self {
        let mut w = vec![0.0; dim];
        w[i] = 1.0;
        Self::affine(w, -bound)
    }

    /// `x[i] >= bound`.
    pub fn lower(dim: usize, i: usize, bound: f64) -> Self {
        let mut w = vec![0.0; dim];
        w[i] = -1.0;
        Self::affine(w, bound)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    /// Analytic gradient when supplied, central differences otherwise.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let step = 1e-7 * x[i].abs().max(1.0);
                probe[i] = x[i] + step;
                let fp = (self.value)(&probe);
                probe[i] = x[i] - step;
                let fm = (self.value)(&probe);
                probe[i] = x[i];
                (fp - fm) / (2.0 * step)
            })
            .collect()
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint")
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Domain `{x in R^n : c_i(x) <= 0 for all i}` inside a declared bounding box.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub dim: usize,
    pub constraints: Vec<Constraint>,
    /// Declared by the modeler; governs whether Euclidean intra-domain
    /// distances are exact or only lower bounds.
    pub convex: bool,
    pub bbox: Vec<(f64, f64)>,
}

impl DomainSpec {
    pub fn new(dim: usize, bbox: Vec<(f64, f64)>) -> Self {
        Self {
            dim,
            constraints: Vec::new(),
            convex: true,
            bbox,
        }
    }

    pub fn constraint(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn convex(mut self, convex: bool) -> Self {
        self.convex = convex;
        self
    }

    /// Largest constraint value; `<= 0` means inside.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.eval(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// How strip coordinates are computed for points that land past a guard.
#[derive(Clone, Default)]
pub enum Retraction {
    /// First-order retraction along the constraint gradient:
    /// `zeta = x - c(x) grad c / |grad c|^2`, `tau = c(x) / |grad c|`.
    #[default]
    Gradient,
    Custom(RetractFn),
}

/// Guard of an edge: the zero set of one source-mode constraint intersected
/// with an activation predicate.
#[derive(Clone)]
pub struct GuardSpec {
    pub constraint: usize,
    pub activation: ActivationFn,
    pub retraction: Retraction,
    pub sampler: Option<GuardSamplerFn>,
}

impl GuardSpec {
    pub fn new(constraint: usize) -> Self {
        Self {
            constraint,
            activation: Arc::new(|_, _, _| true),
            retraction: Retraction::Gradient,
            sampler: None,
        }
    }

    pub fn activation(
        mut self,
        f: impl Fn(f64, &[f64], &[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.activation = Arc::new(f);
        self
    }

    pub fn retraction(
        mut self,
        f: impl Fn(&[f64]) -> (Vec<f64>, f64) + Send + Sync + 'static,
    ) -> Self {
        self.retraction = Retraction::Custom(Arc::new(f));
        self
    }

    pub fn sampler(mut self, f: impl Fn(usize) -> Vec<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.sampler = Some(Arc::new(f));
        self
    }
}

#[derive(Clone)]
pub struct ResetSpec {
    pub map: ResetFn,
}

impl ResetSpec {
    pub fn new(map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { map: Arc::new(map) }
    }

    pub fn identity() -> Self {
        Self::new(|x| x.to_vec())
    }
}

#[derive(Clone)]
pub struct VectorFieldSpec {
    pub f: FieldFn,
    /// Declared Lipschitz constant. Metadata only.
    pub lipschitz: Option<f64>,
}

impl VectorFieldSpec {
    pub fn new(f: impl Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            lipschitz: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(|_, _, _, out| out.iter_mut().for_each(|v| *v = 0.0))
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        (self.f)(t, x, u, &mut out);
        out
    }
}

#[derive(Clone)]
pub struct Edge {
    pub id: EdgeId,
    pub source: ModeId,
    pub target: ModeId,
    pub guard: GuardSpec,
    pub reset: ResetSpec,
}

#[derive(Clone)]
pub struct Mode {
    pub name: String,
    pub domain: DomainSpec,
    pub field: VectorFieldSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub domain: f64,
    pub guard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            domain: DEFAULT_TOL,
            guard: DEFAULT_TOL,
        }
    }
}

/// An immutable controlled hybrid system.
#[derive(Clone)]
pub struct HybridSystem {
    pub name: String,
    modes: Vec<Mode>,
    edges: Vec<Edge>,
    control_range: Vec<(f64, f64)>,
    /// Outgoing edges per mode, ascending by index.
    neighborhoods: Vec<Vec<EdgeId>>,
    pub tol: Tolerances,
}

impl fmt::Debug for HybridSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridSystem")
            .field("name", &self.name)
            .field("modes", &self.modes.len())
            .field("edges", &self.edges.len())
            .finish()
    }
}

impl HybridSystem {
    pub fn builder(name: impl Into<String>) -> HybridSystemBuilder {
        HybridSystemBuilder {
            name: name.into(),
            modes: Vec::new(),
            edges: Vec::new(),
            control_range: Vec::new(),
            tol: Tolerances::default(),
        }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, j: ModeId) -> &Mode {
        &self.modes[j.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn control_range(&self) -> &[(f64, f64)] {
        &self.control_range
    }

    pub fn control_dim(&self) -> usize {
        self.control_range.len()
    }

    pub fn dim(&self, j: ModeId) -> usize {
        self.modes[j.0].domain.dim
    }

    /// Outgoing edges `N_j` in ascending index order.
    pub fn neighborhood(&self, j: ModeId) -> &[EdgeId] {
        &self.neighborhoods[j.0]
    }

    /// Edges of mode `j` whose guard lives on constraint `i`.
    pub fn guards_on_constraint(&self, j: ModeId, i: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.neighborhoods[j.0]
            .iter()
            .map(move |e| &self.edges[e.0])
            .filter(move |e| e.guard.constraint == i)
    }

    pub fn check_mode(&self, j: ModeId) -> Result<(), ModelError> {
        if j.0 >= self.modes.len() {
            return Err(ModelError::InvalidIndex(format!("mode {j}")));
        }
        Ok(())
    }

    pub fn check_dim(&self, j: ModeId, x: &[f64]) -> Result<(), ModelError> {
        self.check_mode(j)?;
        let expected = self.dim(j);
        if x.len() != expected {
            return Err(ModelError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `x in D_j` up to the domain tolerance.
    pub fn domain_contains(&self, j: ModeId, x: &[f64]) -> Result<bool, ModelError> {
        self.check_dim(j, x)?;
        let tol = self.tol.domain;
        Ok(self.modes[j.0]
            .domain
            .constraints
            .iter()
            .all(|c| c.eval(x) <= tol))
    }

    /// Edges of `N_j` whose guard holds at `(t, x, u)`, ascending by index.
    pub fn active_guards(
        &self,
        j: ModeId,
        t: f64,
        x: &[f64],
        u: &[f64],
    ) -> Result<Vec<EdgeId>, ModelError> {
        self.check_dim(j, x)?;
        let domain = &self.modes[j.0].domain;
        Ok(self.neighborhoods[j.0]
            .iter()
            .copied()
            .filter(|e| {
                let guard = &self.edges[e.0].guard;
                domain.constraints[guard.constraint].eval(x).abs() <= self.tol.guard
                    && (guard.activation)(t, x, u)
            })
            .collect())
    }

    /// Applies `R_e` and checks the image lies in the target domain.
    pub fn apply_reset(&self, e: EdgeId, x: &[f64]) -> Result<(ModeId, Vec<f64>), ModelError> {
        let edge = self
            .edges
            .get(e.0)
            .ok_or_else(|| ModelError::InvalidIndex(format!("edge {e}")))?;
        self.check_dim(edge.source, x)?;
        let image = (edge.reset.map)(x);
        self.check_dim(edge.target, &image)?;
        let violation = self.modes[edge.target.0].domain.max_violation(&image);
        if violation > self.tol.domain {
            return Err(ModelError::ResetOutsideDomain {
                edge: e,
                violation,
            });
        }
        Ok((edge.target, image))
    }

    /// Evaluates `f_j(t, x, u)`.
    pub fn field(&self, j: ModeId, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.modes[j.0].field.eval(t, x, u)
    }

    /// Midpoint of the control range, used wherever a representative control
    /// value is needed (guard sampling, validation).
    pub fn control_midpoint(&self) -> Vec<f64> {
        self.control_range
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

pub struct HybridSystemBuilder {
    name: String,
    modes: Vec<Mode>,
    edges: Vec<(ModeId, ModeId, GuardSpec, ResetSpec)>,
    control_range: Vec<(f64, f64)>,
    tol: Tolerances,
}

impl HybridSystemBuilder {
    pub fn control_range(mut self, range: Vec<(f64, f64)>) -> Self {
        self.control_range = range;
        self
    }

    pub fn tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn add_mode(
        &mut self,
        name: impl Into<String>,
        domain: DomainSpec,
        field: VectorFieldSpec,
    ) -> ModeId {
        self.modes.push(Mode {
            name: name.into(),
            domain,
            field,
        });
        ModeId(self.modes.len() - 1)
    }

    pub fn add_edge(
        &mut self,
        source: ModeId,
        target: ModeId,
        guard: GuardSpec,
        reset: ResetSpec,
    ) -> EdgeId {
        self.edges.push((source, target, guard, reset));
        EdgeId(self.edges.len() - 1)
    }

    pub fn build(self) -> Result<HybridSystem, ModelError> {
        let n_modes = self.modes.len();
        if n_modes == 0 {
            return Err(ModelError::InvalidParameter("system has no modes".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if m.domain.dim == 0 {
                return Err(ModelError::InvalidParameter(format!("mode {i} has dimension 0")));
            }
            if m.domain.bbox.len() != m.domain.dim {
                return Err(ModelError::DimensionMismatch {
                    expected: m.domain.dim,
                    got: m.domain.bbox.len(),
                });
            }
            if m.domain.bbox.iter().any(|(lo, hi)| !(lo <= hi)) {
                return Err(ModelError::InvalidParameter(format!(
                    "mode {i} has an empty bounding box"
                )));
            }
        }
        for (lo, hi) in &self.control_range {
            if !(lo <= hi) {
                return Err(ModelError::InvalidParameter("empty control range".into()));
            }
        }
        let mut neighborhoods = vec![Vec::new(); n_modes];
        let mut edges = Vec::with_capacity(self.edges.len());
        for (k, (source, target, guard, reset)) in self.edges.into_iter().enumerate() {
            if source.0 >= n_modes || target.0 >= n_modes {
                return Err(ModelError::InvalidIndex(format!(
                    "edge {k} connects {source} -> {target} but there are {n_modes} modes"
                )));
            }
            if guard.constraint >= self.modes[source.0].domain.constraints.len() {
                return Err(ModelError::InvalidIndex(format!(
                    "edge {k} references constraint {} of {source}",
                    guard.constraint
                )));
            }
            neighborhoods[source.0].push(EdgeId(k));
            edges.push(Edge {
                id: EdgeId(k),
                source,
                target,
                guard,
                reset,
            });
        }
        Ok(HybridSystem {
            name: self.name,
            modes: self.modes,
            edges,
            control_range: self.control_range,
            neighborhoods,
            tol: self.tol,
        })
    }
}
