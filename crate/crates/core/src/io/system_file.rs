//! JSON system descriptions built from a registry of named building blocks.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    Constraint, DomainSpec, GuardSpec, HybridSystem, ModeId, ResetSpec, VectorFieldSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintRef {
    /// `w . x - b <= 0`.
    Affine { w: Vec<f64>, b: f64 },
    /// `x[index] <= bound`.
    Upper { index: usize, bound: f64 },
    /// `x[index] >= bound`.
    Lower { index: usize, bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldRef {
    Zero,
    Constant { value: Vec<f64> },
    /// `A x + b`.
    Linear { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// `A x + B u + b`.
    LinearControl {
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        bu: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// Damped forced oscillator on `(x, v)`; input `u[0]` adds to the force.
    Oscillator {
        a: f64,
        omega: f64,
        #[serde(default)]
        forcing_amp: f64,
        #[serde(default)]
        forcing_freq: f64,
        #[serde(default = "one")]
        mass: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationRef {
    #[default]
    Always,
    CoordNonneg { index: usize },
    CoordNonpos { index: usize },
    /// `w . x - b >= 0`.
    AffineNonneg { w: Vec<f64>, b: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResetRef {
    #[default]
    Identity,
    /// `A x + b`.
    Linear { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// Negates and scales one coordinate: `x[index] -> -restitution x[index]`.
    Impact { index: usize, restitution: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDesc {
    pub name: String,
    pub dim: usize,
    pub bbox: Vec<[f64; 2]>,
    #[serde(default)]
    pub convex: bool,
    pub constraints: Vec<ConstraintRef>,
    pub field: FieldRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDesc {
    pub source: usize,
    pub target: usize,
    pub constraint: usize,
    #[serde(default)]
    pub activation: ActivationRef,
    #[serde(default)]
    pub reset: ResetRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub name: String,
    #[serde(default)]
    pub control_range: Vec<[f64; 2]>,
    pub modes: Vec<ModeDesc>,
    #[serde(default)]
    pub edges: Vec<EdgeDesc>,
    /// Optional default start for command-line runs.
    #[serde(default)]
    pub initial_mode: usize,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
}

fn bad(msg: String) -> ModelError {
    ModelError::InvalidParameter(msg)
}

fn check_matrix(a: &[Vec<f64>], rows: usize, cols: usize, what: &str) -> Result<(), ModelError> {
    if a.len() != rows || a.iter().any(|r| r.len() != cols) {
        return Err(bad(format!("{what} must be {rows}x{cols}")));
    }
    Ok(())
}

fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

impl ConstraintRef {
    fn build(&self, dim: usize) -> Result<Constraint, ModelError> {
        match self {
            Self::Affine { w, b } => {
                if w.len() != dim {
                    return Err(bad(format!("affine constraint needs {dim} weights")));
                }
                Ok(Constraint::affine(w.clone(), *b))
            }
            Self::Upper { index, bound } | Self::Lower { index, bound } if *index >= dim => {
                Err(bad(format!("constraint index {index} (bound {bound}) outside dimension {dim}")))
            }
            Self::Upper { index, bound } => Ok(Constraint::upper(dim, *index, *bound)),
            Self::Lower { index, bound } => Ok(Constraint::lower(dim, *index, *bound)),
        }
    }
}

impl FieldRef {
    fn build(&self, dim: usize, m: usize) -> Result<VectorFieldSpec, ModelError> {
        Ok(match self {
            Self::Zero => VectorFieldSpec::zero(),
            Self::Constant { value } => {
                if value.len() != dim {
                    return Err(bad(format!("constant field needs {dim} entries")));
                }
                let v = value.clone();
                VectorFieldSpec::new(move |_, _, _, out| out.copy_from_slice(&v)).with_lipschitz(0.0)
            }
            Self::Linear { a, b } => {
                check_matrix(a, dim, dim, "A")?;
                if b.len() != dim {
                    return Err(bad(format!("offset needs {dim} entries")));
                }
                let (a, b) = (a.clone(), b.clone());
                VectorFieldSpec::new(move |_, x, _, out| {
                    for ((o, ax), bi) in out.iter_mut().zip(mat_vec(&a, x)).zip(&b) {
                        *o = ax + bi;
                    }
                })
            }
            Self::LinearControl { a, bu, b } => {
                check_matrix(a, dim, dim, "A")?;
                check_matrix(bu, dim, m, "B")?;
                if b.len() != dim {
                    return Err(bad(format!("offset needs {dim} entries")));
                }
                let (a, bu, b) = (a.clone(), bu.clone(), b.clone());
                VectorFieldSpec::new(move |_, x, u, out| {
                    let ax = mat_vec(&a, x);
                    let bx = mat_vec(&bu, u);
                    for i in 0..out.len() {
                        out[i] = ax[i] + bx[i] + b[i];
                    }
                })
            }
            Self::Oscillator {
                a,
                omega,
                forcing_amp,
                forcing_freq,
                mass,
            } => {
                if dim != 2 || m < 1 {
                    return Err(bad("oscillator field needs a 2-D mode and a 1-D input".into()));
                }
                let (a, w2, amp, freq, mass) = (*a, omega * omega, *forcing_amp, *forcing_freq, *mass);
                VectorFieldSpec::new(move |t, x, u, out| {
                    out[0] = x[1];
                    out[1] = (amp * (freq * t).cos() + u[0]) / mass - 2.0 * a * x[1] - w2 * x[0];
                })
            }
        })
    }
}

impl ActivationRef {
    fn build(&self, dim: usize) -> Result<impl Fn(f64, &[f64], &[f64]) -> bool + Send + Sync + 'static, ModelError> {
        match self {
            Self::CoordNonneg { index } | Self::CoordNonpos { index } if *index >= dim => {
                return Err(bad(format!("activation index {index} outside dimension {dim}")))
            }
            Self::AffineNonneg { w, .. } if w.len() != dim => {
                return Err(bad(format!("activation needs {dim} weights")))
            }
            _ => {}
        }
        let this = self.clone();
        Ok(move |_: f64, x: &[f64], _: &[f64]| match &this {
            ActivationRef::Always => true,
            ActivationRef::CoordNonneg { index } => x[*index] >= 0.0,
            ActivationRef::CoordNonpos { index } => x[*index] <= 0.0,
            ActivationRef::AffineNonneg { w, b } => w.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - b >= 0.0,
        })
    }
}

impl ResetRef {
    fn build(&self, src: usize, dst: usize) -> Result<ResetSpec, ModelError> {
        Ok(match self {
            Self::Identity => {
                if src != dst {
                    return Err(bad(format!("identity reset between dimensions {src} and {dst}")));
                }
                ResetSpec::identity()
            }
            Self::Linear { a, b } => {
                check_matrix(a, dst, src, "reset matrix")?;
                if b.len() != dst {
                    return Err(bad(format!("reset offset needs {dst} entries")));
                }
                let (a, b) = (a.clone(), b.clone());
                ResetSpec::new(move |x| mat_vec(&a, x).into_iter().zip(&b).map(|(p, q)| p + q).collect())
            }
            Self::Impact { index, restitution } => {
                if src != dst || *index >= src {
                    return Err(bad(format!("impact reset index {index} invalid")));
                }
                let (i, c) = (*index, *restitution);
                ResetSpec::new(move |x| {
                    let mut y = x.to_vec();
                    y[i] = -c * y[i];
                    y
                })
            }
        })
    }
}

impl SystemFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn build(&self) -> Result<HybridSystem, ModelError> {
        let m = self.control_range.len();
        let mut b = HybridSystem::builder(self.name.clone())
            .control_range(self.control_range.iter().map(|[lo, hi]| (*lo, *hi)).collect());
        for mode in &self.modes {
            if mode.bbox.len() != mode.dim {
                return Err(bad(format!("mode '{}' bounding box needs {} intervals", mode.name, mode.dim)));
            }
            let mut domain = DomainSpec::new(mode.dim, mode.bbox.iter().map(|[lo, hi]| (*lo, *hi)).collect())
                .convex(mode.convex);
            for c in &mode.constraints {
                domain = domain.constraint(c.build(mode.dim)?);
            }
            b.add_mode(mode.name.clone(), domain, mode.field.build(mode.dim, m)?);
        }
        for e in &self.edges {
            let dim = |j: usize| {
                self.modes
                    .get(j)
                    .map(|md| md.dim)
                    .ok_or_else(|| ModelError::InvalidIndex(format!("mode {j}")))
            };
            let (src, dst) = (dim(e.source)?, dim(e.target)?);
            b.add_edge(
                ModeId(e.source),
                ModeId(e.target),
                GuardSpec::new(e.constraint).activation(e.activation.build(src)?),
                e.reset.build(src, dst)?,
            );
        }
        b.build()
    }
}
