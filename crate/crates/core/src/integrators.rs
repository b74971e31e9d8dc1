//! Fixed-step explicit one-step integrators.
//!
//! The control value is held constant across a step; only the time argument
//! of the field advances through the stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("vector field returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("unknown integrator '{0}' (expected euler, midpoint or rk4)")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    Midpoint,
    Rk4,
}

impl Integrator {
    pub const ALL: [Integrator; 3] = [Integrator::Euler, Integrator::Midpoint, Integrator::Rk4];

    pub fn order(self) -> u32 {
        match self {
            Self::Euler => 1,
            Self::Midpoint => 2,
            Self::Rk4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Midpoint => "midpoint",
            Self::Rk4 => "rk4",
        }
    }

    /// One step of size `h` from `(t, x)` with control frozen at `u`.
    ///
    /// `f(t, x, u, out)` writes the field value into `out`.
    pub fn step<F>(self, f: F, t: f64, x: &[f64], u: &[f64], h: f64) -> Result<Vec<f64>, IntegratorError>
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]),
    {
        if !(h > 0.0) {
            return Err(IntegratorError::NonPositiveStep(h));
        }
        let n = x.len();
        let eval = |t: f64, y: &[f64], out: &mut [f64]| -> Result<(), IntegratorError> {
            f(t, y, u, out);
            if out.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(IntegratorError::NonFinite { t })
            }
        };
        let axpy = |y: &[f64], a: f64, k: &[f64]| -> Vec<f64> {
            y.iter().zip(k).map(|(yi, ki)| yi + a * ki).collect()
        };
        let mut k1 = vec![0.0; n];
        eval(t, x, &mut k1)?;
        let out = match self {
            Self::Euler => axpy(x, h, &k1),
            Self::Midpoint => {
                let mut k2 = vec![0.0; n];
                eval(t + 0.5 * h, &axpy(x, 0.5 * h, &k1), &mut k2)?;
                axpy(x, h, &k2)
            }
            Self::Rk4 => {
                let mut k2 = vec![0.0; n];
                let mut k3 = vec![0.0; n];
                let mut k4 = vec![0.0; n];
                eval(t + 0.5 * h, &axpy(x, 0.5 * h, &k1), &mut k2)?;
                eval(t + 0.5 * h, &axpy(x, 0.5 * h, &k2), &mut k3)?;
                eval(t + h, &axpy(x, h, &k3), &mut k4)?;
                (0..n)
                    .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect()
            }
        };
        Ok(out)
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Integrator {
    type Err = IntegratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "forward-euler" => Ok(Self::Euler),
            "midpoint" | "rk2" => Ok(Self::Midpoint),
            "rk4" | "classical-rk4" => Ok(Self::Rk4),
            _ => Err(IntegratorError::Unknown(s.to_string())),
        }
    }
}
