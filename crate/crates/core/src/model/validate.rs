//! Sampled proxies for the well-posedness assumptions on a hybrid system.

use serde::Serialize;

use super::{EdgeId, HybridSystem, ModeId};
use crate::sampling::{guard_samples, halton_in_box};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub subject: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub system: String,
    pub samples: usize,
    pub checks: Vec<Check>,
    /// Sampled Lipschitz estimate per mode.
    pub lipschitz_estimates: Vec<f64>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn check(name: &str, subject: String, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        subject,
        passed,
        detail,
    }
}

/// Runs the sampled model checks with `samples` points per mode and per guard.
pub fn validate_system(sys: &HybridSystem, samples: usize) -> ValidationReport {
    let samples = samples.max(1);
    let mut checks = Vec::new();
    let mut lipschitz_estimates = Vec::new();
    let u = sys.control_midpoint();
    let tol = sys.tol.domain;

    for (j, mode) in sys.modes().iter().enumerate() {
        let subject = format!("{} ({})", ModeId(j), mode.name);
        let domain = &mode.domain;
        let points: Vec<Vec<f64>> = (1..=samples as u64)
            .map(|i| halton_in_box(i, &domain.bbox))
            .collect();

        let inside = points
            .iter()
            .filter(|p| domain.max_violation(p) <= tol)
            .count();
        checks.push(check(
            "domain-nonempty",
            subject.clone(),
            inside > 0,
            format!("{inside}/{samples} box samples inside the domain"),
        ));

        let finite_constraints = points
            .iter()
            .all(|p| domain.constraints.iter().all(|c| c.eval(p).is_finite()));
        checks.push(check(
            "constraints-finite",
            subject.clone(),
            finite_constraints,
            "constraint values on the bounding box".into(),
        ));

        let mut bad_field = None;
        let mut lipschitz: f64 = 0.0;
        let diam = domain
            .bbox
            .iter()
            .map(|(lo, hi)| (hi - lo).powi(2))
            .sum::<f64>()
            .sqrt()
            .max(1.0);
        let delta = 1e-6 * diam;
        for (k, p) in points.iter().enumerate() {
            let f = mode.field.eval(0.0, p, &u);
            if f.len() != domain.dim || f.iter().any(|v| !v.is_finite()) {
                bad_field = Some(k);
                break;
            }
            // Perturb along a deterministic direction.
            let dir = halton_in_box(k as u64 + 7, &vec![(-1.0, 1.0); domain.dim]);
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-12);
            let q: Vec<f64> = p.iter().zip(&dir).map(|(x, d)| x + delta * d / norm).collect();
            let fq = mode.field.eval(0.0, &q, &u);
            let df = f
                .iter()
                .zip(&fq)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            lipschitz = lipschitz.max(df / delta);
        }
        checks.push(check(
            "field-finite",
            subject.clone(),
            bad_field.is_none(),
            match bad_field {
                Some(k) => format!("non-finite or wrong-dimension output at sample {k}"),
                None => format!("{samples} samples finite"),
            },
        ));
        if let Some(declared) = mode.field.lipschitz {
            checks.push(check(
                "lipschitz-declared",
                subject.clone(),
                lipschitz <= declared * (1.0 + 1e-6) + 1e-9,
                format!("estimate {lipschitz:e}, declared {declared:e}"),
            ));
        }
        lipschitz_estimates.push(lipschitz);
    }

    for edge in sys.edges() {
        let e: EdgeId = edge.id;
        let subject = format!("{e} ({} -> {})", edge.source, edge.target);
        let pts = guard_samples(sys, e, samples.min(256));
        checks.push(check(
            "guard-sampled",
            subject.clone(),
            !pts.is_empty(),
            format!("{} guard points", pts.len()),
        ));
        let c = &sys.mode(edge.source).domain.constraints[edge.guard.constraint];
        let off = pts.iter().map(|p| c.eval(p).abs()).fold(0.0, f64::max);
        checks.push(check(
            "guard-on-boundary",
            subject.clone(),
            off <= sys.tol.guard,
            format!("max |c| on guard samples {off:e}"),
        ));
        let mut worst = f64::NEG_INFINITY;
        let mut images = Vec::with_capacity(pts.len());
        for p in &pts {
            let img = (edge.reset.map)(p);
            let v = if img.len() == sys.dim(edge.target) {
                sys.mode(edge.target).domain.max_violation(&img)
            } else {
                f64::INFINITY
            };
            worst = worst.max(v);
            images.push(img);
        }
        checks.push(check(
            "reset-into-target",
            subject.clone(),
            pts.is_empty() || worst <= tol,
            format!("max target-constraint value {worst:e}"),
        ));
        let mut reset_lip: f64 = 0.0;
        for k in 1..pts.len() {
            let dx = dist(&pts[k], &pts[k - 1]);
            if dx > 1e-12 && images[k].len() == images[k - 1].len() {
                reset_lip = reset_lip.max(dist(&images[k], &images[k - 1]) / dx);
            }
        }
        checks.push(check(
            "reset-continuity",
            subject,
            reset_lip.is_finite(),
            format!("sampled Lipschitz estimate {reset_lip:e}"),
        ));
    }

    ValidationReport {
        system: sys.name.clone(),
        samples,
        checks,
        lipschitz_estimates,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
