use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{euclidean, strip_distance, MetricError};
use crate::model::{EdgeId, HybridSystem, ModeId};
use crate::relaxation::{RelaxedPoint, RelaxedSystem};
use crate::sampling::guard_samples;

/// Which quotient space distances are measured in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    Base,
    Relaxed { eps: f64 },
}

/// How a reported distance relates to the true induced length distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// Length of a realizable connected curve (all domains convex).
    Upper,
    /// Some domain is not convex, so straight segments may leave it.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    pub bound: Bound,
    /// Number of reset edges on the returned shortest path.
    pub resets: usize,
}

struct Anchor {
    mode: ModeId,
    x: Vec<f64>,
    cost: f64,
    resets: usize,
}

/// Guard-sampled graph approximating the hybrid quotient space.
pub struct QuotientGraph {
    sys: Arc<HybridSystem>,
    space: Space,
    n_g: usize,
    modes: Vec<ModeId>,
    coords: Vec<Vec<f64>>,
    partner: Vec<usize>,
    by_mode: Vec<Vec<usize>>,
    bound: Bound,
}

impl QuotientGraph {
    /// Samples `n_g` points on every guard and links each to its reset image.
    pub fn new(sys: Arc<HybridSystem>, space: Space, n_g: usize) -> Result<Self, MetricError> {
        if n_g < 2 {
            return Err(MetricError::TooFewSamples(n_g));
        }
        let mut modes = Vec::new();
        let mut coords = Vec::new();
        let mut partner = Vec::new();
        let mut by_mode = vec![Vec::new(); sys.modes().len()];
        for edge in sys.edges() {
            for g in guard_samples(&sys, edge.id, n_g) {
                let image = (edge.reset.map)(&g);
                if image.len() != sys.dim(edge.target) {
                    continue;
                }
                let a = coords.len();
                modes.push(edge.source);
                coords.push(g);
                by_mode[edge.source.0].push(a);
                modes.push(edge.target);
                coords.push(image);
                by_mode[edge.target.0].push(a + 1);
                partner.push(a + 1);
                partner.push(a);
            }
        }
        let bound = if sys.modes().iter().all(|m| m.domain.convex) {
            Bound::Upper
        } else {
            Bound::Lower
        };
        Ok(Self {
            sys,
            space,
            n_g,
            modes,
            coords,
            partner,
            by_mode,
            bound,
        })
    }

    /// Graph for the relaxed quotient space of `rsys`.
    pub fn relaxed(rsys: &RelaxedSystem, n_g: usize) -> Result<Self, MetricError> {
        Self::new(rsys.base_arc().clone(), Space::Relaxed { eps: rsys.eps() }, n_g)
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn samples_per_guard(&self) -> usize {
        self.n_g
    }

    pub fn bound(&self) -> Bound {
        self.bound
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    fn reset_cost(&self) -> f64 {
        match self.space {
            Space::Base => 0.0,
            Space::Relaxed { eps } => eps,
        }
    }

    /// Entry points of a query point: itself plus, for points on an active
    /// guard, the identified reset image.
    fn anchors(&self, p: &RelaxedPoint) -> Vec<Anchor> {
        let sys = &*self.sys;
        let reset_cost = self.reset_cost();
        let u = sys.control_midpoint();
        match p {
            RelaxedPoint::Interior { mode, x } => {
                let mut out = vec![Anchor {
                    mode: *mode,
                    x: x.clone(),
                    cost: 0.0,
                    resets: 0,
                }];
                if let Ok(active) = sys.active_guards(*mode, 0.0, x, &u) {
                    for e in active {
                        let edge = sys.edge(e);
                        let image = (edge.reset.map)(x);
                        if image.len() == sys.dim(edge.target) {
                            out.push(Anchor {
                                mode: edge.target,
                                x: image,
                                cost: reset_cost,
                                resets: 1,
                            });
                        }
                    }
                }
                out
            }
            RelaxedPoint::Strip { edge, zeta, tau } => {
                let edge = sys.edge(*edge);
                let (near, far) = match self.space {
                    Space::Base => (0.0, 0.0),
                    Space::Relaxed { eps } => (*tau, (eps - tau).max(0.0)),
                };
                let mut out = vec![Anchor {
                    mode: edge.source,
                    x: zeta.clone(),
                    cost: near,
                    resets: 0,
                }];
                let image = (edge.reset.map)(zeta);
                if image.len() == sys.dim(edge.target) {
                    out.push(Anchor {
                        mode: edge.target,
                        x: image,
                        cost: far,
                        resets: 1,
                    });
                }
                out
            }
        }
    }

    /// Shortest-path distance between two points of the quotient space.
    /// Returns `+inf` when no connecting path exists at this sampling.
    pub fn distance(&self, p: &RelaxedPoint, q: &RelaxedPoint) -> Distance {
        self.distance_with_hints(p, q, &[])
    }

    /// As [`Self::distance`], with extra guard points `(edge, zeta)` glued to
    /// their reset images for this query only. Hints that are not on an
    /// active guard, or whose image leaves the target domain, are ignored.
    pub fn distance_with_hints(&self, p: &RelaxedPoint, q: &RelaxedPoint, hints: &[(EdgeId, Vec<f64>)]) -> Distance {
        let mut best = f64::INFINITY;
        let mut best_resets = 0;
        if let (
            RelaxedPoint::Strip { edge: e, zeta: za, tau: ta },
            RelaxedPoint::Strip { edge: f, zeta: zb, tau: tb },
        ) = (p, q)
        {
            if e == f {
                let (ta, tb) = match self.space {
                    Space::Base => (0.0, 0.0),
                    _ => (*ta, *tb),
                };
                if let Ok(d) = strip_distance(*e, (za, ta), *f, (zb, tb)) {
                    best = d;
                }
            }
        }

        let sys = &*self.sys;
        let u = sys.control_midpoint();
        let sources = self.anchors(p);
        let targets = self.anchors(q);
        // Extra nodes after the fixed graph: sources, targets, then hint pairs.
        let mut extra: Vec<(ModeId, Vec<f64>)> = sources
            .iter()
            .chain(&targets)
            .map(|a| (a.mode, a.x.clone()))
            .collect();
        for (e, zeta) in hints {
            let Some(edge) = sys.edges().get(e.0) else { continue };
            let active = sys
                .active_guards(edge.source, 0.0, zeta, &u)
                .map_or(false, |a| a.contains(e));
            if let (true, Ok((target, image))) = (active, sys.apply_reset(*e, zeta)) {
                extra.push((edge.source, zeta.clone()));
                extra.push((target, image));
            }
        }
        let n = self.coords.len();
        let (s_end, t_end) = (n + sources.len(), n + sources.len() + targets.len());
        let total = n + extra.len();
        let mode_of = |i: usize| if i < n { self.modes[i] } else { extra[i - n].0 };
        let coord_of = |i: usize| -> &[f64] {
            if i < n {
                &self.coords[i]
            } else {
                &extra[i - n].1
            }
        };
        let partner_of = |i: usize| -> Option<usize> {
            if i < n {
                Some(self.partner[i])
            } else if i >= t_end {
                Some(t_end + ((i - t_end) ^ 1))
            } else {
                None
            }
        };
        let mut extra_by_mode: Vec<Vec<usize>> = vec![Vec::new(); self.by_mode.len()];
        for i in n..total {
            if let Some(list) = extra_by_mode.get_mut(mode_of(i).0) {
                list.push(i);
            }
        }

        let mut dist = vec![f64::INFINITY; total];
        let mut resets = vec![0usize; total];
        let mut done = vec![false; total];
        for (k, a) in sources.iter().enumerate() {
            dist[n + k] = a.cost;
            resets[n + k] = a.resets;
        }
        let reset_cost = self.reset_cost();
        loop {
            let mut u = usize::MAX;
            let mut du = f64::INFINITY;
            for i in 0..total {
                if !done[i] && dist[i] < du {
                    du = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX || du >= best {
                break;
            }
            done[u] = true;
            if (s_end..t_end).contains(&u) {
                let t = &targets[u - s_end];
                let cand = du + t.cost;
                if cand < best {
                    best = cand;
                    best_resets = resets[u] + t.resets;
                }
                continue;
            }
            let mu = mode_of(u);
            let xu = coord_of(u);
            let neighbors = self.by_mode[mu.0].iter().chain(&extra_by_mode[mu.0]);
            for &v in neighbors {
                if done[v] || v == u {
                    continue;
                }
                let xv = coord_of(v);
                if xv.len() != xu.len() {
                    continue;
                }
                let nd = du + euclidean(xu, xv);
                if nd < dist[v] {
                    dist[v] = nd;
                    resets[v] = resets[u];
                }
            }
            if let Some(v) = partner_of(u) {
                let nd = du + reset_cost;
                if !done[v] && nd < dist[v] {
                    dist[v] = nd;
                    resets[v] = resets[u] + 1;
                }
            }
        }
        Distance {
            value: best,
            bound: self.bound,
            resets: best_resets,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::toy::{two_interval_system, TOY_GUARD};

    fn toy() -> Arc<HybridSystem> {
        Arc::new(two_interval_system())
    }

    #[test]
    fn hand_computed_toy_distances() {
        let sys = toy();
        let p = RelaxedPoint::interior(ModeId(0), vec![0.5]);
        let q = RelaxedPoint::interior(ModeId(1), vec![2.5]);
        let base = QuotientGraph::new(sys.clone(), Space::Base, 8).unwrap();
        let d = base.distance(&p, &q);
        assert!((d.value - 1.0).abs() < 1e-12);
        assert_eq!(d.resets, 1);
        for eps in [1e-1, 1e-2, 1e-3] {
            let relaxed = QuotientGraph::new(sys.clone(), Space::Relaxed { eps }, 8).unwrap();
            let d = relaxed.distance(&p, &q);
            assert!((d.value - (1.0 + eps)).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_points_and_identified_points() {
        let sys = toy();
        let g = QuotientGraph::new(sys, Space::Base, 4).unwrap();
        let p = RelaxedPoint::interior(ModeId(0), vec![0.3]);
        assert_eq!(g.distance(&p, &p).value, 0.0);
        let guard = RelaxedPoint::interior(ModeId(0), vec![TOY_GUARD]);
        let image = RelaxedPoint::interior(ModeId(1), vec![2.0]);
        assert!(g.distance(&guard, &image).value < 1e-12);
        assert!(g.distance(&image, &guard).value < 1e-12);
    }

    #[test]
    fn strip_points_in_relaxed_space() {
        let sys = toy();
        let eps = 0.1;
        let g = QuotientGraph::new(sys, Space::Relaxed { eps }, 4).unwrap();
        let s = RelaxedPoint::Strip {
            edge: EdgeId(0),
            zeta: vec![1.0],
            tau: 0.04,
        };
        let left = RelaxedPoint::interior(ModeId(0), vec![0.5]);
        let right = RelaxedPoint::interior(ModeId(1), vec![2.5]);
        assert!((g.distance(&left, &s).value - 0.54).abs() < 1e-12);
        assert!((g.distance(&s, &right).value - 0.56).abs() < 1e-12);
        let s2 = RelaxedPoint::Strip {
            edge: EdgeId(0),
            zeta: vec![1.0],
            tau: 0.09,
        };
        assert!((g.distance(&s, &s2).value - 0.05).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            QuotientGraph::new(toy(), Space::Base, 1),
            Err(MetricError::TooFewSamples(1))
        ));
    }

    #[test]
    fn disconnected_is_infinite() {
        use crate::model::{Constraint, DomainSpec, VectorFieldSpec};
        let mut b = HybridSystem::builder("split");
        let d = || {
            DomainSpec::new(1, vec![(0.0, 1.0)])
                .constraint(Constraint::upper(1, 0, 1.0))
                .constraint(Constraint::lower(1, 0, 0.0))
        };
        b.add_mode("a", d(), VectorFieldSpec::zero());
        b.add_mode("b", d(), VectorFieldSpec::zero());
        let sys = Arc::new(b.build().unwrap());
        let g = QuotientGraph::new(sys, Space::Base, 4).unwrap();
        let d = g.distance(
            &RelaxedPoint::interior(ModeId(0), vec![0.5]),
            &RelaxedPoint::interior(ModeId(1), vec![0.5]),
        );
        assert!(d.value.is_infinite());
    }
}
