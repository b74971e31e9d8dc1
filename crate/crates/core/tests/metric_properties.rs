use std::sync::{Arc, LazyLock};

use hysim_core::benchmarks::nav::{nav_system, run_nav_ic, NavInstance};
use hysim_core::benchmarks::oscillator::{oscillator_system, OscillatorParams};
use hysim_core::metric::{strip_distance, QuotientGraph, Space};
use hysim_core::sampling::guard_samples;
use hysim_core::{relax, EdgeId, HybridSystem, ModeId, RelaxedPoint, SimConfig};
use proptest::prelude::*;

const EPS: f64 = 1e-2;
const TOL: f64 = 1e-9;

struct Graphs {
    sys: Arc<HybridSystem>,
    base: QuotientGraph,
    base_fine: QuotientGraph,
    relaxed: QuotientGraph,
}

static OSC: LazyLock<Graphs> = LazyLock::new(|| {
    let sys = Arc::new(oscillator_system(&OscillatorParams::example2()).unwrap());
    Graphs {
        base: QuotientGraph::new(sys.clone(), Space::Base, 8).unwrap(),
        base_fine: QuotientGraph::new(sys.clone(), Space::Base, 16).unwrap(),
        relaxed: QuotientGraph::new(sys.clone(), Space::Relaxed { eps: EPS }, 8).unwrap(),
        sys,
    }
});

/// Detour bound for paths forced through the nearest guard sample: twice
/// the largest gap between consecutive samples on each side of the reset.
static SAMPLE_RESOLUTION: LazyLock<f64> = LazyLock::new(|| {
    let sys = &OSC.sys;
    let v_hi = sys.mode(ModeId(0)).domain.bbox[1].1;
    let mut vs: Vec<f64> = guard_samples(sys, EdgeId(0), 8).iter().map(|g| g[1]).collect();
    vs.extend([0.0, v_hi]);
    vs.sort_by(f64::total_cmp);
    let gap = vs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    2.0 * gap * (1.0 + OscillatorParams::example2().c)
});

/// Maps unit-square coordinates into the oscillator bounding box.
fn osc_point(s: (f64, f64)) -> RelaxedPoint {
    let bbox = &OSC.sys.mode(ModeId(0)).domain.bbox;
    let x = bbox[0].0 + s.0 * (bbox[0].1 - bbox[0].0);
    let v = bbox[1].0 + s.1 * (bbox[1].1 - bbox[1].0);
    RelaxedPoint::interior(ModeId(0), vec![x, v])
}

fn unit() -> impl Strategy<Value = (f64, f64)> {
    (0.0f64..=1.0, 0.0f64..=1.0)
}

fn relaxed_point() -> impl Strategy<Value = RelaxedPoint> {
    prop_oneof![
        unit().prop_map(osc_point),
        (0.0f64..=1.0, 0.0f64..=EPS).prop_map(|(s, tau)| {
            let x_max = OSC.sys.mode(ModeId(0)).domain.bbox[0].1;
            let v_hi = OSC.sys.mode(ModeId(0)).domain.bbox[1].1;
            RelaxedPoint::Strip { edge: EdgeId(0), zeta: vec![x_max, s * v_hi], tau }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn base_distance_is_symmetric(a in unit(), b in unit()) {
        let (p, q) = (osc_point(a), osc_point(b));
        let (d1, d2) = (OSC.base.distance(&p, &q).value, OSC.base.distance(&q, &p).value);
        prop_assert!((d1 - d2).abs() <= TOL, "{d1} vs {d2}");
    }

    #[test]
    fn base_triangle_inequality(a in unit(), b in unit(), c in unit()) {
        let (p, q, r) = (osc_point(a), osc_point(b), osc_point(c));
        let g = &OSC.base;
        let lhs = g.distance(&p, &r).value;
        let rhs = g.distance(&p, &q).value + g.distance(&q, &r).value;
        prop_assert!(lhs <= rhs + TOL, "{lhs} > {rhs}");
    }

    #[test]
    fn relaxed_distance_axioms_on_interior_points(a in unit(), b in unit(), c in unit()) {
        let (p, q, r) = (osc_point(a), osc_point(b), osc_point(c));
        let g = &OSC.relaxed;
        let pq = g.distance(&p, &q).value;
        prop_assert!((pq - g.distance(&q, &p).value).abs() <= TOL);
        prop_assert!(g.distance(&p, &r).value <= pq + g.distance(&q, &r).value + TOL);
    }

    /// A strip point joins the graph through its own guard point, which is
    /// not a node for other queries, so the triangle inequality holds only
    /// up to the spacing of the guard samples.
    #[test]
    fn relaxed_distance_axioms_with_strip_points(p in relaxed_point(), q in relaxed_point(), r in relaxed_point()) {
        let g = &OSC.relaxed;
        let pq = g.distance(&p, &q).value;
        prop_assert!((pq - g.distance(&q, &p).value).abs() <= TOL);
        prop_assert!(g.distance(&p, &p).value.abs() <= TOL);
        let excess = g.distance(&p, &r).value - pq - g.distance(&q, &r).value;
        prop_assert!(excess <= *SAMPLE_RESOLUTION, "excess {excess} > {}", *SAMPLE_RESOLUTION);
    }

    #[test]
    fn distinct_unglued_points_are_separated(a in unit(), b in unit()) {
        let (p, q) = (osc_point(a), osc_point(b));
        let gap = ((p.coords()[0] - q.coords()[0]).powi(2) + (p.coords()[1] - q.coords()[1]).powi(2)).sqrt();
        prop_assume!(gap > 1e-6);
        prop_assert!(OSC.base.distance(&p, &q).value > 0.0);
    }

    #[test]
    fn relaxed_dominates_base_by_at_most_k_eps(a in unit(), b in unit()) {
        let (p, q) = (osc_point(a), osc_point(b));
        let d = OSC.base.distance(&p, &q).value;
        let de = OSC.relaxed.distance(&p, &q);
        prop_assert!(de.value >= d - TOL, "{} < {d}", de.value);
        prop_assert!(de.value - d <= de.resets as f64 * EPS + TOL, "{} - {d} with {} resets", de.value, de.resets);
    }

    #[test]
    fn refining_guard_samples_never_lengthens(a in unit(), b in unit()) {
        let (p, q) = (osc_point(a), osc_point(b));
        let coarse = OSC.base.distance(&p, &q).value;
        let fine = OSC.base_fine.distance(&p, &q).value;
        prop_assert!(fine <= coarse + TOL, "{fine} > {coarse}");
    }

    #[test]
    fn strip_distance_dominates_guard_separation(
        z1 in prop::collection::vec(-5.0f64..5.0, 2),
        z2 in prop::collection::vec(-5.0f64..5.0, 2),
        t1 in 0.0f64..0.1,
        t2 in 0.0f64..0.1,
    ) {
        let euclid = ((z1[0] - z2[0]).powi(2) + (z1[1] - z2[1]).powi(2)).sqrt();
        let at_zero = strip_distance(EdgeId(0), (&z1, 0.0), EdgeId(0), (&z2, 0.0)).unwrap();
        prop_assert!(at_zero >= euclid - 1e-12);
        let d = strip_distance(EdgeId(0), (&z1, t1), EdgeId(0), (&z2, t2)).unwrap();
        prop_assert!(d >= euclid + (t1 - t2).abs() - 1e-12);
    }
}

#[test]
fn guard_points_are_glued_to_their_images() {
    let x_max = OSC.sys.mode(ModeId(0)).domain.bbox[0].1;
    for v in [0.0, 0.3, 1.7, 4.0] {
        let g = vec![x_max, v];
        let (_, img) = OSC.sys.apply_reset(EdgeId(0), &g).unwrap();
        let p = RelaxedPoint::interior(ModeId(0), g.clone());
        let q = RelaxedPoint::interior(ModeId(0), img);
        let d = OSC.base.distance_with_hints(&p, &q, &[(EdgeId(0), g)]);
        assert!(d.value.abs() <= TOL, "v = {v}: {}", d.value);
        assert!(v == 0.0 || d.resets >= 1);
    }
}

#[test]
fn navigation_runs_are_continuous_across_cells() {
    let nav = nav_system(&NavInstance::instance_a()).unwrap();
    let eps = 1e-3;
    let rsys = relax(nav.system.clone(), eps).unwrap();
    let graph = QuotientGraph::new(nav.system.clone(), Space::Base, 4).unwrap();
    let cfg = SimConfig::new(0.05, eps, 10.0);
    let traj = hysim_core::simulate(
        &rsys,
        nav.mode_at(0.5, 0.5),
        &[0.5, 0.5, 0.3, 0.15],
        &hysim_core::ControlSignal::zero(Vec::new()).unwrap(),
        &cfg,
    )
    .unwrap()
    .trajectory;
    assert!(!traj.transitions().is_empty());
    for r in traj.transitions() {
        // Identity resets: the image coincides with the crossing point.
        assert_eq!(r.pre.coords(), r.post.coords());
        let pre = RelaxedPoint::interior(r.pre.mode(&nav.system), r.pre.coords().to_vec());
        let d = graph.distance_with_hints(&pre, &r.post, &[(r.edge, r.pre.coords().to_vec())]);
        assert!(d.value <= TOL, "jump {} at t = {}", d.value, r.t);
    }
    // The per-IC driver used by verification agrees with the direct run.
    let ic = run_nav_ic(&nav, [0.5, 0.5, 0.3, 0.15], &SimConfig::new(0.05, eps, 30.0)).unwrap();
    assert!(ic.transitions >= traj.transitions().len());
}
