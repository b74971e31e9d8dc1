//! Two unit intervals `[0, 1]` and `[2, 3]` glued by the reset `1 -> 2`.

use crate::model::{Constraint, DomainSpec, GuardSpec, HybridSystem, ResetSpec, VectorFieldSpec};

/// Position of the single guard point in the first interval.
pub const TOY_GUARD: f64 = 1.0;

/// Unit drift in both intervals; the second has no outgoing edge.
pub fn two_interval_system() -> HybridSystem {
    let interval = |lo: f64, hi: f64| {
        DomainSpec::new(1, vec![(lo, hi)])
            .constraint(Constraint::upper(1, 0, hi))
            .constraint(Constraint::lower(1, 0, lo))
            .convex(true)
    };
    let drift = || VectorFieldSpec::new(|_, _, _, out| out[0] = 1.0).with_lipschitz(0.0);
    let mut b = HybridSystem::builder("toy-two-interval");
    let d1 = b.add_mode("D1", interval(0.0, 1.0), drift());
    let d2 = b.add_mode("D2", interval(2.0, 3.0), drift());
    b.add_edge(
        d1,
        d2,
        GuardSpec::new(0).sampler(|n| vec![vec![TOY_GUARD]; n]),
        ResetSpec::new(|x| vec![x[0] + 1.0]),
    );
    b.build().expect("toy system is well formed")
}
