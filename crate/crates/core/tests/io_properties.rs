use hysim_core::benchmarks::nav::{nav_system, Label, NavInstance};
use hysim_core::io::{read_trajectory_csv, write_trajectory_csv};
use hysim_core::trajectory::{Trajectory, TrajectoryMeta};
use hysim_core::{EdgeId, ModeId, RelaxedPoint};
use proptest::prelude::*;

fn coordinate() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3f64..1e3,
        (-300i32..300).prop_map(|e| 10f64.powi(e)),
        Just(0.0),
        Just(-0.0),
        Just(1.0 / 3.0),
    ]
}

fn point() -> impl Strategy<Value = RelaxedPoint> {
    prop_oneof![
        (0usize..4, prop::collection::vec(coordinate(), 1..6))
            .prop_map(|(j, x)| RelaxedPoint::interior(ModeId(j), x)),
        (0usize..8, prop::collection::vec(coordinate(), 1..6), 0.0f64..1.0)
            .prop_map(|(e, zeta, tau)| RelaxedPoint::Strip { edge: EdgeId(e), zeta, tau }),
    ]
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    (-10.0f64..10.0, prop::collection::vec((1e-9f64..1.0, point()), 1..40)).prop_map(|(t0, rows)| {
        let mut traj = Trajectory::new(TrajectoryMeta::default());
        let mut t = t0;
        for (dt, p) in rows {
            traj.push(t, p).unwrap();
            t += dt;
        }
        traj
    })
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![
        (0u8..8).prop_map(Label::Index),
        (0u8..8).prop_map(|j| Label::Symbol(j.to_string())),
        Just(Label::Symbol("G".into())),
        Just(Label::Symbol("O".into())),
    ]
}

fn instance() -> impl Strategy<Value = NavInstance> {
    (1usize..5, 1usize..5)
        .prop_flat_map(|(rows, cols)| {
            (
                prop::collection::vec(prop::collection::vec(label(), cols), rows),
                -2.0f64..-0.5,
                -0.3f64..0.3,
                -0.3f64..0.3,
                -2.0f64..-0.5,
            )
        })
        .prop_map(|(grid, a, b, c, d)| NavInstance {
            name: "random".into(),
            grid,
            a: [[a, b], [c, d]],
            x0: [[0.1, 0.4], [0.1, 0.4]],
            v0: [[-0.5, 0.5], [-0.5, 0.5]],
        })
}

proptest! {
    #[test]
    fn trajectory_csv_roundtrips_samples(traj in trajectory()) {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.samples(), traj.samples());
        let mut again = Vec::new();
        write_trajectory_csv(&mut again, &back).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn nav_instances_roundtrip_through_json(inst in instance()) {
        let text = serde_json::to_string(&inst).unwrap();
        let back: NavInstance = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        let nav = nav_system(&back).unwrap();
        prop_assert_eq!(nav.system.modes().len(), inst.grid.len() * inst.grid[0].len());
        prop_assert_eq!(nav.cells, inst.cells().unwrap());
    }
}
