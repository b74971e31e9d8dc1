//! Benchmark systems with their oracles.

pub mod nav;
pub mod oscillator;
pub mod pronk;
pub mod toy;

use std::sync::Arc;

use crate::error::ModelError;
use crate::model::{ControlSignal, HybridSystem, ModeId};

/// A ready-to-run system with its default initial condition and horizon.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: Arc<HybridSystem>,
    pub mode: ModeId,
    pub x0: Vec<f64>,
    pub control: ControlSignal,
    pub horizon: f64,
}

pub const BUILTIN_NAMES: [&str; 8] = [
    "oscillator-ex1",
    "oscillator-ex2",
    "oscillator-zeno",
    "nav-a",
    "nav-b",
    "nav-c",
    "pronk",
    "toy-two-interval",
];

/// Built-in scenario by name, or `None` for an unknown name.
pub fn builtin(name: &str) -> Result<Option<Scenario>, ModelError> {
    let osc = |p: oscillator::OscillatorParams| -> Result<Scenario, ModelError> {
        Ok(Scenario {
            system: Arc::new(oscillator::oscillator_system(&p)?),
            mode: ModeId(0),
            x0: p.initial_state(),
            control: ControlSignal::zero(vec![oscillator::CONTROL_RANGE])?,
            horizon: p.t_max,
        })
    };
    let nav = |inst: nav::NavInstance| -> Result<Scenario, ModelError> {
        let ns = nav::nav_system(&inst)?;
        let x0 = [0, 1].map(|i| 0.5 * (inst.x0[i][0] + inst.x0[i][1]));
        let v0 = [0, 1].map(|i| 0.5 * (inst.v0[i][0] + inst.v0[i][1]));
        Ok(Scenario {
            mode: ns.mode_at(x0[0], x0[1]),
            system: ns.system,
            x0: vec![x0[0], x0[1], v0[0], v0[1]],
            control: ControlSignal::zero(Vec::new())?,
            horizon: 30.0,
        })
    };
    let scenario = match name {
        "oscillator-ex1" => osc(oscillator::OscillatorParams::example1())?,
        "oscillator-ex2" => osc(oscillator::OscillatorParams::example2())?,
        "oscillator-zeno" => osc(oscillator::OscillatorParams::zeno())?,
        "nav-a" | "nav-b" | "nav-c" => nav(nav::NavInstance::builtin(name).expect("listed instance"))?,
        "pronk" => {
            let p = pronk::PronkParams::reference();
            Scenario {
                system: Arc::new(pronk::pronk_system(&p)?),
                mode: pronk::AERIAL,
                x0: p.x0.to_vec(),
                control: ControlSignal::zero(Vec::new())?,
                horizon: 1.5,
            }
        }
        "toy-two-interval" => Scenario {
            system: Arc::new(toy::two_interval_system()),
            mode: ModeId(0),
            x0: vec![0.0],
            control: ControlSignal::zero(Vec::new())?,
            horizon: 2.5,
        },
        _ => return Ok(None),
    };
    Ok(Some(scenario))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_starts_in_its_domain() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap().unwrap();
            assert!(s.system.domain_contains(s.mode, &s.x0).unwrap(), "{name}");
            assert_eq!(s.control.dim(), s.system.control_dim(), "{name}");
        }
        assert!(builtin("nope").unwrap().is_none());
    }
}
