//! Simulation of controlled hybrid systems by guard relaxation.
//!
//! Guards are thickened into strips of width `eps` that are crossed at unit
//! speed before the reset fires, so a fixed-step integrator with step halving
//! can approximate executions without event detection. Distances between
//! states and trajectories are measured in the hybrid quotient space, where
//! every guard point is glued to its reset image.

pub mod benchmarks;
pub mod error;
pub mod integrators;
pub mod io;
pub mod metric;
pub mod model;
pub mod relaxation;
pub mod sampling;
pub mod simulator;
pub mod trajectory;

pub use error::ModelError;
pub use integrators::Integrator;
pub use model::{ControlSignal, EdgeId, HybridSystem, ModeId};
pub use relaxation::{relax, RelaxedPoint, RelaxedSystem};
pub use simulator::{simulate, SimConfig, SimResult, Termination};
pub use trajectory::Trajectory;
