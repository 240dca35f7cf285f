//! Stochastic simulation of a dissipative time-crystal clock: a collective
//! spin driven by a classical field and coupled to a thermal bath, with tick
//! statistics, stochastic thermodynamics and drive-noise models on top.

pub mod error;
pub mod harness;
pub mod integrate;
pub mod liouville;
pub mod noise;
pub mod rng;
pub mod spin;
pub mod thermo;
pub mod ticks;
pub mod trajectory;

pub use error::{Error, Result};
pub use liouville::{ness, DensityMatrix, SpectralNess};
pub use rng::StreamId;
pub use spin::{build_operators, ClockParams, CollectiveOps, JumpKind};
pub use trajectory::{DickeState, JumpEvent, Simulator, TrajectoryRecord};
