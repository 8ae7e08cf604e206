//! Learning, correcting and executing dynamical movement primitives, plus a
//! small recurrent classifier for contact transients in joint torques.
//!
//! Everything here is pure computation on in-memory data and builds without
//! `std`; file formats and the command-line front end live in the `dmpkit`
//! crate.

#![no_std]

extern crate alloc;

pub mod control;
pub mod correction;
pub mod dmp;
mod linalg;
mod math;
pub mod rnn;
pub mod sim;
pub mod trajectory;

pub use control::{coupled_step, delay_margin, ControlOutput, Controller, CoupledState, Gains};
pub use correction::{find_split, merge, merge_and_refit, smooth_prefix, CorrectionInput, MergeResult};
pub use dmp::{Dmp, DmpParts, DmpState, FitConfig};
pub use sim::{run_scenario, NoiseConfig, Perturbation, Scenario, ScenarioResult};
pub use trajectory::{Trajectory, TrajectoryError};
