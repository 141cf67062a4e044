//! Deterministic desk-scale simulator for a multi-mode planetary rover
//! navigation stack and a small multi-robot coordination layer.
//!
//! The crate is organised around the data flow of the onboard stack:
//!
//! - [`terrain`]: procedural heightmaps, hazard placement, and cell labels
//! - [`perception`]: a statistical far-obstacle detector with confidence scores
//! - [`travmap`]: a log-odds traversability grid fused from detections
//! - [`gnc`]: navigation modes, speed policy, and the grid path planner
//! - [`rover`]: unicycle kinematics, pure-pursuit tracking, point turns
//! - [`coord`]: discrete-event message bus, emergency pipeline, task allocation
//! - [`harness`]: scenario files, the tick loop, event logs, metrics, sweeps
//!
//! Every stochastic path is driven by a seedable RNG; a (scenario, seed) pair
//! reproduces byte-identical event logs.

pub mod coord;
pub mod error;
pub mod geom;
pub mod gnc;
pub mod harness;
pub mod perception;
pub mod rover;
pub mod terrain;
pub mod travmap;

pub use error::{Error, Result};
