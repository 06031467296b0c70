//! Terrain-aware off-road autonomy built on curvature-binned Koopman models.
//!
//! The crate is organized the way data flows through the stack:
//!
//! * [`terrain`] builds the synchronized height / gradient / cost / mask layers.
//! * [`vehicle`] is the ground-truth simulator used for data collection and
//!   closed-loop evaluation.
//! * [`koopman`] lifts polar poses, bins snapshots by curvature and fits the
//!   gradient-augmented model family with EDMD.
//! * [`planner`] is the Hybrid A* mission planner with terrain-aware edge costs.
//! * [`local`] rolls one candidate per curvature bin and picks the one closest
//!   to the mission plan.
//! * [`mpc`] condenses the lifted dynamics into a box-constrained QP and runs the
//!   receding-horizon control cycle.
//! * [`pipeline`] ties everything into reproducible batch experiments.

pub mod error;
pub mod geometry;
pub mod koopman;
pub mod local;
pub mod mpc;
pub mod pipeline;
pub mod planner;
pub mod terrain;
pub mod vehicle;

pub use error::{Error, Result};
