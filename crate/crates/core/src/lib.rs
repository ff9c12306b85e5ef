//! Hybrid Filippov solutions and their ε-relaxations.
//!
//! Systems are described by [`model::HybridSystem`]. The [`charts`] module
//! builds per-edge coordinate charts of the hybrid quotient space, [`sim`]
//! runs classical executions, hybrid Filippov solutions and relaxed
//! trajectories, and [`sweep`] measures ε-convergence.

pub mod charts;
pub mod error;
pub mod filippov;
pub mod integrate;
pub mod model;
pub mod output;
pub mod relaxation;
pub mod scenario_file;
pub mod scenarios;
pub mod sim;
pub mod sweep;

/// Version tag written into every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

pub use error::{Error, Result};
