//! 2.5D navigation stack for differential-drive robots on uneven terrain.
//!
//! The crate is organized around a pipeline of independent modules:
//!
//! - [`grid`] — the 2.5D elevation grid (height + variance per cell),
//!   procedural terrain generators and file I/O.
//! - [`mapping`] — builds the elevation grid from depth point clouds with a
//!   per-cell Kalman update, plus footprint filling under the robot.
//! - [`terrain`] — traversability probabilities, blocked/inflated masks,
//!   distance fields, and footprint plane-fit primitives (slope, roughness).
//! - [`planner`] — any-angle global planning (Theta*) with an 8-connected A*
//!   baseline on the binarized traversability mask.
//! - [`mppi`] — the sampling-based local controller with terrain-aware cost
//!   functions (Slope-Traversability and Slope-Roughness).
//! - [`sim`] — deterministic closed-loop episodes: kinematic robot, synthetic
//!   depth camera, hazard checks and outcome adjudication.
//! - [`bench`] — seeded scenario generation, batch benchmark execution and
//!   report emission.
//!
//! Everything is deterministic under a fixed seed: episodes replay
//! bit-identically, and suite runs produce identical per-task outcomes
//! whether executed serially or on a worker pool.

pub mod bench;
pub mod geom;
pub mod grid;
pub mod mapping;
pub mod mppi;
pub mod planner;
pub mod sim;
pub mod terrain;

pub use grid::{CellData, ElevationGrid, GridError, MapSpec};
pub use mapping::{MeasurementModel, PointCloud};
pub use mppi::{ControlInput, MppiConfig, MppiController, RobotState, Trajectory};
pub use planner::GridPath;
pub use sim::{EpisodeOutcome, EpisodeResult, Scenario};
pub use terrain::{PlaneFit, TraversabilityConfig, TraversabilityGrid};
