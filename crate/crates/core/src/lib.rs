//! Planning toolkit for long-horizon mobile pick-up tasks.
//!
//! The pipeline partitions a 2D occupancy grid into symbolic locations around
//! objects, ranks candidate symbolic state spaces by sampled action
//! feasibility, optimizes robot standing poses with CMA-ES against plan
//! utility, and evaluates plans by Monte-Carlo execution under actuation
//! noise.
//!
//! Module map:
//! - [`world`]: grid maps, scenarios, chairs, navigation path lengths.
//! - [`feasibility`]: motion/task-level feasibility and the weighted sampler.
//! - [`partition`]: object-centric Voronoi partition and merged candidates.
//! - [`taskplan`]: goto/pickup schemas and sequence enumeration.
//! - [`cmaes`]: ask/tell CMA-ES.
//! - [`planner`]: utility model, grounding, and the planner modes.
//! - [`executor`]: stochastic execution and batch evaluation.
//! - [`pnm`]: PGM/PPM export of fields and partitions.

pub mod cmaes;
pub mod executor;
pub mod feasibility;
pub mod partition;
pub mod planner;
pub mod pnm;
pub mod seeds;
pub mod taskplan;
pub mod world;

pub use world::{ObjectId, Pose2D};
