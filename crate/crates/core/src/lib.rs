//! Capability-conditioned goal-directedness evaluation.
//!
//! Agents act in a stochastic Blocksworld on composite tasks and on isolated
//! capability subtasks. Subtask results form a [`mc::CapabilityProfile`];
//! Monte Carlo simulation turns that profile into the return a fully
//! goal-directed agent with the same capabilities would reach, and
//! [`stats::gd`] places the agent's actual return between the random
//! baseline (0) and that optimum (1).
//!
//! The Monte Carlo and bootstrap loops run on rayon when the `parallel`
//! feature is enabled (the default); see [`exec`].

pub mod agents;
pub mod env;
pub mod exec;
pub mod harness;
pub mod mc;
pub mod partition;
pub mod rng;
pub mod stats;
pub mod tasks;

pub use env::{Action, ActionKind, BlockId, NoiseConfig, Observation, WorldState};
pub use partition::Configuration;
pub use tasks::TaskId;
