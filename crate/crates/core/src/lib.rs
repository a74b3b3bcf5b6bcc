//! Trace-driven cloud-autoscaling workbench: simulated environments with an
//! exact front-loaded billing model, a threshold baseline, tabular
//! Q-learning, DQN and dueling double DQN agents, weight transfer between
//! simulators, and paired statistical comparison of runs.

pub mod agents;
pub mod billing;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod trace;

pub use error::{Error, Result};
