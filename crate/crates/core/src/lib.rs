//! Generalisation experiments on contextual MDPs: Explore-Go rollout
//! collection, count-based exploration, DQN and PPO learners, and a tabular
//! oracle used for ground-truth metrics.

pub mod agents;
pub mod collector;
pub mod config;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod explore;
pub mod metrics;
pub mod neural;
pub mod oracle;
pub mod plot;
pub mod seed;
pub mod transition;

pub use error::{Error, Result};
