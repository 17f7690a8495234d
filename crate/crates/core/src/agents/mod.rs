//! Learners: dual-head DQN (extrinsic Q, intrinsic U) and PPO, including the
//! intrinsic-only PPO agent that drives on-policy pure exploration.

mod dqn;
mod ppo;
mod replay;

pub use dqn::{linear_epsilon, DqnAgent, DqnBatch, DqnConfig};
pub use ppo::{PpoAgent, PpoConfig, PpoLosses, PurePpoAgent, Rollout, RolloutStep, Trajectory};
pub use replay::ReplayBuffer;
