use crate::envs::{ActionId, Env, Observation, UnderlyingState};

/// One environment step as stored in replay buffers and rollouts.
///
/// Observations are not stored: encodings are deterministic and injective in
/// the underlying state, so [`Transition::observation`] recomputes them on
/// demand. This keeps full-scale replay buffers in memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: UnderlyingState,
    pub action: ActionId,
    pub reward: f64,
    pub intrinsic: f64,
    pub next_state: UnderlyingState,
    /// Goal reached (no bootstrapping).
    pub done: bool,
    /// Episode hit its step limit on this transition (bootstrapping continues).
    pub truncated: bool,
    /// Collected during an Explore-Go pure-exploration phase.
    pub pure_exploration: bool,
    /// Synthesised from the oracle rather than collected by a worker.
    pub injected: bool,
}

impl Transition {
    pub fn observation(&self, env: &Env) -> Observation {
        env.encode(&self.state)
    }

    pub fn next_observation(&self, env: &Env) -> Observation {
        env.encode(&self.next_state)
    }
}
