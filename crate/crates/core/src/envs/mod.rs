//! Contextual MDPs: the Illustrative Cross and Four Rooms gridworlds.
//!
//! Both environments are deterministic and fully observable. An environment
//! value holds only static configuration; the evolving Markov state lives in
//! [`UnderlyingState`], so stepping is a pure function of `(state, action)`.

mod cross;
mod four_rooms;

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

pub use cross::{gen_cross_context_sets, Arm, CrossAction, CrossContext, CrossEnv, CrossState};
pub use four_rooms::{
    gen_fourrooms_context_sets, FourRoomsContext, FourRoomsEnv, FourRoomsState, Heading,
};

/// Index into an environment's discrete action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(pub usize);

/// RGB triple with components in `[0, 1]`.
///
/// Equality and hashing are bitwise so colours can key count and oracle
/// tables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rgb(pub [f64; 3]);

impl PartialEq for Rgb {
    fn eq(&self, other: &Self) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for Rgb {}

impl Hash for Rgb {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for c in self.0 {
            c.to_bits().hash(state);
        }
    }
}

/// Dense `(channels, height, width)` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub shape: [usize; 3],
    pub data: Vec<f32>,
}

impl Observation {
    pub fn zeros(shape: [usize; 3]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        let [_, h, w] = self.shape;
        self.data[(c * h + y) * w + x]
    }
}

/// An episode's fixed factors. Doubles as the episode's starting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Context {
    Cross(CrossContext),
    FourRooms(FourRoomsContext),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Train,
    ReachableTest,
    UnreachableTest,
}

impl ContextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Train => "train",
            ContextKind::ReachableTest => "reachable_test",
            ContextKind::UnreachableTest => "unreachable_test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSet {
    pub kind: ContextKind,
    pub master_seed: u64,
    pub contexts: Vec<Context>,
}

impl ContextSet {
    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// The env-internal Markov state. Terminal iff the agent stands on the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnderlyingState {
    Cross(CrossState),
    FourRooms(FourRoomsState),
}

impl UnderlyingState {
    pub fn is_terminal(&self) -> bool {
        match self {
            UnderlyingState::Cross(s) => s.is_terminal(),
            UnderlyingState::FourRooms(s) => s.is_terminal(),
        }
    }

    /// Canonical string key, used by the oracle dump.
    ///
    /// Cross: `cross:x,y:r,g,b`; Four Rooms: `fourrooms:x,y,heading:d0,d1,d2,d3:gx,gy`.
    pub fn canonical_key(&self) -> String {
        match self {
            UnderlyingState::Cross(s) => {
                let [r, g, b] = s.background.0;
                format!("cross:{},{}:{},{},{}", s.pos.0, s.pos.1, r, g, b)
            }
            UnderlyingState::FourRooms(s) => format!(
                "fourrooms:{},{},{}:{},{},{},{}:{},{}",
                s.agent_pos.0,
                s.agent_pos.1,
                s.agent_dir as u8,
                s.doorways[0],
                s.doorways[1],
                s.doorways[2],
                s.doorways[3],
                s.goal.0,
                s.goal.1
            ),
        }
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: UnderlyingState,
    pub reward: f64,
    /// Goal reached. Timeouts are tracked by the caller, not here.
    pub done: bool,
}

/// A deterministic finite MDP, the interface the oracle enumerates over.
pub trait DeterministicMdp {
    type State: Clone + Eq + Hash;

    fn action_count(&self) -> usize;
    fn is_terminal(&self, s: &Self::State) -> bool;
    /// Returns `(next state, reward, done)`.
    fn transition(&self, s: &Self::State, a: ActionId) -> Result<(Self::State, f64, bool)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvName {
    #[serde(rename = "illustrative")]
    Illustrative,
    #[serde(rename = "fourrooms")]
    FourRooms,
}

/// Environment definition (static; holds no episode state).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Env {
    Cross(CrossEnv),
    FourRooms(FourRoomsEnv),
}

impl Env {
    pub fn name(&self) -> EnvName {
        match self {
            Env::Cross(_) => EnvName::Illustrative,
            Env::FourRooms(_) => EnvName::FourRooms,
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            Env::Cross(_) => CrossEnv::ACTION_COUNT,
            Env::FourRooms(_) => FourRoomsEnv::ACTION_COUNT,
        }
    }

    /// Episode step limit.
    pub fn timeout(&self) -> usize {
        match self {
            Env::Cross(_) => cross::cross_timeout(),
            Env::FourRooms(_) => four_rooms::fourrooms_timeout(),
        }
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        match self {
            Env::Cross(_) => CrossEnv::OBS_SHAPE,
            Env::FourRooms(e) => e.obs_shape(),
        }
    }

    pub fn obs_len(&self) -> usize {
        self.obs_shape().iter().product()
    }

    pub fn start_state(&self, ctx: &Context) -> Result<UnderlyingState> {
        match (self, ctx) {
            (Env::Cross(_), Context::Cross(c)) => Ok(UnderlyingState::Cross(c.start_state())),
            (Env::FourRooms(e), Context::FourRooms(c)) => {
                e.validate_context(c)?;
                Ok(UnderlyingState::FourRooms(c.start_state()))
            }
            _ => Err(contract("context does not belong to this environment")),
        }
    }

    pub fn step(&self, s: &UnderlyingState, a: ActionId) -> Result<StepOutcome> {
        if a.0 >= self.action_count() {
            return Err(contract(format!("action {} out of range", a.0)));
        }
        match (self, s) {
            (Env::Cross(e), UnderlyingState::Cross(s)) => {
                let (next, reward, done) = e.step(s, a)?;
                Ok(StepOutcome { state: UnderlyingState::Cross(next), reward, done })
            }
            (Env::FourRooms(e), UnderlyingState::FourRooms(s)) => {
                let (next, reward, done) = e.step(s, a)?;
                Ok(StepOutcome { state: UnderlyingState::FourRooms(next), reward, done })
            }
            _ => Err(contract("state does not belong to this environment")),
        }
    }

    /// Writes the observation of `s` into `out` (length [`Env::obs_len`]).
    pub fn encode_into(&self, s: &UnderlyingState, out: &mut [f32]) {
        match (self, s) {
            (Env::Cross(_), UnderlyingState::Cross(s)) => cross::encode_into(s, out),
            (Env::FourRooms(e), UnderlyingState::FourRooms(s)) => e.encode_into(s, out),
            _ => panic!("state does not belong to this environment"),
        }
    }

    pub fn encode(&self, s: &UnderlyingState) -> Observation {
        let mut obs = Observation::zeros(self.obs_shape());
        self.encode_into(s, &mut obs.data);
        obs
    }
}

impl DeterministicMdp for Env {
    type State = UnderlyingState;

    fn action_count(&self) -> usize {
        Env::action_count(self)
    }

    fn is_terminal(&self, s: &UnderlyingState) -> bool {
        s.is_terminal()
    }

    fn transition(&self, s: &UnderlyingState, a: ActionId) -> Result<(UnderlyingState, f64, bool)> {
        let o = self.step(s, a)?;
        Ok((o.state, o.reward, o.done))
    }
}

/// Train and test context sets for one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSets {
    pub train: ContextSet,
    /// Absent for the Illustrative Cross, which has no reachable test set.
    pub reachable_test: Option<ContextSet>,
    pub unreachable_test: ContextSet,
}
