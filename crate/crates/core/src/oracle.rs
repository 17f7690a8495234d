//! Tabular ground truth over the reachable state space.
//!
//! A state is reachable when some action sequence from a training start
//! state leads to it. Because both environments are deterministic, the
//! reachable set is the breadth-first closure of the train start states, and
//! V*/Q* follow from value iteration on the enumerated transition table.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use rand::Rng as _;
use serde::Serialize;

use crate::envs::{ActionId, Context, ContextSet, DeterministicMdp, Env, UnderlyingState};
use crate::error::{contract, Result};
use crate::seed::Rng;
use crate::transition::Transition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Successor {
    pub next: usize,
    pub reward: f64,
    pub done: bool,
}

/// Reachable states in BFS order with their cached one-step successors.
#[derive(Debug, Clone)]
pub struct ReachableSet<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    action_count: usize,
    /// `states.len() * action_count` entries; `None` for terminal states.
    successors: Vec<Option<Successor>>,
    non_terminal: Vec<usize>,
}

impl<S: Clone + Eq + Hash> ReachableSet<S> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn contains(&self, s: &S) -> bool {
        self.index.contains_key(s)
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.successors[i * self.action_count].is_none()
    }

    pub fn successor(&self, i: usize, a: ActionId) -> Option<Successor> {
        self.successors[i * self.action_count + a.0]
    }

    /// Indices of non-terminal states, in BFS order.
    pub fn non_terminal(&self) -> &[usize] {
        &self.non_terminal
    }

    /// Number of non-terminal `(state, action)` pairs.
    pub fn state_action_count(&self) -> usize {
        self.non_terminal.len() * self.action_count
    }
}

/// Breadth-first closure over all actions from every start state. Terminal
/// states are included but not expanded. Starts already visited are skipped,
/// so each Four Rooms `(doorways, goal)` layout is expanded once no matter how
/// many train contexts share it.
pub fn enumerate_reachable<M: DeterministicMdp>(
    mdp: &M,
    starts: impl IntoIterator<Item = M::State>,
) -> Result<ReachableSet<M::State>> {
    let na = mdp.action_count();
    let mut states = Vec::new();
    let mut index = HashMap::new();
    let mut queue = VecDeque::new();
    for s in starts {
        if !index.contains_key(&s) {
            index.insert(s.clone(), states.len());
            states.push(s);
            queue.push_back(states.len() - 1);
        }
    }
    let mut raw: Vec<Option<(M::State, f64, bool)>> = Vec::new();
    while let Some(i) = queue.pop_front() {
        if raw.len() < (i + 1) * na {
            raw.resize_with((i + 1) * na, || None);
        }
        let s = states[i].clone();
        if mdp.is_terminal(&s) {
            continue;
        }
        for a in 0..na {
            let (next, r, done) = mdp.transition(&s, ActionId(a))?;
            if !index.contains_key(&next) {
                index.insert(next.clone(), states.len());
                states.push(next.clone());
                queue.push_back(states.len() - 1);
            }
            raw[i * na + a] = Some((next, r, done));
        }
    }
    raw.resize_with(states.len() * na, || None);
    let successors: Vec<Option<Successor>> = raw
        .into_iter()
        .map(|t| t.map(|(n, reward, done)| Successor { next: index[&n], reward, done }))
        .collect();
    let non_terminal = (0..states.len()).filter(|&i| successors[i * na].is_some()).collect();
    Ok(ReachableSet { states, index, action_count: na, successors, non_terminal })
}

/// Reachable set of an environment under a training context set.
pub fn enumerate_reachable_env(
    env: &Env,
    train: &ContextSet,
) -> Result<ReachableSet<UnderlyingState>> {
    let starts = train.contexts.iter().map(|c| env.start_state(c)).collect::<Result<Vec<_>>>()?;
    enumerate_reachable(env, starts)
}

/// Optimal values aligned with a [`ReachableSet`]'s state order.
#[derive(Debug, Clone, Serialize)]
pub struct OracleTables {
    pub v_star: Vec<f64>,
    /// Row-major `(state, action)`; rows of terminal states are zero.
    pub q_star: Vec<f64>,
    pub gamma: f64,
    pub tol: f64,
    pub sweeps: usize,
    action_count: usize,
}

impl OracleTables {
    pub fn v(&self, i: usize) -> f64 {
        self.v_star[i]
    }

    pub fn q(&self, i: usize, a: ActionId) -> f64 {
        self.q_star[i * self.action_count + a.0]
    }

    pub fn q_row(&self, i: usize) -> &[f64] {
        &self.q_star[i * self.action_count..(i + 1) * self.action_count]
    }

    /// Lowest-index greedy action.
    pub fn greedy(&self, i: usize) -> ActionId {
        ActionId(argmax(self.q_row(i)))
    }
}

pub const DEFAULT_TOL: f64 = 1e-9;

/// Jacobi value iteration from V = 0 until the max-norm change drops below
/// `tol`: `Q(s,a) <- R(s,a) + gamma * V(s') * (1 - done)`, `V(s) = max_a Q(s,a)`.
pub fn value_iteration<S: Clone + Eq + Hash>(
    set: &ReachableSet<S>,
    gamma: f64,
    tol: f64,
) -> Result<OracleTables> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(contract(format!("discount {gamma} outside [0, 1)")));
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(contract("value-iteration tolerance must be positive"));
    }
    let n = set.len();
    let na = set.action_count;
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n * na];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut next_v = vec![0.0; n];
        for &i in &set.non_terminal {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let t = set.successors[i * na + a].expect("non-terminal state has successors");
                let cont = if t.done { 0.0 } else { v[t.next] };
                let qa = t.reward + gamma * cont;
                q[i * na + a] = qa;
                best = best.max(qa);
            }
            next_v[i] = best;
        }
        let delta = v.iter().zip(&next_v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next_v;
        if delta < tol {
            break;
        }
    }
    Ok(OracleTables { v_star: v, q_star: q, gamma, tol, sweeps, action_count: na })
}

/// Max-norm Bellman optimality residual of `tables` on `set`.
pub fn bellman_residual<S: Clone + Eq + Hash>(set: &ReachableSet<S>, tables: &OracleTables) -> f64 {
    let na = set.action_count;
    let mut worst: f64 = 0.0;
    for i in 0..set.len() {
        if set.is_terminal(i) {
            worst = worst.max(tables.v_star[i].abs());
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for a in 0..na {
            let t = set.successors[i * na + a].unwrap();
            let cont = if t.done { 0.0 } else { tables.v_star[t.next] };
            best = best.max(t.reward + tables.gamma * cont);
        }
        worst = worst.max((best - tables.v_star[i]).abs());
    }
    worst
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reachability {
    Reachable,
    Unreachable,
}

/// Fast-path classification: Cross by background colour, Four Rooms by
/// `(doorways, goal)` layout.
pub fn classify_context(ctx: &Context, train: &ContextSet) -> Reachability {
    let hit = match ctx {
        Context::Cross(c) => train
            .contexts
            .iter()
            .any(|t| matches!(t, Context::Cross(t) if t.background == c.background)),
        Context::FourRooms(c) => train
            .contexts
            .iter()
            .any(|t| matches!(t, Context::FourRooms(t) if t.layout() == c.layout())),
    };
    if hit {
        Reachability::Reachable
    } else {
        Reachability::Unreachable
    }
}

/// Definitional classification: is the context's start state in the
/// reachable set?
pub fn classify_context_bfs(
    env: &Env,
    ctx: &Context,
    reachable: &ReachableSet<UnderlyingState>,
) -> Result<Reachability> {
    Ok(if reachable.contains(&env.start_state(ctx)?) {
        Reachability::Reachable
    } else {
        Reachability::Unreachable
    })
}

/// Uniform non-terminal reachable state, uniform action, one env step. The
/// result is flagged as injected.
pub fn sample_random_transition(
    rng: &mut Rng,
    reachable: &ReachableSet<UnderlyingState>,
    env: &Env,
) -> Result<Transition> {
    let nt = reachable.non_terminal();
    if nt.is_empty() {
        return Err(contract("no non-terminal reachable states to sample from"));
    }
    let i = nt[rng.random_range(0..nt.len())];
    let a = ActionId(rng.random_range(0..env.action_count()));
    let state = reachable.states()[i];
    let out = env.step(&state, a)?;
    Ok(Transition {
        state,
        action: a,
        reward: out.reward,
        intrinsic: 0.0,
        next_state: out.state,
        done: out.done,
        truncated: false,
        pure_exploration: false,
        injected: true,
    })
}
