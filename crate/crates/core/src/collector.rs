//! Rollout collection with an optional pure-exploration prefix per episode.
//!
//! Each episode draws `k ~ Uniform{0..K}` and runs `k` pure-exploration
//! steps before the learner takes over. Off-policy collection excludes those
//! steps from the step budget and, by default, from the returned data.
//! On-policy collection counts them towards the budget and routes them to a
//! separate rollout that trains the pure-exploration agent.
//!
//! Workers are always advanced in index order, so shared count updates and
//! random streams are reproducible.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agents::{DqnAgent, PpoAgent, PurePpoAgent, ReplayBuffer, Rollout, RolloutStep};
use crate::envs::{ActionId, Context, Env, UnderlyingState};
use crate::error::{config, contract, Result};
use crate::explore::{pure_policy_ugreedy, pure_policy_uniform, BetaSchedule, CountTables};
use crate::neural::Categorical;
use crate::oracle::{sample_random_transition, ReachableSet};
use crate::seed::{self, Rng};
use crate::transition::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PePolicy {
    Uniform,
    UGreedy,
    PurePpo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExploreGoConfig {
    pub enabled: bool,
    pub k_max: usize,
    pub pe_policy: PePolicy,
    /// Keep pure-exploration steps in the off-policy output (ablation).
    pub include_pe: bool,
    /// Random-action probability of the greedy-on-U policy.
    pub pe_epsilon: f64,
}

impl ExploreGoConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, k_max: 0, pe_policy: PePolicy::Uniform, include_pe: false, pe_epsilon: 0.0 }
    }
}

/// Integer uniform on `{0, ..., k_max}`.
pub fn sample_k(rng: &mut Rng, k_max: usize) -> usize {
    rng.random_range(0..=k_max)
}

/// One environment instance with its episode bookkeeping and random streams.
#[derive(Debug, Clone)]
pub struct EnvWorker {
    pub index: usize,
    pub state: UnderlyingState,
    pub episode_step: usize,
    pub k: usize,
    /// Intrinsic coefficient used when acting (TEE assigns one per worker).
    pub beta: f64,
    reset_rng: Rng,
    act_rng: Rng,
    k_rng: Rng,
    pe_rng: Rng,
}

impl EnvWorker {
    pub fn in_pure_exploration(&self) -> bool {
        self.episode_step < self.k
    }
}

/// Workers sharing one environment definition, training context set and
/// global count table.
#[derive(Debug, Clone)]
pub struct VecEnv {
    env: Env,
    contexts: Vec<Context>,
    workers: Vec<EnvWorker>,
    counts: CountTables,
    visited: HashSet<(UnderlyingState, ActionId)>,
    eg: ExploreGoConfig,
    cursor: usize,
    steps: u64,
    pe_steps: u64,
    episodes: u64,
    obs: Vec<f32>,
}

impl VecEnv {
    /// Every worker starts an episode immediately.
    pub fn new(env: Env, contexts: Vec<Context>, n: usize, beta: f64, eg: ExploreGoConfig, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(config("train.n_envs must be at least 1"));
        }
        if contexts.is_empty() {
            return Err(config("training context set is empty"));
        }
        let placeholder = env.start_state(&contexts[0])?;
        let workers = (0..n)
            .map(|i| EnvWorker {
                index: i,
                state: placeholder,
                episode_step: 0,
                k: 0,
                beta,
                reset_rng: seed::stream(seed, "worker-reset", i as u64),
                act_rng: seed::stream(seed, "worker-act", i as u64),
                k_rng: seed::stream(seed, "worker-k", i as u64),
                pe_rng: seed::stream(seed, "worker-pe", i as u64),
            })
            .collect();
        let mut v = Self {
            env,
            obs: vec![0.0; env.obs_len()],
            contexts,
            workers,
            counts: CountTables::new(n),
            visited: HashSet::new(),
            eg,
            cursor: 0,
            steps: 0,
            pe_steps: 0,
            episodes: 0,
        };
        for i in 0..n {
            v.reset_worker(i)?;
        }
        v.episodes = 0;
        Ok(v)
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn workers(&self) -> &[EnvWorker] {
        &self.workers
    }

    pub fn counts(&self) -> &CountTables {
        &self.counts
    }

    /// Every `(state, action)` taken by a worker, pure exploration included.
    pub fn visited(&self) -> &HashSet<(UnderlyingState, ActionId)> {
        &self.visited
    }

    /// Marks pairs seen through other channels (injected transitions).
    pub fn mark_visited(&mut self, s: UnderlyingState, a: ActionId) {
        self.visited.insert((s, a));
    }

    /// Environment steps taken, pure exploration included.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn pe_steps(&self) -> u64 {
        self.pe_steps
    }

    /// Completed episodes.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn explore_go(&self) -> &ExploreGoConfig {
        &self.eg
    }

    /// New uniformly drawn train context, fresh `k`, empty episodic counts.
    fn reset_worker(&mut self, i: usize) -> Result<()> {
        let w = &mut self.workers[i];
        let c = w.reset_rng.random_range(0..self.contexts.len());
        w.state = self.env.start_state(&self.contexts[c])?;
        w.episode_step = 0;
        w.k = if self.eg.enabled { sample_k(&mut w.k_rng, self.eg.k_max) } else { 0 };
        self.counts.reset_episode(i);
        self.episodes += 1;
        Ok(())
    }

    /// Steps worker `i` with `a`, updates counts and coverage, and resets
    /// the worker when the episode ends.
    fn advance(&mut self, i: usize, a: ActionId) -> Result<Transition> {
        let env = self.env;
        let timeout = env.timeout();
        let w = &mut self.workers[i];
        let pe = w.in_pure_exploration();
        let state = w.state;
        let out = env.step(&state, a)?;
        w.episode_step += 1;
        let truncated = !out.done && w.episode_step >= timeout;
        w.state = out.state;
        let intrinsic = self.counts.observe_and_reward(i, &state, a);
        self.visited.insert((state, a));
        self.steps += 1;
        if pe {
            self.pe_steps += 1;
        }
        let t = Transition {
            state,
            action: a,
            reward: out.reward,
            intrinsic,
            next_state: out.state,
            done: out.done,
            truncated,
            pure_exploration: pe,
            injected: false,
        };
        if out.done || truncated {
            self.reset_worker(i)?;
        }
        Ok(t)
    }
}

/// Assigns TEE coefficients, one per worker.
pub fn tee_wire(v: &mut VecEnv, schedule: &BetaSchedule) -> Result<()> {
    if schedule.workers != v.workers.len() {
        return Err(config(format!(
            "tee schedule is for {} workers but {} are running",
            schedule.workers,
            v.workers.len()
        )));
    }
    for (w, b) in v.workers.iter_mut().zip(schedule.betas()) {
        w.beta = b;
    }
    Ok(())
}

/// Collects exactly `n` post-exploration transitions into `out`, cycling
/// through workers. Pure-exploration steps do not count towards `n` and are
/// only emitted (flagged) when `include_pe` is set. Returns the number of
/// environment steps taken.
pub fn collect_offpolicy(
    v: &mut VecEnv,
    agent: &DqnAgent,
    epsilon: f64,
    n: usize,
    out: &mut Vec<Transition>,
) -> Result<u64> {
    if n == 0 {
        return Err(contract("collect_offpolicy needs n >= 1"));
    }
    let start = v.steps;
    let mut kept = 0;
    while kept < n {
        let i = v.cursor;
        v.cursor = (v.cursor + 1) % v.workers.len();
        let mut obs = std::mem::take(&mut v.obs);
        v.env.encode_into(&v.workers[i].state, &mut obs);
        let w = &mut v.workers[i];
        let a = if w.in_pure_exploration() {
            match v.eg.pe_policy {
                PePolicy::Uniform => pure_policy_uniform(&mut w.pe_rng, v.env.action_count()),
                PePolicy::UGreedy => {
                    let u = agent.u_values(&obs, 1)?;
                    pure_policy_ugreedy(&u, v.eg.pe_epsilon, &mut w.pe_rng)
                }
                PePolicy::PurePpo => return Err(config("pure_ppo exploration requires the ppo algorithm")),
            }
        } else {
            agent.act(&obs, epsilon, w.beta, &mut w.act_rng)?
        };
        v.obs = obs;
        let t = v.advance(i, a)?;
        if !t.pure_exploration {
            kept += 1;
            out.push(t);
        } else if v.eg.include_pe {
            out.push(t);
        }
    }
    Ok(v.steps - start)
}

/// Output of one on-policy collection round.
#[derive(Debug, Clone, Default)]
pub struct OnPolicyBatch {
    pub main: Rollout,
    pub pe: Rollout,
    /// Every transition in collection order.
    pub transitions: Vec<Transition>,
}

/// Steps every worker `steps_per_worker` times in lockstep. Pure-exploration
/// steps count towards the budget and go to `pe`; the rest go to `main`.
/// Segment ends that are not terminal (time limits, the hand-over from pure
/// exploration to the main agent, the end of the round) are bootstrapped
/// with the critic of the agent that owns the segment.
pub fn collect_onpolicy(
    v: &mut VecEnv,
    main: &PpoAgent,
    pe: Option<&PurePpoAgent>,
    steps_per_worker: usize,
) -> Result<OnPolicyBatch> {
    if steps_per_worker == 0 {
        return Err(contract("collect_onpolicy needs at least one step per worker"));
    }
    let n = v.workers.len();
    let len = v.env.obs_len();
    let na = v.env.action_count();
    if v.eg.enabled && v.eg.pe_policy == PePolicy::PurePpo && pe.is_none() {
        return Err(contract("pure_ppo exploration needs a pure-exploration agent"));
    }
    if v.eg.pe_policy == PePolicy::UGreedy && v.eg.enabled {
        return Err(config("u_greedy exploration requires the dqn algorithm"));
    }
    let mut batch = OnPolicyBatch {
        main: Rollout::new(len, n),
        pe: Rollout::new(len, n),
        transitions: Vec::with_capacity(n * steps_per_worker),
    };
    let mut obs = vec![0.0f32; n * len];
    for _ in 0..steps_per_worker {
        for i in 0..n {
            v.env.encode_into(&v.workers[i].state, &mut obs[i * len..(i + 1) * len]);
        }
        let (main_rows, pe_rows): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| !v.workers[i].in_pure_exploration());
        let main_out = forward_rows(main, &obs, len, &main_rows)?;
        let pe_out = match pe {
            Some(p) if !pe_rows.is_empty() && v.eg.pe_policy == PePolicy::PurePpo => {
                Some(forward_rows(p.agent(), &obs, len, &pe_rows)?)
            }
            _ => None,
        };
        for i in 0..n {
            let row = &obs[i * len..(i + 1) * len];
            let is_pe = v.workers[i].in_pure_exploration();
            let (a, log_prob, value) = if is_pe {
                match &pe_out {
                    Some((logits, values)) => {
                        let r = pe_rows.iter().position(|&j| j == i).unwrap();
                        let d = Categorical::from_logits(&logits[r * na..(r + 1) * na]);
                        let a = d.sample(&mut v.workers[i].pe_rng);
                        (a, d.log_prob(a), values[r])
                    }
                    None => {
                        let a = pure_policy_uniform(&mut v.workers[i].pe_rng, na);
                        (a, -(na as f64).ln(), 0.0)
                    }
                }
            } else {
                let (logits, values) = &main_out;
                let r = main_rows.iter().position(|&j| j == i).unwrap();
                let d = Categorical::from_logits(&logits[r * na..(r + 1) * na]);
                let a = d.sample(&mut v.workers[i].act_rng);
                (a, d.log_prob(a), values[r])
            };
            let t = v.advance(i, a)?;
            // Phase hand-over: the worker just left pure exploration mid-episode.
            let handover = is_pe && !(t.done || t.truncated) && !v.workers[i].in_pure_exploration();
            let segment_end = t.truncated || handover;
            let next_value = if segment_end {
                let mut next = vec![0.0f32; len];
                v.env.encode_into(&t.next_state, &mut next);
                let owner = if is_pe { pe.map(|p| p.agent()) } else { Some(main) };
                match owner {
                    Some(agent) if !(is_pe && pe_out.is_none()) => agent.values(&next, 1)?[0],
                    _ => 0.0,
                }
            } else {
                0.0
            };
            let step = RolloutStep {
                action: a,
                log_prob,
                value,
                reward: t.reward,
                intrinsic: t.intrinsic,
                terminal: t.done,
                segment_end,
                next_value,
                pure_exploration: is_pe,
            };
            if is_pe {
                batch.pe.push(i, row, step);
            } else {
                batch.main.push(i, row, step);
            }
            batch.transitions.push(t);
        }
    }
    // Bootstrap open segments at the end of the round.
    for i in 0..n {
        let worker_pe = v.workers[i].in_pure_exploration();
        for (rollout, owner_is_pe) in [(&mut batch.main, false), (&mut batch.pe, true)] {
            let Some(last) = rollout.trajectories[i].steps.last_mut() else { continue };
            if last.terminal || last.segment_end {
                continue;
            }
            debug_assert_eq!(worker_pe, owner_is_pe, "open segment belongs to the current phase");
            let agent = if owner_is_pe { pe.map(|p| p.agent()) } else { Some(main) };
            last.next_value = match agent {
                Some(a) => {
                    v.env.encode_into(&v.workers[i].state, &mut obs[..len]);
                    a.values(&obs[..len], 1)?[0]
                }
                None => 0.0,
            };
        }
    }
    Ok(batch)
}

fn forward_rows(agent: &PpoAgent, obs: &[f32], len: usize, rows: &[usize]) -> Result<(Vec<f32>, Vec<f64>)> {
    if rows.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut x = Vec::with_capacity(rows.len() * len);
    for &i in rows {
        x.extend_from_slice(&obs[i * len..(i + 1) * len]);
    }
    agent.evaluate(&x, rows.len())
}

/// Pushes `floor(fraction * n)` oracle-sampled transitions after a round of
/// `n` real ones. Injected pairs count as visited but never touch counts.
pub fn inject_random_transitions(
    buf: &mut ReplayBuffer<Transition>,
    v: &mut VecEnv,
    reachable: &ReachableSet<UnderlyingState>,
    rng: &mut Rng,
    fraction: f64,
    n: usize,
) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(config("inject.fraction must lie in [0, 1)"));
    }
    let count = (fraction * n as f64 + 1e-9).floor() as usize;
    let env = v.env;
    for _ in 0..count {
        let t = sample_random_transition(rng, reachable, &env)?;
        v.mark_visited(t.state, t.action);
        buf.push(t);
    }
    Ok(count)
}
