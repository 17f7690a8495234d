//! Training loops and the file-producing commands built on them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{linear_epsilon, DqnAgent, DqnBatch, PpoAgent, PpoLosses, PurePpoAgent, ReplayBuffer};
use crate::collector::{
    collect_offpolicy, collect_onpolicy, inject_random_transitions, tee_wire, PePolicy, VecEnv,
};
use crate::config::{AlgoName, RunConfig};
use crate::envs::{ContextSet, ContextSets, Env, UnderlyingState};
use crate::error::{config, Result};
use crate::explore::BetaSchedule;
use crate::metrics::{
    buffer_diversity, coverage, evaluate, value_error, write_csv, MetricRecord, Split,
};
use crate::oracle::{
    bellman_residual, classify_context_bfs, enumerate_reachable_env, value_iteration, ReachableSet, Reachability,
    DEFAULT_TOL,
};
use crate::seed;
use crate::transition::Transition;

/// Final agent state, written as JSON at the end of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum Checkpoint {
    Dqn { step: u64, agent: DqnAgent },
    Ppo { step: u64, agent: PpoAgent, pure_exploration: Option<PurePpoAgent> },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<MetricRecord>,
    pub checkpoint: Checkpoint,
    pub steps: u64,
}

/// Observer for every collected transition, in collection order.
pub type TransitionHook<'a> = &'a mut dyn FnMut(&Transition);

struct Setup {
    env: Env,
    sets: ContextSets,
    reachable: ReachableSet<UnderlyingState>,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let env = cfg.build_env()?;
        let sets = cfg.context_sets()?;
        let reachable = enumerate_reachable_env(&env, &sets.train)?;
        Ok(Self { env, sets, reachable })
    }

    fn eval_sets(&self) -> Vec<(Split, &ContextSet)> {
        let mut v = vec![(Split::Train, &self.sets.train)];
        if let Some(r) = &self.sets.reachable_test {
            v.push((Split::TestReachable, r));
        }
        v.push((Split::TestUnreachable, &self.sets.unreachable_test));
        v
    }
}

/// Evaluation at every multiple of `every` and at the end of training.
struct EvalClock {
    every: u64,
    next: u64,
    count: u64,
    last: Option<u64>,
}

impl EvalClock {
    fn new(every: u64) -> Self {
        Self { every, next: every, count: 0, last: None }
    }

    fn due(&mut self, steps: u64, total: u64) -> bool {
        let due = steps >= self.next || (steps >= total && self.last != Some(steps));
        if due {
            while self.next <= steps {
                self.next += self.every;
            }
            self.count += 1;
            self.last = Some(steps);
        }
        due
    }
}

fn eval_splits(
    setup: &Setup,
    cfg: &RunConfig,
    seed_: u64,
    step: u64,
    index: u64,
    policy: &mut dyn FnMut(&[f32]) -> Result<crate::envs::ActionId>,
    out: &mut Vec<MetricRecord>,
) -> Result<()> {
    for (split, set) in setup.eval_sets() {
        let mut rng = seed::stream(seed_, &format!("eval-{}", split.as_str()), index);
        let r = evaluate(&setup.env, &set.contexts, cfg.train.eval_episodes, cfg.gamma(), policy, &mut rng)?;
        out.push(MetricRecord::new(step, seed_, split, "success_rate", r.success_rate));
        out.push(MetricRecord::new(step, seed_, split, "mean_return", r.mean_return));
        out.push(MetricRecord::new(step, seed_, split, "mean_disc_return", r.mean_disc_return));
    }
    Ok(())
}

/// Trains one seed and returns its metric records.
pub fn train(cfg: &RunConfig, seed_: u64, hook: Option<TransitionHook<'_>>) -> Result<RunOutcome> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    match cfg.algo.name {
        AlgoName::Dqn => train_dqn(cfg, seed_, &setup, hook),
        AlgoName::Ppo => train_ppo(cfg, seed_, &setup, hook),
    }
}

fn train_dqn(cfg: &RunConfig, seed_: u64, setup: &Setup, mut hook: Option<TransitionHook<'_>>) -> Result<RunOutcome> {
    let env = setup.env;
    let d = &cfg.dqn;
    let total = cfg.train.total_steps;
    let mut agent = DqnAgent::new(
        env.obs_len(),
        env.action_count(),
        cfg.dqn_config(),
        &mut seed::stream(seed_, "init-main", 0),
    );
    let mut vec = VecEnv::new(
        env,
        setup.sets.train.contexts.clone(),
        cfg.train.n_envs,
        d.beta,
        cfg.explore_go(),
        seed_,
    )?;
    if cfg.tee.enabled {
        let schedule = BetaSchedule::new(cfg.tee.phi, cfg.tee.lambda, cfg.tee.alpha, cfg.train.n_envs)?;
        tee_wire(&mut vec, &schedule)?;
    }
    let oracle = value_iteration(&setup.reachable, d.gamma, DEFAULT_TOL)?;
    let mut buffer: ReplayBuffer<Transition> = ReplayBuffer::new(d.buffer);
    let mut replay_rng = seed::stream(seed_, "replay", 0);
    let mut inject_rng = seed::stream(seed_, "inject", 0);
    let mut clock = EvalClock::new(cfg.train.eval_every);
    let mut next_target = d.target_interval;
    let (mut loss_q, mut loss_u, mut updates) = (0.0, 0.0, 0u64);
    let mut records = Vec::new();
    let mut round = Vec::with_capacity(d.train_freq);
    let len = env.obs_len();
    let mut batch = DqnBatch::default();
    while vec.steps() < total {
        let eps = linear_epsilon(vec.steps(), total, d.eps_fraction, d.eps_init, d.eps_final);
        round.clear();
        collect_offpolicy(&mut vec, &agent, eps, d.train_freq, &mut round)?;
        for t in &round {
            if let Some(h) = hook.as_mut() {
                h(t);
            }
            buffer.push(*t);
        }
        if cfg.inject.enabled {
            inject_random_transitions(&mut buffer, &mut vec, &setup.reachable, &mut inject_rng, cfg.inject.fraction, round.len())?;
        }
        if buffer.len() >= d.batch {
            for _ in 0..d.gradient_steps {
                let idx = buffer.sample_indices(d.batch, &mut replay_rng)?;
                fill_batch(&mut batch, &buffer, &idx, &env, len);
                let (lq, lu) = agent.update(&batch)?;
                loss_q += lq;
                loss_u += lu;
                updates += 1;
            }
        }
        while vec.steps() >= next_target {
            agent.update_targets();
            next_target += d.target_interval;
        }
        let step = vec.steps();
        if clock.due(step, total) {
            let mut policy = |obs: &[f32]| Ok(agent.greedy_batch(obs, 1, &[0.0])?[0]);
            eval_splits(setup, cfg, seed_, step, clock.count, &mut policy, &mut records)?;
            let g = Split::Global;
            records.push(MetricRecord::new(step, seed_, g, "coverage_sa", coverage(vec.visited(), &setup.reachable)?));
            records.push(MetricRecord::new(
                step,
                seed_,
                g,
                "buffer_diversity",
                buffer_diversity(buffer.iter().map(|t| &t.state), &setup.reachable),
            ));
            records.push(MetricRecord::new(
                step,
                seed_,
                g,
                "value_error",
                value_error(agent.q_net(), &env, &setup.reachable, &oracle)?,
            ));
            if updates > 0 {
                records.push(MetricRecord::new(step, seed_, g, "loss_q", loss_q / updates as f64));
                records.push(MetricRecord::new(step, seed_, g, "loss_u", loss_u / updates as f64));
                (loss_q, loss_u, updates) = (0.0, 0.0, 0);
            }
            records.push(MetricRecord::new(step, seed_, g, "pe_fraction", vec.pe_steps() as f64 / step as f64));
        }
    }
    let steps = vec.steps();
    Ok(RunOutcome { records, checkpoint: Checkpoint::Dqn { step: steps, agent }, steps })
}

fn fill_batch(b: &mut DqnBatch, buffer: &ReplayBuffer<Transition>, idx: &[usize], env: &Env, len: usize) {
    let n = idx.len();
    b.obs.clear();
    b.obs.resize(n * len, 0.0);
    b.next_obs.clear();
    b.next_obs.resize(n * len, 0.0);
    b.actions.clear();
    b.rewards.clear();
    b.intrinsic.clear();
    b.terminal.clear();
    for (r, &i) in idx.iter().enumerate() {
        let t = buffer.get(i);
        env.encode_into(&t.state, &mut b.obs[r * len..(r + 1) * len]);
        env.encode_into(&t.next_state, &mut b.next_obs[r * len..(r + 1) * len]);
        b.actions.push(t.action);
        b.rewards.push(t.reward);
        b.intrinsic.push(t.intrinsic);
        b.terminal.push(t.done);
    }
}

fn train_ppo(cfg: &RunConfig, seed_: u64, setup: &Setup, mut hook: Option<TransitionHook<'_>>) -> Result<RunOutcome> {
    let env = setup.env;
    let total = cfg.train.total_steps;
    let eg = cfg.explore_go();
    let mut agent = PpoAgent::new(
        env.obs_len(),
        env.action_count(),
        cfg.ppo_config(),
        &mut seed::stream(seed_, "init-main", 0),
    )?;
    let mut pe_agent = if eg.enabled && eg.pe_policy == PePolicy::PurePpo {
        let a = PpoAgent::new(
            env.obs_len(),
            env.action_count(),
            cfg.ppo_config(),
            &mut seed::stream(seed_, "init-pe", 0),
        )?;
        Some(PurePpoAgent::new(a, cfg.explorego.beta_pure))
    } else {
        None
    };
    let mut vec = VecEnv::new(env, setup.sets.train.contexts.clone(), cfg.train.n_envs, cfg.ppo.beta, eg, seed_)?;
    let mut update_rng = seed::stream(seed_, "ppo-update", 0);
    let mut pe_update_rng = seed::stream(seed_, "pe-update", 0);
    let mut clock = EvalClock::new(cfg.train.eval_every);
    let mut acc = PpoLosses::default();
    let mut updates = 0u64;
    let mut records = Vec::new();
    while vec.steps() < total {
        let batch = collect_onpolicy(&mut vec, &agent, pe_agent.as_ref(), cfg.ppo.rollout_steps)?;
        if let Some(h) = hook.as_mut() {
            for t in &batch.transitions {
                h(t);
            }
        }
        if !batch.main.is_empty() {
            let l = agent.update(&batch.main, &mut update_rng)?;
            acc.policy += l.policy;
            acc.value += l.value;
            acc.entropy += l.entropy;
            updates += 1;
        }
        if let Some(pe) = pe_agent.as_mut() {
            if !batch.pe.is_empty() {
                pe.update(&batch.pe, &mut pe_update_rng)?;
            }
        }
        let step = vec.steps();
        if clock.due(step, total) {
            let mut policy = |obs: &[f32]| agent.mode_action(obs);
            eval_splits(setup, cfg, seed_, step, clock.count, &mut policy, &mut records)?;
            let g = Split::Global;
            records.push(MetricRecord::new(step, seed_, g, "coverage_sa", coverage(vec.visited(), &setup.reachable)?));
            if updates > 0 {
                let k = updates as f64;
                records.push(MetricRecord::new(step, seed_, g, "loss_policy", acc.policy / k));
                records.push(MetricRecord::new(step, seed_, g, "loss_value", acc.value / k));
                records.push(MetricRecord::new(step, seed_, g, "entropy", acc.entropy / k));
                acc = PpoLosses::default();
                updates = 0;
            }
            records.push(MetricRecord::new(step, seed_, g, "pe_fraction", vec.pe_steps() as f64 / step as f64));
        }
    }
    let steps = vec.steps();
    Ok(RunOutcome {
        records,
        checkpoint: Checkpoint::Ppo { step: steps, agent, pure_exploration: pe_agent },
        steps,
    })
}

pub const CONFIG_ECHO: &str = "config.json";

pub fn csv_name(seed_: u64) -> String {
    format!("seed_{seed_}.csv")
}

pub fn checkpoint_name(seed_: u64) -> String {
    format!("checkpoint_seed_{seed_}.json")
}

/// Trains one seed and writes the config echo, metrics CSV and checkpoint
/// into `out_dir`.
pub fn run(cfg: &RunConfig, seed_: u64, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(CONFIG_ECHO), cfg.echo())?;
    let outcome = train(cfg, seed_, None)?;
    write_csv(&out_dir.join(csv_name(seed_)), &outcome.records)?;
    let ckpt = serde_json::to_vec(&outcome.checkpoint)?;
    std::fs::write(out_dir.join(checkpoint_name(seed_)), ckpt)?;
    Ok(outcome)
}

/// Final value of `metric` on `split` (the record with the largest step).
pub fn final_value(records: &[MetricRecord], split: Split, metric: &str) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.split == split && r.metric == metric)
        .max_by_key(|r| r.step)
        .map(|r| r.value)
}

/// Runs the base config once per `(K, seed)` under `out_dir/k_<K>/` and
/// writes the final test performance per run (`sweep_k.csv`) and per `K`
/// (`sweep_k_summary.csv`, mean with a 95% normal interval).
pub fn sweep_k(base: &RunConfig, ks: &[usize], seeds: u64, out_dir: &Path) -> Result<()> {
    if ks.is_empty() {
        return Err(config("sweep-k needs at least one K"));
    }
    if seeds == 0 {
        return Err(config("sweep-k needs at least one seed"));
    }
    if base.tee.enabled {
        return Err(config("sweep-k varies Explore-Go and cannot run with tee.enabled"));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut per_run = csv::Writer::from_path(out_dir.join("sweep_k.csv"))?;
    per_run.write_record(["k", "seed", "step", "split", "metric", "value"])?;
    let mut summary = csv::Writer::from_path(out_dir.join("sweep_k_summary.csv"))?;
    summary.write_record(["k", "split", "metric", "n", "mean", "ci95"])?;
    for &k in ks {
        let mut cfg = base.clone();
        cfg.explorego.enabled = true;
        cfg.explorego.k = k;
        cfg.validate()?;
        let dir = out_dir.join(format!("k_{k}"));
        let mut finals: Vec<(Split, &str, Vec<f64>)> = Vec::new();
        for s in 0..seeds {
            let out = run(&cfg, s, &dir)?;
            for split in [Split::Train, Split::TestReachable, Split::TestUnreachable] {
                for metric in ["success_rate", "mean_disc_return"] {
                    let Some(v) = final_value(&out.records, split, metric) else { continue };
                    per_run.write_record([
                        k.to_string(),
                        s.to_string(),
                        out.steps.to_string(),
                        split.as_str().to_string(),
                        metric.to_string(),
                        crate::metrics::format_value(v),
                    ])?;
                    match finals.iter_mut().find(|(sp, m, _)| *sp == split && *m == metric) {
                        Some(entry) => entry.2.push(v),
                        None => finals.push((split, metric, vec![v])),
                    }
                }
            }
        }
        for (split, metric, vals) in finals {
            let (mean, half) = mean_ci95(&vals);
            summary.write_record([
                k.to_string(),
                split.as_str().to_string(),
                metric.to_string(),
                vals.len().to_string(),
                crate::metrics::format_value(mean),
                crate::metrics::format_value(half),
            ])?;
        }
    }
    per_run.flush()?;
    summary.flush()?;
    Ok(())
}

/// Mean and half-width `1.96 * s / sqrt(n)`; the half-width is zero for one value.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub env: String,
    pub gamma: f64,
    pub reachable_states: usize,
    pub non_terminal_states: usize,
    pub state_actions: usize,
    pub sweeps: usize,
    pub bellman_residual: f64,
    pub v_star_histogram: Histogram,
    pub contexts: Vec<ContextClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges over `[0, 1]`; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextClass {
    pub split: Split,
    pub index: usize,
    pub reachable: bool,
}

/// Reachable-set sizes, a V* histogram over non-terminal states and the
/// reachability of every configured context.
pub fn oracle_report(cfg: &RunConfig) -> Result<OracleReport> {
    let setup = Setup::new(cfg)?;
    let tables = value_iteration(&setup.reachable, cfg.gamma(), DEFAULT_TOL)?;
    const BINS: usize = 10;
    let mut counts = vec![0usize; BINS];
    for &i in setup.reachable.non_terminal() {
        let v = tables.v(i).clamp(0.0, 1.0);
        counts[((v * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let edges = (0..=BINS).map(|b| b as f64 / BINS as f64).collect();
    let mut contexts = Vec::new();
    for (split, set) in setup.eval_sets() {
        for (index, c) in set.contexts.iter().enumerate() {
            let r = classify_context_bfs(&setup.env, c, &setup.reachable)?;
            contexts.push(ContextClass { split, index, reachable: r == Reachability::Reachable });
        }
    }
    Ok(OracleReport {
        env: serde_json::to_value(cfg.env.name)?.as_str().unwrap_or_default().to_string(),
        gamma: tables.gamma,
        reachable_states: setup.reachable.len(),
        non_terminal_states: setup.reachable.non_terminal().len(),
        state_actions: setup.reachable.state_action_count(),
        sweeps: tables.sweeps,
        bellman_residual: bellman_residual(&setup.reachable, &tables),
        v_star_histogram: Histogram { edges, counts },
        contexts,
    })
}

pub fn write_oracle_report(cfg: &RunConfig, out: &Path) -> Result<OracleReport> {
    let report = oracle_report(cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(out, text)?;
    Ok(report)
}
