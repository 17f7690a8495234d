use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envs::ActionId;
use crate::error::{contract, Result};
use crate::neural::{clip_global_norm, gae, Adam, Categorical, ForwardCache, GaeParams, Mlp};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub hidden: Vec<usize>,
    /// One trunk feeding both heads instead of separate actor and critic.
    pub share_encoder: bool,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub clip_range: f64,
    pub entropy_coeff: f64,
    pub vf_coeff: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Non-positive disables clipping.
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    pub normalize_advantages: bool,
    /// Weight of the intrinsic reward in the shaped reward `r + beta * eta`.
    pub beta: f64,
}

/// One acting step. `reward` is extrinsic; the learner decides how to mix in
/// `intrinsic`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutStep {
    pub action: ActionId,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub intrinsic: f64,
    /// Goal reached: no bootstrapping past this step.
    pub terminal: bool,
    /// The sequence breaks after this step for another reason (time limit,
    /// phase handover). The return is bootstrapped from `next_value`.
    pub segment_end: bool,
    /// Critic estimate of the next state; needed when `segment_end` is set
    /// without `terminal`, and on the final step of a trajectory.
    pub next_value: f64,
    pub pure_exploration: bool,
}

/// Consecutive steps of a single worker.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Row-major observations, one row per step.
    pub obs: Vec<f32>,
    pub steps: Vec<RolloutStep>,
}

#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub obs_len: usize,
    pub trajectories: Vec<Trajectory>,
}

impl Rollout {
    pub fn new(obs_len: usize, workers: usize) -> Self {
        Self { obs_len, trajectories: vec![Trajectory::default(); workers] }
    }

    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|t| t.steps.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, worker: usize, obs: &[f32], step: RolloutStep) {
        let t = &mut self.trajectories[worker];
        t.obs.extend_from_slice(obs);
        t.steps.push(step);
    }

    pub fn steps(&self) -> impl Iterator<Item = &RolloutStep> {
        self.trajectories.iter().flat_map(|t| t.steps.iter())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PpoLosses {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Nets {
    Separate { actor: Mlp, critic: Mlp },
    Shared { trunk: Mlp, actor: Mlp, critic: Mlp },
}

struct Forward {
    trunk: Option<ForwardCache>,
    actor: ForwardCache,
    critic: ForwardCache,
}

impl Nets {
    fn all(&self) -> Vec<&Mlp> {
        match self {
            Nets::Separate { actor, critic } => vec![actor, critic],
            Nets::Shared { trunk, actor, critic } => vec![trunk, actor, critic],
        }
    }

    fn all_mut(&mut self) -> Vec<&mut Mlp> {
        match self {
            Nets::Separate { actor, critic } => vec![actor, critic],
            Nets::Shared { trunk, actor, critic } => vec![trunk, actor, critic],
        }
    }

    fn forward(&self, obs: &[f32], n: usize) -> Result<Forward> {
        match self {
            Nets::Separate { actor, critic } => Ok(Forward {
                trunk: None,
                actor: actor.forward_batch(obs, n)?,
                critic: critic.forward_batch(obs, n)?,
            }),
            Nets::Shared { trunk, actor, critic } => {
                let t = trunk.forward_batch(obs, n)?;
                let a = actor.forward_batch(t.output(), n)?;
                let c = critic.forward_batch(t.output(), n)?;
                Ok(Forward { trunk: Some(t), actor: a, critic: c })
            }
        }
    }

    /// Gradients per network in the order of [`Nets::all`].
    fn backward(&self, f: &Forward, dlogits: &[f32], dvalues: &[f32]) -> Result<Vec<Vec<f32>>> {
        match self {
            Nets::Separate { actor, critic } => {
                let mut ga = actor.zero_grads();
                let mut gc = critic.zero_grads();
                actor.backward(&f.actor, dlogits, &mut ga, false)?;
                critic.backward(&f.critic, dvalues, &mut gc, false)?;
                Ok(vec![ga, gc])
            }
            Nets::Shared { trunk, actor, critic } => {
                let mut ga = actor.zero_grads();
                let mut gc = critic.zero_grads();
                let mut gt = trunk.zero_grads();
                let mut dfeat = actor.backward(&f.actor, dlogits, &mut ga, true)?.unwrap();
                let dc = critic.backward(&f.critic, dvalues, &mut gc, true)?.unwrap();
                for (d, c) in dfeat.iter_mut().zip(dc) {
                    *d += c;
                }
                let cache = f.trunk.as_ref().expect("shared forward keeps the trunk cache");
                trunk.backward(cache, &dfeat, &mut gt, false)?;
                Ok(vec![gt, ga, gc])
            }
        }
    }
}

/// Clipped-surrogate actor-critic with GAE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpoAgent {
    cfg: PpoConfig,
    obs_len: usize,
    action_count: usize,
    nets: Nets,
    opts: Vec<Adam>,
}

impl PpoAgent {
    /// The actor's output layer starts near zero (gain 0.01) so the initial
    /// policy is close to uniform.
    pub fn new(obs_len: usize, action_count: usize, cfg: PpoConfig, rng: &mut Rng) -> Result<Self> {
        if !(cfg.clip_range > 0.0) || cfg.epochs == 0 || cfg.batch_size == 0 {
            return Err(crate::error::config("ppo: clip_range > 0, epochs >= 1 and batch_size >= 1 required"));
        }
        let nets = if cfg.share_encoder && !cfg.hidden.is_empty() {
            let mut sizes = vec![obs_len];
            sizes.extend(&cfg.hidden);
            let feat = *sizes.last().unwrap();
            Nets::Shared {
                trunk: Mlp::new(&sizes, true, 1.0, rng),
                actor: Mlp::new(&[feat, action_count], false, 0.01, rng),
                critic: Mlp::new(&[feat, 1], false, 1.0, rng),
            }
        } else {
            let sizes = |out: usize| {
                let mut s = vec![obs_len];
                s.extend(&cfg.hidden);
                s.push(out);
                s
            };
            Nets::Separate {
                actor: Mlp::new(&sizes(action_count), false, 0.01, rng),
                critic: Mlp::new(&sizes(1), false, 1.0, rng),
            }
        };
        let opts = nets.all().iter().map(|m| Adam::new(m.param_count(), cfg.lr, cfg.adam_eps)).collect();
        Ok(Self { cfg, obs_len, action_count, nets, opts })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn networks(&self) -> Vec<&Mlp> {
        self.nets.all()
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        self.nets.all_mut()
    }

    /// `(logits, values)` for `n` row-major observations.
    pub fn evaluate(&self, obs: &[f32], n: usize) -> Result<(Vec<f32>, Vec<f64>)> {
        let f = self.nets.forward(obs, n)?;
        let values = f.critic.output().iter().map(|&v| f64::from(v)).collect();
        Ok((f.actor.output().to_vec(), values))
    }

    pub fn values(&self, obs: &[f32], n: usize) -> Result<Vec<f64>> {
        Ok(self.evaluate(obs, n)?.1)
    }

    /// Samples an action; returns it with its log-probability and the critic value.
    pub fn act(&self, obs: &[f32], rng: &mut Rng) -> Result<(ActionId, f64, f64)> {
        let (logits, values) = self.evaluate(obs, 1)?;
        let dist = Categorical::from_logits(&logits);
        let a = dist.sample(rng);
        Ok((a, dist.log_prob(a), values[0]))
    }

    /// Distribution mode, used for evaluation.
    pub fn mode_action(&self, obs: &[f32]) -> Result<ActionId> {
        let (logits, _) = self.evaluate(obs, 1)?;
        Ok(Categorical::from_logits(&logits).mode())
    }

    pub fn mode_batch(&self, obs: &[f32], n: usize) -> Result<Vec<ActionId>> {
        let (logits, _) = self.evaluate(obs, n)?;
        Ok(logits.chunks(self.action_count).map(|l| Categorical::from_logits(l).mode()).collect())
    }

    /// Trains on `r + beta * eta`.
    pub fn update(&mut self, rollout: &Rollout, rng: &mut Rng) -> Result<PpoLosses> {
        let beta = self.cfg.beta;
        self.update_with(rollout, rng, |s| s.reward + beta * s.intrinsic)
    }

    fn update_with(
        &mut self,
        rollout: &Rollout,
        rng: &mut Rng,
        reward: impl Fn(&RolloutStep) -> f64,
    ) -> Result<PpoLosses> {
        if rollout.obs_len != self.obs_len {
            return Err(contract("rollout observation length does not match the agent"));
        }
        let (mut adv, returns) = self.advantages(rollout, reward)?;
        let n = adv.len();
        if n == 0 {
            return Ok(PpoLosses::default());
        }
        if self.cfg.normalize_advantages {
            let mean = adv.iter().sum::<f64>() / n as f64;
            let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            for a in &mut adv {
                *a = (*a - mean) / (std + 1e-8);
            }
        }
        let obs: Vec<&[f32]> = rollout.trajectories.iter().flat_map(|t| t.obs.chunks(self.obs_len)).collect();
        let steps: Vec<&RolloutStep> = rollout.steps().collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut total = PpoLosses::default();
        let mut batches = 0usize;
        for _ in 0..self.cfg.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                let mut x = Vec::with_capacity(chunk.len() * self.obs_len);
                for &i in chunk {
                    x.extend_from_slice(obs[i]);
                }
                let mb: Vec<(&RolloutStep, f64, f64)> =
                    chunk.iter().map(|&i| (steps[i], adv[i], returns[i])).collect();
                let l = self.minibatch_step(&x, &mb)?;
                total.policy += l.policy;
                total.value += l.value;
                total.entropy += l.entropy;
                batches += 1;
            }
        }
        let k = batches as f64;
        Ok(PpoLosses { policy: total.policy / k, value: total.value / k, entropy: total.entropy / k })
    }

    /// GAE per trajectory. Segment ends that are not terminal fold
    /// `gamma * next_value` into the reward and cut the recursion there.
    fn advantages(&self, rollout: &Rollout, reward: impl Fn(&RolloutStep) -> f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = GaeParams { gamma: self.cfg.gamma, lambda: self.cfg.gae_lambda };
        let (mut adv, mut ret) = (Vec::new(), Vec::new());
        for t in &rollout.trajectories {
            if t.obs.len() != t.steps.len() * self.obs_len {
                return Err(contract("trajectory observations and steps disagree"));
            }
            let Some(last) = t.steps.last() else { continue };
            let mut r = Vec::with_capacity(t.steps.len());
            let mut dones = Vec::with_capacity(t.steps.len());
            for s in &t.steps {
                let mut x = reward(s);
                if s.segment_end && !s.terminal {
                    x += p.gamma * s.next_value;
                }
                r.push(x);
                dones.push(s.terminal || s.segment_end);
            }
            let values: Vec<f64> = t.steps.iter().map(|s| s.value).collect();
            let (a, g) = gae(&r, &values, &dones, last.next_value, p)?;
            adv.extend(a);
            ret.extend(g);
        }
        Ok((adv, ret))
    }

    fn minibatch_step(&mut self, x: &[f32], mb: &[(&RolloutStep, f64, f64)]) -> Result<PpoLosses> {
        let b = mb.len();
        let bf = b as f64;
        let f = self.nets.forward(x, b)?;
        let logits = f.actor.output();
        let values = f.critic.output();
        let (lo, hi) = (1.0 - self.cfg.clip_range, 1.0 + self.cfg.clip_range);
        let mut dlogits = vec![0.0f32; b * self.action_count];
        let mut dvalues = vec![0.0f32; b];
        let mut losses = PpoLosses::default();
        for (i, (step, a, ret)) in mb.iter().enumerate() {
            let row = i * self.action_count..(i + 1) * self.action_count;
            let dist = Categorical::from_logits(&logits[row.clone()]);
            let ratio = (dist.log_prob(step.action) - step.log_prob).exp();
            let unclipped = ratio * a;
            let clipped = ratio.clamp(lo, hi) * a;
            losses.policy -= unclipped.min(clipped) / bf;
            // The gradient flows only through the unclipped branch when it is the minimum.
            let dlogp = if unclipped <= clipped { -a * ratio / bf } else { 0.0 };
            let h = dist.entropy();
            losses.entropy += h / bf;
            let glp = dist.grad_log_prob(step.action);
            let gh = dist.grad_entropy();
            for (j, d) in dlogits[row].iter_mut().enumerate() {
                *d = (dlogp * glp[j] - self.cfg.entropy_coeff / bf * gh[j]) as f32;
            }
            let err = f64::from(values[i]) - ret;
            losses.value += err * err / bf;
            dvalues[i] = (2.0 * self.cfg.vf_coeff * err / bf) as f32;
        }
        let mut grads = self.nets.backward(&f, &dlogits, &dvalues)?;
        if self.cfg.max_grad_norm > 0.0 {
            let mut groups: Vec<&mut [f32]> = grads.iter_mut().map(|g| g.as_mut_slice()).collect();
            clip_global_norm(&mut groups, self.cfg.max_grad_norm);
        }
        for ((net, opt), g) in self.nets.all_mut().into_iter().zip(&mut self.opts).zip(&grads) {
            opt.step(net.params_mut(), g)?;
        }
        Ok(losses)
    }
}

/// PPO trained on pure-exploration steps only, with reward `beta_pure * eta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurePpoAgent {
    inner: PpoAgent,
    beta_pure: f64,
}

impl PurePpoAgent {
    pub fn new(agent: PpoAgent, beta_pure: f64) -> Self {
        Self { inner: agent, beta_pure }
    }

    pub fn agent(&self) -> &PpoAgent {
        &self.inner
    }

    pub fn beta_pure(&self) -> f64 {
        self.beta_pure
    }

    /// The reward this agent trains on for a step.
    pub fn reward_of(&self, s: &RolloutStep) -> f64 {
        self.beta_pure * s.intrinsic
    }

    pub fn update(&mut self, rollout: &Rollout, rng: &mut Rng) -> Result<PpoLosses> {
        if rollout.steps().any(|s| !s.pure_exploration) {
            return Err(contract("pure-exploration agent received a main-phase transition"));
        }
        let beta = self.beta_pure;
        self.inner.update_with(rollout, rng, |s| beta * s.intrinsic)
    }
}
