use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::ActionId;
use crate::error::{contract, Result};
use crate::explore::argmax_f32;
use crate::neural::{clip_global_norm, soft_update, Adam, Mlp};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub lr_q: f64,
    pub lr_u: f64,
    pub tau_q: f64,
    pub tau_u: f64,
    /// Global-norm clip per head; non-positive disables clipping.
    pub max_grad_norm: f64,
    pub adam_eps: f64,
}

/// A minibatch in flat row-major observation layout.
#[derive(Debug, Clone, Default)]
pub struct DqnBatch {
    pub obs: Vec<f32>,
    pub next_obs: Vec<f32>,
    pub actions: Vec<ActionId>,
    pub rewards: Vec<f64>,
    pub intrinsic: Vec<f64>,
    /// True termination; truncated transitions keep bootstrapping.
    pub terminal: Vec<bool>,
}

impl DqnBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Head {
    online: Mlp,
    target: Mlp,
    opt: Adam,
}

impl Head {
    fn new(sizes: &[usize], lr: f64, eps: f64, rng: &mut Rng) -> Self {
        let online = Mlp::new(sizes, false, 1.0, rng);
        let opt = Adam::new(online.param_count(), lr, eps);
        Self { target: online.clone(), online, opt }
    }

    /// One MSE regression step towards `reward + gamma * max target(s')`.
    fn update(&mut self, b: &DqnBatch, obs_len: usize, reward: &[f64], gamma: f64, clip: f64) -> Result<f64> {
        let n = b.len();
        let actions = self.online.output_size();
        let next = self.target.forward_batch(&b.next_obs, n)?;
        let next_q = next.output();
        let cache = self.online.forward_batch(&b.obs, n)?;
        let q = cache.output();
        let mut dy = vec![0.0f32; n * actions];
        let mut loss = 0.0;
        for i in 0..n {
            let a = b.actions[i].0;
            if a >= actions {
                return Err(contract("action index out of range in DQN batch"));
            }
            let boot = if b.terminal[i] {
                0.0
            } else {
                let row = &next_q[i * actions..(i + 1) * actions];
                f64::from(row[argmax_f32(row)])
            };
            let y = reward[i] + gamma * boot;
            let err = f64::from(q[i * actions + a]) - y;
            loss += err * err;
            dy[i * actions + a] = (2.0 * err / n as f64) as f32;
        }
        debug_assert_eq!(b.obs.len(), n * obs_len);
        let mut g = self.online.zero_grads();
        self.online.backward(&cache, &dy, &mut g, false)?;
        if clip > 0.0 {
            clip_global_norm(&mut [&mut g], clip);
        }
        self.opt.step(self.online.params_mut(), &g)?;
        Ok(loss / n as f64)
    }
}

/// Dual-head DQN: `Q` learns the extrinsic return, `U` the intrinsic one.
/// Behaviour is epsilon-greedy on `Q + beta * U`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnAgent {
    cfg: DqnConfig,
    obs_len: usize,
    action_count: usize,
    q: Head,
    u: Head,
}

impl DqnAgent {
    pub fn new(obs_len: usize, action_count: usize, cfg: DqnConfig, rng: &mut Rng) -> Self {
        let mut sizes = vec![obs_len];
        sizes.extend(&cfg.hidden);
        sizes.push(action_count);
        let q = Head::new(&sizes, cfg.lr_q, cfg.adam_eps, rng);
        let u = Head::new(&sizes, cfg.lr_u, cfg.adam_eps, rng);
        Self { cfg, obs_len, action_count, q, u }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn obs_len(&self) -> usize {
        self.obs_len
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn q_net(&self) -> &Mlp {
        &self.q.online
    }

    pub fn u_net(&self) -> &Mlp {
        &self.u.online
    }

    pub fn q_target(&self) -> &Mlp {
        &self.q.target
    }

    pub fn u_target(&self) -> &Mlp {
        &self.u.target
    }

    pub fn q_net_mut(&mut self) -> &mut Mlp {
        &mut self.q.online
    }

    pub fn u_net_mut(&mut self) -> &mut Mlp {
        &mut self.u.online
    }

    pub fn q_values(&self, obs: &[f32], n: usize) -> Result<Vec<f32>> {
        Ok(self.q.online.forward_batch(obs, n)?.output().to_vec())
    }

    pub fn u_values(&self, obs: &[f32], n: usize) -> Result<Vec<f32>> {
        Ok(self.u.online.forward_batch(obs, n)?.output().to_vec())
    }

    /// `argmax_a Q + beta_i * U` per row; `U` is skipped when every beta is zero.
    pub fn greedy_batch(&self, obs: &[f32], n: usize, betas: &[f64]) -> Result<Vec<ActionId>> {
        if betas.len() != n {
            return Err(contract("one beta per observation row required"));
        }
        let mut scores = self.q_values(obs, n)?;
        if betas.iter().any(|&b| b != 0.0) {
            let u = self.u_values(obs, n)?;
            for (i, &beta) in betas.iter().enumerate() {
                let row = i * self.action_count..(i + 1) * self.action_count;
                for (s, uv) in scores[row.clone()].iter_mut().zip(&u[row]) {
                    *s += (beta * f64::from(*uv)) as f32;
                }
            }
        }
        Ok(scores.chunks(self.action_count).map(|r| ActionId(argmax_f32(r))).collect())
    }

    /// Epsilon-greedy on `Q + beta * U`, lowest-index tie-break. The coin is
    /// always drawn so the random stream does not depend on the parameters.
    pub fn act(&self, obs: &[f32], epsilon: f64, beta: f64, rng: &mut Rng) -> Result<ActionId> {
        let coin: f64 = rng.random();
        if coin < epsilon {
            return Ok(ActionId(rng.random_range(0..self.action_count)));
        }
        Ok(self.greedy_batch(obs, 1, &[beta])?[0])
    }

    /// One gradient step on each head. Returns `(loss_q, loss_u)`.
    pub fn update(&mut self, batch: &DqnBatch) -> Result<(f64, f64)> {
        let n = batch.len();
        if n == 0 {
            return Err(contract("empty DQN batch"));
        }
        if batch.obs.len() != n * self.obs_len
            || batch.next_obs.len() != n * self.obs_len
            || batch.rewards.len() != n
            || batch.intrinsic.len() != n
            || batch.terminal.len() != n
        {
            return Err(contract("DQN batch fields have inconsistent lengths"));
        }
        let (g, clip, len) = (self.cfg.gamma, self.cfg.max_grad_norm, self.obs_len);
        let lq = self.q.update(batch, len, &batch.rewards, g, clip)?;
        let lu = self.u.update(batch, len, &batch.intrinsic, g, clip)?;
        Ok((lq, lu))
    }

    /// Polyak averaging of both target networks.
    pub fn update_targets(&mut self) {
        soft_update(&mut self.q.target, &self.q.online, self.cfg.tau_q);
        soft_update(&mut self.u.target, &self.u.online, self.cfg.tau_u);
    }
}

/// Linear decay from `start` to `end` over the first `fraction` of `total`
/// steps, constant afterwards.
pub fn linear_epsilon(step: u64, total: u64, fraction: f64, start: f64, end: f64) -> f64 {
    let horizon = (fraction * total as f64).max(1.0);
    let t = (step as f64 / horizon).min(1.0);
    start + (end - start) * t
}
