//! Run configuration.
//!
//! Configs are JSON objects whose keys may be nested (`{"dqn": {"beta": 0.5}}`)
//! or dotted (`{"dqn.beta": 0.5}`). Anything not given takes the default for
//! the chosen environment and algorithm; unknown keys are rejected. The echo
//! written next to results lists every key explicitly.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::{DqnConfig, PpoConfig};
use crate::collector::{ExploreGoConfig, PePolicy};
use crate::envs::{
    gen_cross_context_sets, gen_fourrooms_context_sets, ContextSets, CrossEnv, Env, EnvName, FourRoomsEnv,
};
use crate::error::{config, Result};
use crate::explore::BetaSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoName {
    Dqn,
    Ppo,
}

impl AlgoName {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgoName::Dqn => "dqn",
            AlgoName::Ppo => "ppo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: EnvName,
    /// Four Rooms side length (odd); ignored by the cross.
    pub grid_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextsSection {
    pub master_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Environment steps, pure exploration included.
    pub total_steps: u64,
    pub n_envs: usize,
    pub eval_every: u64,
    pub eval_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoSection {
    pub name: AlgoName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnSection {
    pub lr_q: f64,
    pub lr_u: f64,
    pub tau_q: f64,
    pub tau_u: f64,
    pub beta: f64,
    pub eps_init: f64,
    pub eps_final: f64,
    pub eps_fraction: f64,
    pub buffer: usize,
    pub batch: usize,
    pub gamma: f64,
    /// Post-exploration transitions collected between gradient updates.
    pub train_freq: usize,
    pub gradient_steps: usize,
    /// Environment steps between soft target updates.
    pub target_interval: u64,
    pub grad_clip: f64,
    pub adam_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSection {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy: f64,
    pub vf_coeff: f64,
    pub epochs: usize,
    /// Minibatch size.
    pub batch: usize,
    /// Steps per worker per rollout.
    pub rollout_steps: usize,
    pub beta: f64,
    pub share_encoder: bool,
    pub grad_clip: f64,
    pub adam_eps: f64,
    pub norm_adv: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreGoSection {
    pub enabled: bool,
    #[serde(rename = "K")]
    pub k: usize,
    pub pe_policy: PePolicy,
    pub include_pe: bool,
    pub beta_pure: f64,
    pub pe_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeeSection {
    pub enabled: bool,
    pub phi: f64,
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectSection {
    pub enabled: bool,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    pub contexts: ContextsSection,
    pub train: TrainSection,
    pub algo: AlgoSection,
    pub dqn: DqnSection,
    pub ppo: PpoSection,
    pub explorego: ExploreGoSection,
    pub tee: TeeSection,
    pub inject: InjectSection,
    pub net: NetSection,
}

impl RunConfig {
    /// Published settings for an environment/algorithm pair. Four Rooms
    /// follows the published DQN, PPO and Explore-Go tables; the cross
    /// follows its PPO table and reuses the Four Rooms DQN values with the
    /// cross discount.
    pub fn defaults(env: EnvName, algo: AlgoName) -> Self {
        let cross = env == EnvName::Illustrative;
        let n_envs = if cross { 4 } else { 50 };
        RunConfig {
            env: EnvSection { name: env, grid_size: FourRoomsEnv::DEFAULT_GRID },
            contexts: ContextsSection {
                master_seed: 0,
                n_train: if cross { 4 } else { 200 },
                n_test: if cross { 4 } else { 200 },
            },
            train: TrainSection {
                total_steps: if cross { 50_000 } else { 8_000_000 },
                n_envs,
                eval_every: if cross { 10_000 } else { 100_000 },
                eval_episodes: 100,
            },
            algo: AlgoSection { name: algo },
            dqn: DqnSection {
                lr_q: 5e-4,
                lr_u: 1e-3,
                tau_q: 0.05,
                tau_u: 0.005,
                beta: 0.01,
                eps_init: 1.0,
                eps_final: 0.01,
                eps_fraction: 0.125,
                buffer: if cross { 50_000 } else { 500_000 },
                batch: 256,
                gamma: if cross { 0.9 } else { 0.99 },
                train_freq: n_envs,
                gradient_steps: 1,
                target_interval: n_envs as u64,
                grad_clip: 1.0,
                adam_eps: 1e-8,
            },
            ppo: if cross {
                PpoSection {
                    lr: 1e-4,
                    gamma: 0.9,
                    gae_lambda: 0.95,
                    clip: 0.2,
                    entropy: 0.01,
                    vf_coeff: 0.5,
                    epochs: 3,
                    // 4 workers x 10 steps split into 8 minibatches.
                    batch: 5,
                    rollout_steps: 10,
                    beta: 0.0,
                    share_encoder: false,
                    grad_clip: 0.5,
                    adam_eps: 1e-5,
                    norm_adv: true,
                }
            } else {
                PpoSection {
                    lr: 5e-4,
                    gamma: 0.99,
                    gae_lambda: 0.95,
                    clip: 0.2,
                    entropy: 0.01,
                    vf_coeff: 0.5,
                    epochs: 5,
                    batch: 256,
                    // 12 800 steps per rollout over 50 workers.
                    rollout_steps: 256,
                    beta: 0.01,
                    share_encoder: true,
                    grad_clip: 0.5,
                    adam_eps: 1e-5,
                    norm_adv: true,
                }
            },
            explorego: ExploreGoSection {
                enabled: false,
                k: if cross { 8 } else { 50 },
                pe_policy: match (cross, algo) {
                    (_, AlgoName::Dqn) => PePolicy::UGreedy,
                    (true, AlgoName::Ppo) => PePolicy::Uniform,
                    (false, AlgoName::Ppo) => PePolicy::PurePpo,
                },
                include_pe: false,
                beta_pure: 0.1,
                pe_epsilon: 0.01,
            },
            tee: TeeSection { enabled: false, phi: 0.5, lambda: 0.9, alpha: 25.0 },
            inject: InjectSection { enabled: false, fraction: 0.1 },
            net: NetSection { hidden_dims: if cross { vec![128, 64, 32] } else { vec![512, 256] } },
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let user: Value =
            serde_json::from_str(text).map_err(|e| config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(user)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Merges a (possibly partial, possibly dotted) JSON object onto the
    /// defaults and validates the result.
    pub fn from_value(user: Value) -> Result<Self> {
        let user = expand_dotted(user)?;
        let env: EnvName = match user.pointer("/env/name") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| config(format!("env.name: {e}")))?,
            None => EnvName::Illustrative,
        };
        let algo: AlgoName = match user.pointer("/algo/name") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| config(format!("algo.name: {e}")))?,
            None if env == EnvName::Illustrative => AlgoName::Ppo,
            None => AlgoName::Dqn,
        };
        let mut merged = serde_json::to_value(Self::defaults(env, algo)).expect("defaults serialise");
        merge(&mut merged, &user, "")?;
        let cfg: RunConfig = serde_path_to_error::deserialize(merged)
            .map_err(|e| config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Pretty JSON with every key spelled out.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(config(msg.to_string())) };
        let dqn = self.algo.name == AlgoName::Dqn;
        let cross = self.env.name == EnvName::Illustrative;
        check(
            !(self.tee.enabled && self.explorego.enabled),
            "tee.enabled and explorego.enabled are mutually exclusive",
        )?;
        check(self.train.total_steps >= 1, "train.total_steps must be at least 1")?;
        check(self.train.n_envs >= 1, "train.n_envs must be at least 1")?;
        check(self.train.eval_every >= 1, "train.eval_every must be at least 1")?;
        check(self.train.eval_episodes >= 1, "train.eval_episodes must be at least 1")?;
        if cross {
            check(
                self.contexts.n_train == 4 && self.contexts.n_test == 4,
                "contexts.n_train and contexts.n_test are fixed at 4 for the illustrative env",
            )?;
        } else {
            FourRoomsEnv::new(self.env.grid_size).map_err(|e| config(format!("env.grid_size: {e}")))?;
            check(self.contexts.n_train >= 1, "contexts.n_train must be at least 1")?;
            check(self.contexts.n_test >= 1, "contexts.n_test must be at least 1")?;
        }
        let d = &self.dqn;
        check((0.0..1.0).contains(&d.gamma), "dqn.gamma must lie in [0, 1)")?;
        check(d.lr_q > 0.0 && d.lr_u > 0.0, "dqn.lr_q and dqn.lr_u must be positive")?;
        check(d.tau_q > 0.0 && d.tau_q <= 1.0, "dqn.tau_q must lie in (0, 1]")?;
        check(d.tau_u > 0.0 && d.tau_u <= 1.0, "dqn.tau_u must lie in (0, 1]")?;
        check(d.beta >= 0.0, "dqn.beta must be non-negative")?;
        check((0.0..=1.0).contains(&d.eps_init), "dqn.eps_init must lie in [0, 1]")?;
        check((0.0..=d.eps_init).contains(&d.eps_final), "dqn.eps_final must lie in [0, dqn.eps_init]")?;
        check(d.eps_fraction > 0.0 && d.eps_fraction <= 1.0, "dqn.eps_fraction must lie in (0, 1]")?;
        check(d.batch >= 1, "dqn.batch must be at least 1")?;
        check(d.buffer >= d.batch, "dqn.buffer must hold at least one batch")?;
        check(d.train_freq >= 1, "dqn.train_freq must be at least 1")?;
        check(d.gradient_steps >= 1, "dqn.gradient_steps must be at least 1")?;
        check(d.target_interval >= 1, "dqn.target_interval must be at least 1")?;
        check(d.adam_eps > 0.0, "dqn.adam_eps must be positive")?;
        let p = &self.ppo;
        check((0.0..1.0).contains(&p.gamma), "ppo.gamma must lie in [0, 1)")?;
        check((0.0..=1.0).contains(&p.gae_lambda), "ppo.gae_lambda must lie in [0, 1]")?;
        check(p.lr > 0.0, "ppo.lr must be positive")?;
        check(p.clip > 0.0, "ppo.clip must be positive")?;
        check(p.epochs >= 1, "ppo.epochs must be at least 1")?;
        check(p.batch >= 1, "ppo.batch must be at least 1")?;
        check(p.rollout_steps >= 1, "ppo.rollout_steps must be at least 1")?;
        check(p.beta >= 0.0, "ppo.beta must be non-negative")?;
        check(p.adam_eps > 0.0, "ppo.adam_eps must be positive")?;
        let e = &self.explorego;
        check(e.beta_pure >= 0.0, "explorego.beta_pure must be non-negative")?;
        check((0.0..=1.0).contains(&e.pe_epsilon), "explorego.pe_epsilon must lie in [0, 1]")?;
        if e.enabled {
            match (e.pe_policy, dqn) {
                (PePolicy::UGreedy, false) => return Err(config("explorego.pe_policy u_greedy requires algo.name dqn")),
                (PePolicy::PurePpo, true) => return Err(config("explorego.pe_policy pure_ppo requires algo.name ppo")),
                _ => {}
            }
            check(!e.include_pe || dqn, "explorego.include_pe is only defined for algo.name dqn")?;
        }
        if self.tee.enabled {
            check(dqn, "tee.enabled requires algo.name dqn")?;
            BetaSchedule::new(self.tee.phi, self.tee.lambda, self.tee.alpha, self.train.n_envs)
                .map_err(|err| config(format!("tee: {err}")))?;
        }
        if self.inject.enabled {
            check(dqn, "inject.enabled requires algo.name dqn")?;
        }
        check((0.0..1.0).contains(&self.inject.fraction), "inject.fraction must lie in [0, 1)")?;
        check(self.net.hidden_dims.iter().all(|&h| h > 0), "net.hidden_dims entries must be positive")?;
        Ok(())
    }

    pub fn build_env(&self) -> Result<Env> {
        Ok(match self.env.name {
            EnvName::Illustrative => Env::Cross(CrossEnv),
            EnvName::FourRooms => Env::FourRooms(FourRoomsEnv::new(self.env.grid_size)?),
        })
    }

    pub fn context_sets(&self) -> Result<ContextSets> {
        match self.env.name {
            EnvName::Illustrative => Ok(gen_cross_context_sets()),
            EnvName::FourRooms => gen_fourrooms_context_sets(
                self.contexts.master_seed,
                self.contexts.n_train,
                self.contexts.n_test,
                self.env.grid_size,
            ),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self.algo.name {
            AlgoName::Dqn => self.dqn.gamma,
            AlgoName::Ppo => self.ppo.gamma,
        }
    }

    pub fn dqn_config(&self) -> DqnConfig {
        let d = &self.dqn;
        DqnConfig {
            hidden: self.net.hidden_dims.clone(),
            gamma: d.gamma,
            lr_q: d.lr_q,
            lr_u: d.lr_u,
            tau_q: d.tau_q,
            tau_u: d.tau_u,
            max_grad_norm: d.grad_clip,
            adam_eps: d.adam_eps,
        }
    }

    /// Main-agent PPO settings; the pure-exploration agent reuses them with
    /// its own reward.
    pub fn ppo_config(&self) -> PpoConfig {
        let p = &self.ppo;
        PpoConfig {
            hidden: self.net.hidden_dims.clone(),
            share_encoder: p.share_encoder,
            gamma: p.gamma,
            gae_lambda: p.gae_lambda,
            lr: p.lr,
            clip_range: p.clip,
            entropy_coeff: p.entropy,
            vf_coeff: p.vf_coeff,
            epochs: p.epochs,
            batch_size: p.batch,
            max_grad_norm: p.grad_clip,
            adam_eps: p.adam_eps,
            normalize_advantages: p.norm_adv,
            beta: p.beta,
        }
    }

    pub fn explore_go(&self) -> ExploreGoConfig {
        let e = &self.explorego;
        ExploreGoConfig {
            enabled: e.enabled,
            k_max: e.k,
            pe_policy: e.pe_policy,
            include_pe: e.include_pe,
            pe_epsilon: e.pe_epsilon,
        }
    }
}

/// Rewrites `{"a.b": 1}` as `{"a": {"b": 1}}`, recursively.
fn expand_dotted(v: Value) -> Result<Value> {
    let Value::Object(map) = v else {
        return Err(config("config must be a JSON object"));
    };
    let mut out = Value::Object(Map::new());
    for (k, val) in map {
        let val = if val.is_object() { expand_dotted(val)? } else { val };
        let parts: Vec<&str> = k.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(config(format!("malformed key {k:?}")));
        }
        let mut nested = val;
        for p in parts.iter().skip(1).rev() {
            let mut m = Map::new();
            m.insert(p.to_string(), nested);
            nested = Value::Object(m);
        }
        let mut single = Map::new();
        single.insert(parts[0].to_string(), nested);
        merge_free(&mut out, Value::Object(single), "")?;
    }
    Ok(out)
}

/// Union of two user objects; the same leaf given twice is an error.
fn merge_free(dst: &mut Value, src: Value, path: &str) -> Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let p = join(path, &k);
                match d.get_mut(&k) {
                    Some(existing) if existing.is_object() && v.is_object() => merge_free(existing, v, &p)?,
                    Some(_) => return Err(config(format!("{p}: given more than once"))),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
            Ok(())
        }
        _ => Err(config(format!("{path}: given more than once"))),
    }
}

/// Overlays `user` on `defaults`. Only keys present in the defaults exist.
fn merge(defaults: &mut Value, user: &Value, path: &str) -> Result<()> {
    let Value::Object(u) = user else { unreachable!("merge is called on objects") };
    let Value::Object(d) = defaults else {
        return Err(config(format!("{path}: expected a value, found an object")));
    };
    for (k, v) in u {
        let p = join(path, k);
        let Some(slot) = d.get_mut(k) else {
            return Err(config(format!("{p}: unknown key")));
        };
        if slot.is_object() {
            if !v.is_object() {
                return Err(config(format!("{p}: expected an object")));
            }
            merge(slot, v, &p)?;
        } else {
            if v.is_object() {
                return Err(config(format!("{p}: expected a value, found an object")));
            }
            *slot = v.clone();
        }
    }
    Ok(())
}

fn join(path: &str, k: &str) -> String {
    if path.is_empty() {
        k.to_string()
    } else {
        format!("{path}.{k}")
    }
}
