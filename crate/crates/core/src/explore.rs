//! Count-based intrinsic reward, pure-exploration policies and the TEE
//! per-worker exploration coefficients.

use std::collections::HashMap;
use std::hash::Hash;

use rand::Rng as _;
use serde::Serialize;

use crate::envs::{ActionId, UnderlyingState};
use crate::error::{config, Result};
use crate::seed::Rng;

/// Global state-action counts shared by all workers, plus one episodic table
/// per environment instance.
#[derive(Debug, Clone)]
pub struct CountTables<S = UnderlyingState> {
    global: HashMap<(S, ActionId), u64>,
    episodic: Vec<HashMap<(S, ActionId), u64>>,
}

impl<S: Clone + Eq + Hash> CountTables<S> {
    pub fn new(workers: usize) -> Self {
        Self { global: HashMap::new(), episodic: vec![HashMap::new(); workers.max(1)] }
    }

    /// Increments both counts, then returns
    /// `eta = N_global^{-1/2} * [N_episode == 1]` from the incremented values.
    pub fn observe_and_reward(&mut self, worker: usize, s: &S, a: ActionId) -> f64 {
        let key = (s.clone(), a);
        let g = {
            let c = self.global.entry(key.clone()).or_insert(0);
            *c += 1;
            *c
        };
        let e = {
            let c = self.episodic[worker].entry(key).or_insert(0);
            *c += 1;
            *c
        };
        if e == 1 {
            1.0 / (g as f64).sqrt()
        } else {
            0.0
        }
    }

    /// Clears one worker's episodic table; global counts are untouched.
    pub fn reset_episode(&mut self, worker: usize) {
        self.episodic[worker].clear();
    }

    pub fn global_count(&self, s: &S, a: ActionId) -> u64 {
        self.global.get(&(s.clone(), a)).copied().unwrap_or(0)
    }

    pub fn episode_count(&self, worker: usize, s: &S, a: ActionId) -> u64 {
        self.episodic[worker].get(&(s.clone(), a)).copied().unwrap_or(0)
    }

    pub fn episode_is_empty(&self, worker: usize) -> bool {
        self.episodic[worker].is_empty()
    }

    pub fn workers(&self) -> usize {
        self.episodic.len()
    }
}

/// `beta_i = phi * lambda^(1 + alpha * i / (N - 1))` for `N` workers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaSchedule {
    pub phi: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub workers: usize,
}

impl BetaSchedule {
    pub fn new(phi: f64, lambda: f64, alpha: f64, workers: usize) -> Result<Self> {
        if workers < 2 {
            return Err(config(format!("tee: needs at least 2 workers, got {workers}")));
        }
        if !(phi > 0.0) {
            return Err(config("tee.phi must be positive"));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(config("tee.lambda must lie in (0, 1]"));
        }
        if !(alpha >= 0.0) {
            return Err(config("tee.alpha must be non-negative"));
        }
        Ok(Self { phi, lambda, alpha, workers })
    }

    pub fn betas(&self) -> Vec<f64> {
        let last = (self.workers - 1) as f64;
        (0..self.workers)
            .map(|i| self.phi * self.lambda.powf(1.0 + i as f64 / last * self.alpha))
            .collect()
    }
}

pub fn tee_betas(phi: f64, lambda: f64, alpha: f64, workers: usize) -> Result<Vec<f64>> {
    Ok(BetaSchedule::new(phi, lambda, alpha, workers)?.betas())
}

pub fn pure_policy_uniform(rng: &mut Rng, action_count: usize) -> ActionId {
    ActionId(rng.random_range(0..action_count.max(1)))
}

/// Epsilon-greedy on the intrinsic head `U`, lowest-index tie-break.
pub fn pure_policy_ugreedy(u: &[f32], epsilon: f64, rng: &mut Rng) -> ActionId {
    let coin: f64 = rng.random();
    if coin < epsilon {
        return ActionId(rng.random_range(0..u.len()));
    }
    ActionId(argmax_f32(u))
}

pub(crate) fn argmax_f32(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn first_visit_pays_one() {
        let mut c = CountTables::<u8>::new(1);
        assert_eq!(c.observe_and_reward(0, &3, ActionId(0)), 1.0);
    }

    #[test]
    fn fourth_global_first_episodic_pays_half() {
        let mut c = CountTables::<u8>::new(1);
        for _ in 0..3 {
            c.observe_and_reward(0, &3, ActionId(1));
            c.reset_episode(0);
        }
        assert_eq!(c.observe_and_reward(0, &3, ActionId(1)), 0.5);
    }

    #[test]
    fn repeat_within_episode_pays_nothing() {
        let mut c = CountTables::<u8>::new(1);
        c.observe_and_reward(0, &3, ActionId(1));
        assert_eq!(c.observe_and_reward(0, &3, ActionId(1)), 0.0);
    }

    #[test]
    fn reset_clears_only_episodic_and_is_idempotent() {
        let mut c = CountTables::<u8>::new(2);
        c.observe_and_reward(0, &1, ActionId(0));
        c.observe_and_reward(1, &1, ActionId(0));
        c.reset_episode(0);
        c.reset_episode(0);
        assert!(c.episode_is_empty(0));
        assert_eq!(c.episode_count(1, &1, ActionId(0)), 1);
        assert_eq!(c.global_count(&1, ActionId(0)), 2);
        assert!((c.observe_and_reward(0, &1, ActionId(0)) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tee_examples() {
        let b = tee_betas(0.5, 0.9, 25.0, 50).unwrap();
        assert!((b[0] - 0.45).abs() < 1e-12);
        assert!((b[49] - 0.5 * 0.9f64.powi(26)).abs() < 1e-12);
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert!(tee_betas(0.3, 1.0, 25.0, 4).unwrap().iter().all(|&x| x == 0.3));
        assert!(tee_betas(0.5, 0.9, 25.0, 1).is_err());
    }

    #[test]
    fn ugreedy_argmax_and_ties() {
        let mut rng = seed::stream(0, "t", 0);
        assert_eq!(pure_policy_ugreedy(&[0.2, 0.7, 0.1], 0.0, &mut rng), ActionId(1));
        assert_eq!(pure_policy_ugreedy(&[0.5, 0.5, 0.1], 0.0, &mut rng), ActionId(0));
    }

    #[test]
    fn uniform_single_action() {
        let mut rng = seed::stream(0, "t", 0);
        for _ in 0..10 {
            assert_eq!(pure_policy_uniform(&mut rng, 1), ActionId(0));
        }
    }
}
