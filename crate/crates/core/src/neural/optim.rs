use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::{contract, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f32], &[f32]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(contract("adam: parameter/gradient length mismatch"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let g = f64::from(g);
            let m_new = b1 * f64::from(*m) + (1.0 - b1) * g;
            let v_new = b2 * f64::from(*v) + (1.0 - b2) * g * g;
            *m = m_new as f32;
            *v = v_new as f32;
            let update = self.lr * (m_new / c1) / ((v_new / c2).sqrt() + self.eps);
            *p = (f64::from(*p) - update) as f32;
        }
        Ok(())
    }
}

/// Scales every group by `max_norm / norm` when the joint L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(groups: &mut [&mut [f32]], max_norm: f64) -> f64 {
    let sq: f64 = groups.iter().flat_map(|g| g.iter()).map(|&x| f64::from(x) * f64::from(x)).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = (max_norm / norm) as f32;
        for g in groups.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    assert_eq!(target.sizes(), online.sizes(), "soft update between different architectures");
    if tau >= 1.0 {
        target.params_mut().copy_from_slice(online.params());
        return;
    }
    let tau = tau as f32;
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}
