use rand::Rng as _;

use crate::envs::ActionId;
use crate::seed::Rng;

/// Categorical distribution over actions, parameterised by logits.
#[derive(Debug, Clone)]
pub struct Categorical {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f32]) -> Self {
        let max = logits.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let shifted: Vec<f64> = logits.iter().map(|&z| f64::from(z - max)).collect();
        let log_z = shifted.iter().map(|z| z.exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = shifted.iter().map(|z| z - log_z).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self { probs, log_probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Inverse-CDF sample from one uniform draw.
    pub fn sample(&self, rng: &mut Rng) -> ActionId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return ActionId(i);
            }
        }
        // u landed in the rounding gap above the final cumulative sum.
        ActionId(self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
    }

    pub fn log_prob(&self, a: ActionId) -> f64 {
        self.log_probs[a.0]
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().zip(&self.log_probs).map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 }).sum::<f64>()
    }

    /// Most probable action, lowest index on ties.
    pub fn mode(&self) -> ActionId {
        ActionId(crate::oracle::argmax(&self.probs))
    }

    /// `d log p(a) / d logits`.
    pub fn grad_log_prob(&self, a: ActionId) -> Vec<f64> {
        self.probs.iter().enumerate().map(|(j, p)| if j == a.0 { 1.0 - p } else { -p }).collect()
    }

    /// `d H / d logits = -p_j (log p_j + H)`.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs.iter().zip(&self.log_probs).map(|(p, l)| -p * (l + h)).collect()
    }
}
