use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeParams {
    pub gamma: f64,
    pub lambda: f64,
}

/// Generalised advantage estimation over one contiguous trajectory segment.
///
/// `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t` and
/// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`, where
/// `V_T = bootstrap_value`. Returns `(advantages, returns = A + V)`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    p: GaeParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(contract("gae: rewards, values and dones must have equal length"));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let keep = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + p.gamma * next_value * keep - values[t];
        next_adv = delta + p.gamma * p.lambda * keep * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = gae(&[1.0], &[0.5], &[true], 9.0, GaeParams { gamma: 0.9, lambda: 0.95 }).unwrap();
        assert_eq!(a, vec![0.5]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn lambda_zero_gives_td_errors() {
        let p = GaeParams { gamma: 0.9, lambda: 0.0 };
        let (a, _) = gae(&[0.0, 1.0, 0.0], &[0.2, 0.4, 0.1], &[false, false, false], 0.3, p).unwrap();
        let td = [0.0 + 0.9 * 0.4 - 0.2, 1.0 + 0.9 * 0.1 - 0.4, 0.0 + 0.9 * 0.3 - 0.1];
        for (x, y) in a.iter().zip(td) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(gae(&[0.0], &[], &[false], 0.0, GaeParams { gamma: 0.9, lambda: 0.9 }).is_err());
    }
}
