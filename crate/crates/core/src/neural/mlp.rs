use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::seed::Rng;

/// Dense network: affine layers with ReLU between them and an identity (or,
/// for shared encoders, ReLU) output.
///
/// All parameters live in one flat vector. Layer `l` stores its weights as an
/// `in x out` row-major block followed by `out` biases, so row `i` of a
/// weight block is the fan-out of input `i`. That layout lets the forward
/// pass skip zero inputs, which dominate the sparse gridworld encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    relu_output: bool,
    params: Vec<f32>,
}

/// Per-layer activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f32>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f32] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    /// Hidden layers use He-uniform init; the output layer is uniform with
    /// bound `output_gain * sqrt(3 / fan_in)`. Biases start at zero.
    pub fn new(sizes: &[usize], relu_output: bool, output_gain: f32, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut params = Vec::with_capacity(Self::param_count_for(sizes));
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let last = l + 1 == layers;
            let bound = if last && !relu_output {
                output_gain * (3.0 / n_in as f32).sqrt()
            } else {
                (6.0 / n_in as f32).sqrt()
            };
            params.extend((0..n_in * n_out).map(|_| rng.random_range(-bound..=bound)));
            params.extend(std::iter::repeat_n(0.0, n_out));
        }
        Self { sizes: sizes.to_vec(), relu_output, params }
    }

    /// Builds a network from explicit parameters.
    pub fn from_params(sizes: &[usize], relu_output: bool, params: Vec<f32>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != Self::param_count_for(sizes) {
            return Err(contract("parameter vector does not match layer sizes"));
        }
        Ok(Self { sizes: sizes.to_vec(), relu_output, params })
    }

    fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn relu_output(&self) -> bool {
        self.relu_output
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn zero_grads(&self) -> Vec<f32> {
        vec![0.0; self.params.len()]
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    fn activates(&self, layer: usize) -> bool {
        layer + 2 < self.sizes.len() || self.relu_output
    }

    /// Batched forward pass. `x` is `batch x input_size`, row-major.
    pub fn forward_batch(&self, x: &[f32], batch: usize) -> Result<ForwardCache> {
        if x.len() != batch * self.input_size() {
            return Err(contract(format!(
                "input length {} != batch {batch} x input size {}",
                x.len(),
                self.input_size()
            )));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for (l, (off, n_in, n_out)) in self.layer_offsets().enumerate() {
            let w = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = acts.last().unwrap();
            let mut out = vec![0.0f32; batch * n_out];
            for b in 0..batch {
                let xb = &input[b * n_in..(b + 1) * n_in];
                let yb = &mut out[b * n_out..(b + 1) * n_out];
                yb.copy_from_slice(bias);
                for (i, &xi) in xb.iter().enumerate() {
                    if xi != 0.0 {
                        axpy(xi, &w[i * n_out..(i + 1) * n_out], yb);
                    }
                }
                if self.activates(l) {
                    for v in yb.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
            }
            acts.push(out);
        }
        Ok(ForwardCache { batch, acts })
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f32]) -> Result<Vec<f32>> {
        let mut cache = self.forward_batch(x, 1)?;
        Ok(cache.acts.pop().unwrap())
    }

    /// Reverse-mode pass. Accumulates `dL/dparams` into `grads` and returns
    /// `dL/dinput` (`batch x input_size`) when `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dy: &[f32],
        grads: &mut [f32],
        want_input_grad: bool,
    ) -> Result<Option<Vec<f32>>> {
        let batch = cache.batch;
        if dy.len() != batch * self.output_size() || grads.len() != self.params.len() {
            return Err(contract("gradient buffer shapes do not match the network"));
        }
        let layers: Vec<_> = self.layer_offsets().collect();
        let mut delta = dy.to_vec();
        if self.relu_output {
            mask_relu(&mut delta, cache.acts.last().unwrap());
        }
        for l in (0..layers.len()).rev() {
            let (off, n_in, n_out) = layers[l];
            let input = &cache.acts[l];
            let (gw, rest) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let gb = rest;
            for b in 0..batch {
                let db = &delta[b * n_out..(b + 1) * n_out];
                for (g, d) in gb.iter_mut().zip(db) {
                    *g += d;
                }
                let xb = &input[b * n_in..(b + 1) * n_in];
                for (i, &xi) in xb.iter().enumerate() {
                    if xi != 0.0 {
                        axpy(xi, db, &mut gw[i * n_out..(i + 1) * n_out]);
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            // Below layer 0 the input is a ReLU output; inactive units get no gradient.
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0f32; batch * n_in];
            for b in 0..batch {
                let db = &delta[b * n_out..(b + 1) * n_out];
                let xb = &input[b * n_in..(b + 1) * n_in];
                let pb = &mut prev[b * n_in..(b + 1) * n_in];
                for (i, p) in pb.iter_mut().enumerate() {
                    if l == 0 || xb[i] > 0.0 {
                        *p = dot(&w[i * n_out..(i + 1) * n_out], db);
                    }
                }
            }
            delta = prev;
        }
        Ok(Some(delta))
    }
}

fn mask_relu(delta: &mut [f32], post: &[f32]) {
    for (d, &a) in delta.iter_mut().zip(post) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
}

#[inline]
fn axpy(a: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eight-lane accumulation so the reduction vectorises.
#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn zero_network_outputs_zero() {
        let sizes = [4, 3, 2];
        let net = Mlp::from_params(&sizes, false, vec![0.0; 4 * 3 + 3 + 3 * 2 + 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut p = vec![0.0; 9 + 3];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_params(&[3, 3], false, p).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = seed::stream(0, "t", 0);
        let net = Mlp::new(&[5, 8, 3], false, 1.0, &mut rng);
        let x: Vec<f32> = (0..10).map(|i| i as f32 * 0.1 - 0.4).collect();
        let cache = net.forward_batch(&x, 2).unwrap();
        let mut g = net.zero_grads();
        let dx = net.backward(&cache, &[0.0; 6], &mut g, true).unwrap().unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_unit_blocks_gradient() {
        // hidden unit 0 has bias -10 so it never activates.
        let sizes = [2, 2, 1];
        let p = vec![0.5, 0.5, 0.5, 0.5, -10.0, 0.0, 1.0, 1.0, 0.0];
        let net = Mlp::from_params(&sizes, false, p).unwrap();
        let cache = net.forward_batch(&[1.0, 1.0], 1).unwrap();
        let mut g = net.zero_grads();
        net.backward(&cache, &[1.0], &mut g, false).unwrap();
        // weights into unit 0 are p[0] and p[2]; its bias p[4]; outgoing p[6].
        assert_eq!((g[0], g[2], g[4], g[6]), (0.0, 0.0, 0.0, 0.0));
        assert!(g[1] != 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut rng = seed::stream(0, "t", 0);
        let net = Mlp::new(&[3, 2], false, 1.0, &mut rng);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }
}
