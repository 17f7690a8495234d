//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the crate's own solvers or reductions.

#![allow(dead_code)]

pub mod gradcheck;

use std::collections::{HashMap, VecDeque};

use explore_go::envs::{ActionId, Context, Env, UnderlyingState};
use explore_go::neural::Mlp;

/// Straightforward f64 evaluator for an [`Mlp`]'s parameter layout: per layer
/// an `in x out` row-major weight block followed by `out` biases.
pub struct RefMlp {
    pub sizes: Vec<usize>,
    pub relu_output: bool,
    pub params: Vec<f64>,
}

impl RefMlp {
    pub fn of(net: &Mlp) -> Self {
        Self {
            sizes: net.sizes().to_vec(),
            relu_output: net.relu_output(),
            params: net.params().iter().map(|&p| f64::from(p)).collect(),
        }
    }

    /// Output rows and the sign pattern of every rectified pre-activation.
    pub fn forward(&self, x: &[f64], batch: usize) -> (Vec<f64>, Vec<bool>) {
        let t = self.trace(x, batch);
        let pattern = t.pre.iter().enumerate().flat_map(|(l, z)| self.pattern(l, z)).collect();
        (t.output().to_vec(), pattern)
    }

    /// Layer inputs and pre-activations of a forward pass.
    pub fn trace(&self, x: &[f64], batch: usize) -> Trace {
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::new();
        for l in 0..self.layers() {
            let z = self.affine(l, inputs.last().unwrap(), batch);
            inputs.push(self.activate(l, &z));
            pre.push(z);
        }
        Trace { batch, inputs, pre }
    }

    /// Output and rectifier pattern after adding `delta` to parameter `idx`,
    /// recomputing only from the layer that owns it.
    pub fn perturbed(&self, t: &Trace, idx: usize, delta: f64) -> (Vec<f64>, Vec<bool>) {
        let (l, within) = self.locate(idx);
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let mut z = t.pre[l].clone();
        for r in 0..t.batch {
            if within < n_in * n_out {
                let (i, j) = (within / n_out, within % n_out);
                z[r * n_out + j] += delta * t.inputs[l][r * n_in + i];
            } else {
                z[r * n_out + within - n_in * n_out] += delta;
            }
        }
        let mut pattern = self.pattern(l, &z);
        let mut act = self.activate(l, &z);
        for k in l + 1..self.layers() {
            let z = self.affine(k, &act, t.batch);
            pattern.extend(self.pattern(k, &z));
            act = self.activate(k, &z);
        }
        (act, pattern)
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn offset(&self, l: usize) -> usize {
        self.sizes.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn locate(&self, idx: usize) -> (usize, usize) {
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let n = w[0] * w[1] + w[1];
            if idx < off + n {
                return (l, idx - off);
            }
            off += n;
        }
        panic!("parameter index {idx} out of range");
    }

    fn rectified(&self, l: usize) -> bool {
        l + 1 < self.layers() || self.relu_output
    }

    fn affine(&self, l: usize, x: &[f64], batch: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        let mut out = vec![0.0; batch * n_out];
        for r in 0..batch {
            let row = &mut out[r * n_out..(r + 1) * n_out];
            row.copy_from_slice(b);
            for i in 0..n_in {
                let xi = x[r * n_in + i];
                if xi != 0.0 {
                    for (o, wij) in row.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                        *o += xi * wij;
                    }
                }
            }
        }
        out
    }

    fn activate(&self, l: usize, z: &[f64]) -> Vec<f64> {
        if self.rectified(l) { z.iter().map(|v| v.max(0.0)).collect() } else { z.to_vec() }
    }

    fn pattern(&self, l: usize, z: &[f64]) -> Vec<bool> {
        if self.rectified(l) { z.iter().map(|&v| v > 0.0).collect() } else { Vec::new() }
    }
}

pub struct Trace {
    pub batch: usize,
    /// `inputs[l]` feeds layer `l`; the last entry is the network output.
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().unwrap()
    }
}

/// Worst relative error between analytic and central-difference gradients.
pub struct GradReport {
    pub worst: f64,
    pub checked: usize,
    /// Parameters skipped because the perturbation flipped a rectifier.
    pub skipped: usize,
}

/// Relative error with a floor so vanishing gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Which parameter indices to check: up to `per_layer` evenly spaced
/// weights and as many biases per layer. `usize::MAX` selects everything.
pub fn param_subset(sizes: &[usize], per_layer: usize) -> Vec<usize> {
    let mut idx = Vec::new();
    let mut off = 0;
    for w in sizes.windows(2) {
        let nw = w[0] * w[1];
        idx.extend((0..nw).step_by(nw.div_ceil(per_layer).max(1)).map(|i| off + i));
        idx.extend((nw..nw + w[1]).step_by(w[1].div_ceil(per_layer).max(1)).map(|i| off + i));
        off += nw + w[1];
    }
    idx
}

/// Checks `grads` (the crate's reverse-mode result for `loss`) against
/// central differences. `eval(i, d)` returns `(loss, rectifier pattern)`
/// with `d` added to parameter `i`.
pub fn check_gradient(
    grads: &[f32],
    subset: &[usize],
    h: f64,
    eval: &dyn Fn(usize, f64) -> (f64, Vec<bool>),
) -> GradReport {
    let mut report = GradReport { worst: 0.0, checked: 0, skipped: 0 };
    for &i in subset {
        let (lp, pat_p) = eval(i, h);
        let (lm, pat_m) = eval(i, -h);
        if pat_p != pat_m {
            report.skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        report.worst = report.worst.max(rel_err(f64::from(grads[i]), fd));
        report.checked += 1;
    }
    report
}

/// Row-major observations of `states`.
pub fn encode_batch(env: &Env, states: &[UnderlyingState]) -> Vec<f32> {
    let len = env.obs_len();
    let mut x = vec![0.0; states.len() * len];
    for (r, s) in states.iter().enumerate() {
        env.encode_into(s, &mut x[r * len..(r + 1) * len]);
    }
    x
}

/// Breadth-first exploration using only `Env::step`, followed by a reverse
/// breadth-first pass from goal-entering moves. For these sparse-reward,
/// deterministic environments `V*(s) = gamma^(d(s) - 1)` where `d(s)` is the
/// fewest moves to the goal.
pub struct DistanceOracle {
    pub states: Vec<UnderlyingState>,
    pub index: HashMap<UnderlyingState, usize>,
    /// Moves to the goal; `None` when the goal cannot be reached.
    pub dist: Vec<Option<usize>>,
}

impl DistanceOracle {
    pub fn build(env: &Env, starts: &[Context]) -> Self {
        let na = env.action_count();
        let mut states = Vec::new();
        let mut index = HashMap::new();
        let mut queue = VecDeque::new();
        for c in starts {
            let s = env.start_state(c).unwrap();
            if !index.contains_key(&s) {
                index.insert(s, states.len());
                states.push(s);
                queue.push_back(s);
            }
        }
        let mut preds: Vec<Vec<usize>> = Vec::new();
        let mut goal_adjacent = Vec::new();
        while let Some(s) = queue.pop_front() {
            let i = index[&s];
            if s.is_terminal() {
                continue;
            }
            for a in 0..na {
                let out = env.step(&s, ActionId(a)).unwrap();
                if out.done {
                    goal_adjacent.push(i);
                }
                let j = *index.entry(out.state).or_insert_with(|| {
                    states.push(out.state);
                    queue.push_back(out.state);
                    states.len() - 1
                });
                if preds.len() < states.len() {
                    preds.resize(states.len(), Vec::new());
                }
                preds[j].push(i);
            }
        }
        preds.resize(states.len(), Vec::new());
        let mut dist = vec![None; states.len()];
        let mut q = VecDeque::new();
        for i in goal_adjacent {
            if dist[i].is_none() {
                dist[i] = Some(1);
                q.push_back(i);
            }
        }
        while let Some(j) = q.pop_front() {
            let d = dist[j].unwrap();
            for &i in &preds[j] {
                if dist[i].is_none() && !states[i].is_terminal() {
                    dist[i] = Some(d + 1);
                    q.push_back(i);
                }
            }
        }
        Self { states, index, dist }
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(|&i| !self.states[i].is_terminal())
    }

    pub fn v(&self, s: &UnderlyingState, gamma: f64) -> f64 {
        let i = self.index[s];
        match self.dist[i] {
            _ if s.is_terminal() => 0.0,
            Some(d) => gamma.powi(d as i32 - 1),
            None => 0.0,
        }
    }
}

/// Per-category check that each count lies within `z` standard deviations
/// of its binomial expectation. Returns the largest standardised deviation.
pub fn max_binomial_z(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let sd = (n * p * (1.0 - p)).sqrt();
            if sd == 0.0 {
                if (c as f64 - n * p).abs() < 0.5 { 0.0 } else { f64::INFINITY }
            } else {
                (c as f64 - n * p).abs() / sd
            }
        })
        .fold(0.0, f64::max)
}

/// Sample mean and 1.96 * standard error (zero for a single value).
pub fn mean_and_ci(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Trains `cfg` once with Explore-Go off and once with it on at `K = 0`.
/// Returns the transition streams and the CSV bytes of both runs.
pub fn k_zero_runs(cfg: &explore_go::config::RunConfig, seed: u64) -> [(Vec<explore_go::transition::Transition>, Vec<u8>); 2] {
    let run = |enabled: bool| {
        let mut c = cfg.clone();
        c.explorego.enabled = enabled;
        c.explorego.k = 0;
        let mut stream = Vec::new();
        let mut hook = |t: &explore_go::transition::Transition| stream.push(*t);
        let out = explore_go::experiment::train(&c, seed, Some(&mut hook)).unwrap();
        let mut sink = explore_go::metrics::CsvSink::new(Vec::new());
        for r in &out.records {
            sink.append(r).unwrap();
        }
        (stream, sink.into_inner().unwrap())
    };
    [run(false), run(true)]
}

/// Greedy policy on distances: move to the successor closest to the goal.
pub fn distance_greedy(env: &Env, d: &DistanceOracle, s: &UnderlyingState) -> ActionId {
    let score = |a: usize| {
        let out = env.step(s, ActionId(a)).unwrap();
        if out.done {
            0
        } else {
            d.index.get(&out.state).and_then(|&j| d.dist[j]).unwrap_or(usize::MAX)
        }
    };
    ActionId((0..env.action_count()).min_by_key(|&a| score(a)).unwrap())
}
