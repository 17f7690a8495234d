//! Finite-difference gradient checks of the networks the agents build, each
//! under the loss its agent trains it with. Losses are re-derived here in f64.

use explore_go::agents::{DqnAgent, DqnConfig, PpoAgent, PpoConfig};
use explore_go::config::{AlgoName, RunConfig};
use explore_go::envs::EnvName;
use explore_go::envs::{gen_cross_context_sets, gen_fourrooms_context_sets, ActionId, CrossEnv, Env, FourRoomsEnv};
use explore_go::neural::{Categorical, Mlp};
use explore_go::seed;

use super::{check_gradient, encode_batch, param_subset, GradReport, RefMlp};

pub const H: f64 = 1e-4;
pub const TOL: f64 = 1e-3;

pub struct Case {
    pub name: String,
    pub report: GradReport,
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    z.iter().map(|v| v - lse).collect()
}

struct Batch {
    x: Vec<f64>,
    x32: Vec<f32>,
    n: usize,
    actions: Vec<usize>,
    advantages: Vec<f64>,
    targets: Vec<f64>,
}

fn batch_for(env: &Env, master: u64) -> Batch {
    let states: Vec<_> = match env {
        Env::Cross(_) => gen_cross_context_sets().train.contexts,
        Env::FourRooms(e) => gen_fourrooms_context_sets(master, 4, 1, e.grid()).unwrap().train.contexts,
    }
    .iter()
    .map(|c| env.start_state(c).unwrap())
    .collect();
    let x32 = encode_batch(env, &states);
    let n = states.len();
    let na = env.action_count();
    Batch {
        x: x32.iter().map(|&v| f64::from(v)).collect(),
        x32,
        n,
        actions: (0..n).map(|i| (i * 7 + 1) % na).collect(),
        advantages: (0..n).map(|i| [0.8, -1.3, 0.4, 1.1][i % 4]).collect(),
        targets: (0..n).map(|i| [0.9, 0.2, -0.4, 0.6][i % 4]).collect(),
    }
}

const ENT: f64 = 0.01;
const VF: f64 = 0.5;

/// `-mean(A log pi(a|s)) - c_e mean(H)` from logits.
fn actor_loss(logits: &[f64], b: &Batch, na: usize) -> f64 {
    let mut l = 0.0;
    for i in 0..b.n {
        let lp = log_softmax(&logits[i * na..(i + 1) * na]);
        let h: f64 = -lp.iter().map(|v| v.exp() * v).sum::<f64>();
        l += -b.advantages[i] * lp[b.actions[i]] - ENT * h;
    }
    l / b.n as f64
}

fn actor_dlogits(logits: &[f32], b: &Batch, na: usize) -> Vec<f32> {
    let mut d = vec![0.0f32; logits.len()];
    for i in 0..b.n {
        let dist = Categorical::from_logits(&logits[i * na..(i + 1) * na]);
        let glp = dist.grad_log_prob(ActionId(b.actions[i]));
        let ge = dist.grad_entropy();
        for j in 0..na {
            d[i * na + j] = ((-b.advantages[i] * glp[j] - ENT * ge[j]) / b.n as f64) as f32;
        }
    }
    d
}

fn critic_loss(v: &[f64], b: &Batch) -> f64 {
    v.iter().zip(&b.targets).map(|(v, t)| VF * (v - t).powi(2)).sum::<f64>() / b.n as f64
}

fn critic_dv(v: &[f32], b: &Batch) -> Vec<f32> {
    v.iter().zip(&b.targets).map(|(&v, t)| (2.0 * VF * (f64::from(v) - t) / b.n as f64) as f32).collect()
}

/// Squared error on the taken action's value.
fn td_loss(q: &[f64], b: &Batch, na: usize) -> f64 {
    (0..b.n).map(|i| (q[i * na + b.actions[i]] - b.targets[i]).powi(2)).sum::<f64>() / b.n as f64
}

fn td_dq(q: &[f32], b: &Batch, na: usize) -> Vec<f32> {
    let mut d = vec![0.0f32; q.len()];
    for i in 0..b.n {
        let j = i * na + b.actions[i];
        d[j] = (2.0 * (f64::from(q[j]) - b.targets[i]) / b.n as f64) as f32;
    }
    d
}

/// One standalone network under a loss on its output.
fn single(
    name: &str,
    net: &Mlp,
    b: &Batch,
    per_layer: usize,
    loss: &dyn Fn(&[f64]) -> f64,
    dloss: &dyn Fn(&[f32]) -> Vec<f32>,
) -> Case {
    let cache = net.forward_batch(&b.x32, b.n).unwrap();
    let mut g = net.zero_grads();
    net.backward(&cache, &dloss(cache.output()), &mut g, false).unwrap();
    let reference = RefMlp::of(net);
    let trace = reference.trace(&b.x, b.n);
    let eval = |i: usize, d: f64| {
        let (y, pat) = reference.perturbed(&trace, i, d);
        (loss(&y), pat)
    };
    let report = check_gradient(&g, &param_subset(net.sizes(), per_layer), H, &eval);
    Case { name: name.to_string(), report }
}

fn dqn_cases(env: &Env, hidden: &[usize], per_layer: usize) -> Vec<Case> {
    let cfg = DqnConfig { hidden: hidden.to_vec(), ..RunConfig::defaults(EnvName::FourRooms, AlgoName::Dqn).dqn_config() };
    let agent = DqnAgent::new(env.obs_len(), env.action_count(), cfg, &mut seed::stream(3, "gradcheck", 0));
    let b = batch_for(env, 5);
    let na = env.action_count();
    [("q", agent.q_net()), ("u", agent.u_net())]
        .into_iter()
        .map(|(name, net)| single(name, net, &b, per_layer, &|y| td_loss(y, &b, na), &|y| td_dq(y, &b, na)))
        .collect()
}

fn separate_ppo_cases(env: &Env, hidden: &[usize], per_layer: usize) -> Vec<Case> {
    let cfg = PpoConfig { hidden: hidden.to_vec(), share_encoder: false, ..RunConfig::defaults(EnvName::Illustrative, AlgoName::Ppo).ppo_config() };
    let agent = PpoAgent::new(env.obs_len(), env.action_count(), cfg, &mut seed::stream(4, "gradcheck", 0)).unwrap();
    let nets = agent.networks();
    let b = batch_for(env, 6);
    let na = env.action_count();
    vec![
        single("actor", nets[0], &b, per_layer, &|y| actor_loss(y, &b, na), &|y| actor_dlogits(y, &b, na)),
        single("critic", nets[1], &b, per_layer, &|y| critic_loss(y, &b), &|y| critic_dv(y, &b)),
    ]
}

/// Shared trunk with actor and critic heads; the loss is the sum of both.
fn shared_ppo_cases(env: &Env, hidden: &[usize], per_layer: usize) -> Vec<Case> {
    let cfg = PpoConfig { hidden: hidden.to_vec(), share_encoder: true, ..RunConfig::defaults(EnvName::FourRooms, AlgoName::Ppo).ppo_config() };
    let agent = PpoAgent::new(env.obs_len(), env.action_count(), cfg, &mut seed::stream(5, "gradcheck", 0)).unwrap();
    let nets = agent.networks();
    let (trunk, actor, critic) = (nets[0], nets[1], nets[2]);
    let b = batch_for(env, 7);
    let na = env.action_count();

    let tc = trunk.forward_batch(&b.x32, b.n).unwrap();
    let ac = actor.forward_batch(tc.output(), b.n).unwrap();
    let cc = critic.forward_batch(tc.output(), b.n).unwrap();
    let mut ga = actor.zero_grads();
    let mut gc = critic.zero_grads();
    let mut gt = trunk.zero_grads();
    let mut dfeat = actor.backward(&ac, &actor_dlogits(ac.output(), &b, na), &mut ga, true).unwrap().unwrap();
    let dc = critic.backward(&cc, &critic_dv(cc.output(), &b), &mut gc, true).unwrap().unwrap();
    for (d, c) in dfeat.iter_mut().zip(dc) {
        *d += c;
    }
    trunk.backward(&tc, &dfeat, &mut gt, false).unwrap();

    let refs = [RefMlp::of(trunk), RefMlp::of(actor), RefMlp::of(critic)];
    let trunk_trace = refs[0].trace(&b.x, b.n);
    let feat = trunk_trace.output();
    let heads = [refs[1].trace(feat, b.n), refs[2].trace(feat, b.n)];
    let eval_with = |which: usize, i: usize, d: f64| {
        let (logits, v, pat) = match which {
            0 => {
                let (feat, mut pat) = refs[0].perturbed(&trunk_trace, i, d);
                let (logits, pa) = refs[1].forward(&feat, b.n);
                let (v, pc) = refs[2].forward(&feat, b.n);
                pat.extend(pa);
                pat.extend(pc);
                (logits, v, pat)
            }
            1 => {
                let (logits, pat) = refs[1].perturbed(&heads[0], i, d);
                (logits, heads[1].output().to_vec(), pat)
            }
            _ => {
                let (v, pat) = refs[2].perturbed(&heads[1], i, d);
                (heads[0].output().to_vec(), v, pat)
            }
        };
        (actor_loss(&logits, &b, na) + critic_loss(&v, &b), pat)
    };
    [("shared trunk", trunk, &gt), ("shared actor", actor, &ga), ("shared critic", critic, &gc)]
        .into_iter()
        .enumerate()
        .map(|(k, (name, net, g))| Case {
            name: name.to_string(),
            report: check_gradient(g, &param_subset(net.sizes(), per_layer), H, &|i, d| eval_with(k, i, d)),
        })
        .collect()
}

/// Every architecture the agents use: Cross PPO (separate actor and critic,
/// every parameter checked), Four Rooms PPO (shared encoder) and Four Rooms
/// DQN (Q and U heads), the latter two on all biases plus `per_layer`
/// weights per layer.
pub fn all_cases(per_layer: usize) -> Vec<Case> {
    let cross = Env::Cross(CrossEnv);
    let rooms = Env::FourRooms(FourRoomsEnv::new(9).unwrap());
    let mut out = Vec::new();
    out.extend(separate_ppo_cases(&cross, &[128, 64, 32], usize::MAX));
    out.extend(shared_ppo_cases(&rooms, &[512, 256], per_layer));
    out.extend(dqn_cases(&rooms, &[512, 256], per_layer));
    for c in &mut out {
        c.name = format!("{} ({} params checked)", c.name, c.report.checked);
    }
    out
}
