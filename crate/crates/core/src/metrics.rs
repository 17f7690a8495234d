//! Ground-truth diagnostics (coverage, buffer diversity, value error),
//! policy evaluation and the metrics CSV format `step,seed,split,metric,value`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::{ActionId, Context, ContextKind, Env, UnderlyingState};
use crate::error::{contract, Error, Result};
use crate::neural::Mlp;
use crate::oracle::{OracleTables, ReachableSet};
use crate::seed::Rng;

/// Every metric name a run may emit.
pub const METRICS: [&str; 12] = [
    "success_rate",
    "mean_return",
    "mean_disc_return",
    "coverage_sa",
    "buffer_diversity",
    "value_error",
    "loss_q",
    "loss_u",
    "loss_policy",
    "loss_value",
    "entropy",
    "pe_fraction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestReachable,
    TestUnreachable,
    Global,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestReachable => "test_reachable",
            Split::TestUnreachable => "test_unreachable",
            Split::Global => "global",
        }
    }

    pub fn is_test(self) -> bool {
        matches!(self, Split::TestReachable | Split::TestUnreachable)
    }
}

impl From<ContextKind> for Split {
    fn from(k: ContextKind) -> Self {
        match k {
            ContextKind::Train => Split::Train,
            ContextKind::ReachableTest => Split::TestReachable,
            ContextKind::UnreachableTest => Split::TestUnreachable,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test_reachable" => Ok(Split::TestReachable),
            "test_unreachable" => Ok(Split::TestUnreachable),
            "global" => Ok(Split::Global),
            _ => Err(contract(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub seed: u64,
    pub split: Split,
    pub metric: String,
    pub value: f64,
}

impl MetricRecord {
    pub fn new(step: u64, seed: u64, split: Split, metric: &str, value: f64) -> Self {
        debug_assert!(METRICS.contains(&metric), "unknown metric {metric}");
        Self { step, seed, split, metric: metric.to_string(), value }
    }
}

pub const CSV_HEADER: [&str; 5] = ["step", "seed", "split", "metric", "value"];

/// Seventeen significant digits in scientific notation; parses back exactly.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV writer that emits the header before the first row.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
    header_written: bool,
}

impl<W: Write> CsvSink<W> {
    pub fn new(w: W) -> Self {
        Self { inner: csv::Writer::from_writer(w), header_written: false }
    }

    pub fn append(&mut self, r: &MetricRecord) -> Result<()> {
        if !self.header_written {
            self.inner.write_record(CSV_HEADER)?;
            self.header_written = true;
        }
        self.inner.write_record([
            r.step.to_string(),
            r.seed.to_string(),
            r.split.as_str().to_string(),
            r.metric.clone(),
            format_value(r.value),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn write_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    let mut sink = CsvSink::new(std::fs::File::create(path)?);
    for r in records {
        sink.append(r)?;
    }
    sink.flush()
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRecord>> {
    parse_csv(std::fs::File::open(path)?)
}

pub fn parse_csv(r: impl std::io::Read) -> Result<Vec<MetricRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(contract(format!("unexpected metrics header {header:?}")));
    }
    let bad = |what: &str| contract(format!("malformed metrics row: bad {what}"));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != 5 {
            return Err(bad("field count"));
        }
        out.push(MetricRecord {
            step: row[0].parse().map_err(|_| bad("step"))?,
            seed: row[1].parse().map_err(|_| bad("seed"))?,
            split: row[2].parse()?,
            metric: row[3].to_string(),
            value: row[4].parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(out)
}

/// Fraction of reachable non-terminal `(state, action)` pairs in `visited`.
pub fn coverage<'a>(
    visited: impl IntoIterator<Item = &'a (UnderlyingState, ActionId)>,
    reachable: &ReachableSet<UnderlyingState>,
) -> Result<f64> {
    let total = reachable.state_action_count();
    if total == 0 {
        return Err(contract("coverage over an empty reachable set"));
    }
    let hits = visited
        .into_iter()
        .filter(|(s, a)| a.0 < reachable.action_count() && reachable.index_of(s).is_some_and(|i| !reachable.is_terminal(i)))
        .collect::<HashSet<_>>()
        .len();
    Ok(hits as f64 / total as f64)
}

/// Fraction of reachable non-terminal states present among `states`.
pub fn buffer_diversity<'a>(
    states: impl IntoIterator<Item = &'a UnderlyingState>,
    reachable: &ReachableSet<UnderlyingState>,
) -> f64 {
    let total = reachable.non_terminal().len();
    if total == 0 {
        return 0.0;
    }
    let seen: HashSet<usize> = states
        .into_iter()
        .filter_map(|s| reachable.index_of(s))
        .filter(|&i| !reachable.is_terminal(i))
        .collect();
    seen.len() as f64 / total as f64
}

/// Mean over non-terminal reachable states of `|max_a Q(s, a) - V*(s)|`.
pub fn value_error(
    q: &Mlp,
    env: &Env,
    reachable: &ReachableSet<UnderlyingState>,
    oracle: &OracleTables,
) -> Result<f64> {
    let nt = reachable.non_terminal();
    if nt.is_empty() {
        return Err(contract("value error over an empty reachable set"));
    }
    let len = env.obs_len();
    let na = q.output_size();
    let mut total = 0.0;
    const CHUNK: usize = 512;
    let mut x = Vec::with_capacity(CHUNK * len);
    for idx in nt.chunks(CHUNK) {
        x.clear();
        x.resize(idx.len() * len, 0.0);
        for (r, &i) in idx.iter().enumerate() {
            env.encode_into(&reachable.states()[i], &mut x[r * len..(r + 1) * len]);
        }
        let out = q.forward_batch(&x, idx.len())?;
        for (r, &i) in idx.iter().enumerate() {
            let row = &out.output()[r * na..(r + 1) * na];
            let best = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
            total += (f64::from(best) - oracle.v(i)).abs();
        }
    }
    Ok(total / nt.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_disc_return: f64,
}

/// Runs `episodes` deterministic-policy episodes on contexts drawn uniformly
/// from `contexts`. Success means reaching the goal before the time limit.
///
/// The policy must be deterministic: each distinct context is rolled out
/// once and its outcome reused.
pub fn evaluate(
    env: &Env,
    contexts: &[Context],
    episodes: usize,
    gamma: f64,
    policy: &mut dyn FnMut(&[f32]) -> Result<ActionId>,
    rng: &mut Rng,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(contract("evaluation needs at least one episode"));
    }
    if contexts.is_empty() {
        return Err(contract("evaluation over an empty context set"));
    }
    let mut cache: HashMap<usize, (f64, f64)> = HashMap::new();
    let mut obs = vec![0.0f32; env.obs_len()];
    let (mut succ, mut ret, mut disc) = (0.0, 0.0, 0.0);
    for _ in 0..episodes {
        let c = rng.random_range(0..contexts.len());
        let (r, d) = match cache.get(&c) {
            Some(&hit) => hit,
            None => {
                let out = rollout(env, &contexts[c], gamma, policy, &mut obs)?;
                cache.insert(c, out);
                out
            }
        };
        if r > 0.0 {
            succ += 1.0;
        }
        ret += r;
        disc += d;
    }
    let n = episodes as f64;
    Ok(EvalResult { success_rate: succ / n, mean_return: ret / n, mean_disc_return: disc / n })
}

/// One episode; returns `(undiscounted, discounted)` return.
fn rollout(
    env: &Env,
    ctx: &Context,
    gamma: f64,
    policy: &mut dyn FnMut(&[f32]) -> Result<ActionId>,
    obs: &mut [f32],
) -> Result<(f64, f64)> {
    let mut s = env.start_state(ctx)?;
    let (mut ret, mut disc, mut discount) = (0.0, 0.0, 1.0);
    for _ in 0..env.timeout() {
        env.encode_into(&s, obs);
        let out = env.step(&s, policy(obs)?)?;
        ret += out.reward;
        disc += discount * out.reward;
        discount *= gamma;
        s = out.state;
        if out.done {
            break;
        }
    }
    Ok((ret, disc))
}
