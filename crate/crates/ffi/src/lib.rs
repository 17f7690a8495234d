//! C ABI over the explore-go environments, ground-truth oracle, novelty
//! counts and run driver.
//!
//! Every handle is opaque and owned by the caller, who releases it with the
//! matching `*_free`. Every fallible call returns an [`EgStatus`]; on failure
//! the message is kept per thread and read with [`eg_last_error_message`].
//! Panics never cross the boundary; they surface as [`EgStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use explore_go::config::RunConfig;
use explore_go::envs::{
    gen_cross_context_sets, gen_fourrooms_context_sets, ActionId, ContextSets, CrossEnv, Env, FourRoomsEnv,
    UnderlyingState,
};
use explore_go::explore::{tee_betas, CountTables};
use explore_go::oracle::{bellman_residual, enumerate_reachable_env, value_iteration, OracleTables, ReachableSet, DEFAULT_TOL};
use explore_go::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A precondition was broken: bad index, action or state.
    Contract = 2,
    Config = 3,
    Io = 4,
    /// The output buffer is too small; nothing was written.
    BufferTooSmall = 5,
    Panic = 6,
}

/// Context split selectors for [`eg_env_reset`] and [`eg_env_context_count`].
pub const EG_SPLIT_TRAIN: u32 = 0;
pub const EG_SPLIT_REACHABLE_TEST: u32 = 1;
pub const EG_SPLIT_UNREACHABLE_TEST: u32 = 2;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: EgStatus, msg: impl Into<String>) -> EgStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> EgStatus {
    let status = match &e {
        Error::Contract(_) => EgStatus::Contract,
        Error::Config(_) | Error::Json(_) => EgStatus::Config,
        Error::Io(_) | Error::Csv(_) => EgStatus::Io,
    };
    fail(status, e.to_string())
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), EgStatus>) -> EgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EgStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(EgStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lift<T>(r: explore_go::Result<T>) -> Result<T, EgStatus> {
    r.map_err(from_error)
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, EgStatus> {
    p.as_ref().ok_or_else(|| fail(EgStatus::NullArgument, format!("{name} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, EgStatus> {
    p.as_mut().ok_or_else(|| fail(EgStatus::NullArgument, format!("{name} is null")))
}

unsafe fn write_out<T>(p: *mut T, v: T, name: &str) -> Result<(), EgStatus> {
    if p.is_null() {
        return Err(fail(EgStatus::NullArgument, format!("{name} is null")));
    }
    p.write(v);
    Ok(())
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, EgStatus> {
    if p.is_null() {
        return Err(fail(EgStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(EgStatus::Contract, format!("{name} is not valid UTF-8")))
}

/// Copies the calling thread's last error message into `buf` with a NUL
/// terminator. `*required` receives the needed size including the NUL; pass
/// a null `buf` to query it.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `required` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn eg_last_error_message(buf: *mut c_char, len: usize, required: *mut usize) -> EgStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let need = msg.len() + 1;
    if !required.is_null() {
        required.write(need);
    }
    if buf.is_null() {
        return EgStatus::Ok;
    }
    if len < need {
        return EgStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
    buf.add(msg.len()).write(0);
    EgStatus::Ok
}

/// NUL-terminated crate version; static storage.
#[no_mangle]
pub extern "C" fn eg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// An environment together with its context sets and one running episode.
pub struct EgEnv {
    env: Env,
    sets: ContextSets,
    state: Option<UnderlyingState>,
    steps: usize,
}

impl EgEnv {
    fn boxed(env: Env, sets: ContextSets, out: *mut *mut EgEnv) -> Result<(), EgStatus> {
        let h = Box::into_raw(Box::new(EgEnv { env, sets, state: None, steps: 0 }));
        unsafe { write_out(out, h, "out") }.inspect_err(|_| drop(unsafe { Box::from_raw(h) }))
    }

    fn state(&self) -> Result<&UnderlyingState, EgStatus> {
        self.state.as_ref().ok_or_else(|| fail(EgStatus::Contract, "no episode in progress; call eg_env_reset"))
    }
}

/// Creates the Illustrative Cross with its four train and four test contexts.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_env_new_cross(out: *mut *mut EgEnv) -> EgStatus {
    guard(|| EgEnv::boxed(Env::Cross(CrossEnv), gen_cross_context_sets(), out))
}

/// Creates a Four Rooms grid of side `grid` with generated context sets.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_env_new_fourrooms(
    grid: usize,
    master_seed: u64,
    n_train: usize,
    n_test: usize,
    out: *mut *mut EgEnv,
) -> EgStatus {
    guard(|| {
        let env = lift(FourRoomsEnv::new(grid))?;
        let sets = lift(gen_fourrooms_context_sets(master_seed, n_train, n_test, grid))?;
        EgEnv::boxed(Env::FourRooms(env), sets, out)
    })
}

/// # Safety
/// `env` must be null or a handle from an `eg_env_new_*` call, freed once.
#[no_mangle]
pub unsafe extern "C" fn eg_env_free(env: *mut EgEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_env_dims(
    env: *const EgEnv,
    action_count: *mut usize,
    obs_len: *mut usize,
    timeout: *mut usize,
) -> EgStatus {
    guard(|| {
        let e = deref(env, "env")?;
        write_out(action_count, e.env.action_count(), "action_count")?;
        write_out(obs_len, e.env.obs_len(), "obs_len")?;
        write_out(timeout, e.env.timeout(), "timeout")
    })
}

/// Observation shape as `[channels, height, width]`.
///
/// # Safety
/// `env` must be a live handle; `shape` must be valid for three writes.
#[no_mangle]
pub unsafe extern "C" fn eg_env_obs_shape(env: *const EgEnv, shape: *mut usize) -> EgStatus {
    guard(|| {
        let e = deref(env, "env")?;
        if shape.is_null() {
            return Err(fail(EgStatus::NullArgument, "shape is null"));
        }
        for (i, d) in e.env.obs_shape().into_iter().enumerate() {
            shape.add(i).write(d);
        }
        Ok(())
    })
}

impl EgEnv {
    fn split(&self, split: u32) -> Result<Option<&explore_go::envs::ContextSet>, EgStatus> {
        match split {
            EG_SPLIT_TRAIN => Ok(Some(&self.sets.train)),
            EG_SPLIT_REACHABLE_TEST => Ok(self.sets.reachable_test.as_ref()),
            EG_SPLIT_UNREACHABLE_TEST => Ok(Some(&self.sets.unreachable_test)),
            other => Err(fail(EgStatus::Contract, format!("unknown split {other}"))),
        }
    }
}

/// Number of contexts in `split` (0 when the environment has no such split).
///
/// # Safety
/// `env` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_env_context_count(env: *const EgEnv, split: u32, count: *mut usize) -> EgStatus {
    guard(|| {
        let e = deref(env, "env")?;
        write_out(count, e.split(split)?.map_or(0, |s| s.len()), "count")
    })
}

/// Starts an episode from context `index` of `split`.
///
/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_env_reset(env: *mut EgEnv, split: u32, index: usize) -> EgStatus {
    guard(|| {
        let e = deref_mut(env, "env")?;
        let ctx = e
            .split(split)?
            .and_then(|s| s.contexts.get(index))
            .ok_or_else(|| fail(EgStatus::Contract, format!("no context {index} in split {split}")))?;
        e.state = Some(lift(e.env.start_state(ctx))?);
        e.steps = 0;
        Ok(())
    })
}

/// Applies `action`. `done` is set on reaching the goal, `truncated` when the
/// step limit is hit first. Either ends the episode; reset before stepping on.
///
/// # Safety
/// `env` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_env_step(
    env: *mut EgEnv,
    action: usize,
    reward: *mut f64,
    done: *mut bool,
    truncated: *mut bool,
) -> EgStatus {
    guard(|| {
        let e = deref_mut(env, "env")?;
        if reward.is_null() || done.is_null() || truncated.is_null() {
            return Err(fail(EgStatus::NullArgument, "reward, done and truncated must be non-null"));
        }
        let s = *e.state()?;
        let out = lift(e.env.step(&s, ActionId(action)))?;
        e.steps += 1;
        let trunc = !out.done && e.steps >= e.env.timeout();
        reward.write(out.reward);
        done.write(out.done);
        truncated.write(trunc);
        e.state = if out.done || trunc { None } else { Some(out.state) };
        Ok(())
    })
}

/// Writes the current observation (`obs_len` floats, channel-major).
///
/// # Safety
/// `env` must be a live handle; `buf` must be valid for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn eg_env_observe(env: *const EgEnv, buf: *mut f32, len: usize) -> EgStatus {
    guard(|| {
        let e = deref(env, "env")?;
        if buf.is_null() {
            return Err(fail(EgStatus::NullArgument, "buf is null"));
        }
        let need = e.env.obs_len();
        if len < need {
            return Err(fail(EgStatus::BufferTooSmall, format!("observation needs {need} floats, got {len}")));
        }
        let s = *e.state()?;
        e.env.encode_into(&s, std::slice::from_raw_parts_mut(buf, need));
        Ok(())
    })
}

/// Optimal values over the states reachable from an environment's train
/// contexts.
pub struct EgOracle {
    env: Env,
    set: ReachableSet<UnderlyingState>,
    tables: OracleTables,
}

/// Enumerates the reachable set of `env` and solves it by value iteration.
///
/// # Safety
/// `env` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_oracle_new(env: *const EgEnv, gamma: f64, out: *mut *mut EgOracle) -> EgStatus {
    guard(|| {
        let e = deref(env, "env")?;
        if out.is_null() {
            return Err(fail(EgStatus::NullArgument, "out is null"));
        }
        let set = lift(enumerate_reachable_env(&e.env, &e.sets.train))?;
        let tables = lift(value_iteration(&set, gamma, DEFAULT_TOL))?;
        out.write(Box::into_raw(Box::new(EgOracle { env: e.env, set, tables })));
        Ok(())
    })
}

/// # Safety
/// `oracle` must be null or a handle from [`eg_oracle_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn eg_oracle_free(oracle: *mut EgOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

/// Reachable states, of which non-terminal, and the sweep count.
///
/// # Safety
/// `oracle` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_oracle_counts(
    oracle: *const EgOracle,
    states: *mut usize,
    non_terminal: *mut usize,
    sweeps: *mut usize,
) -> EgStatus {
    guard(|| {
        let o = deref(oracle, "oracle")?;
        write_out(states, o.set.len(), "states")?;
        write_out(non_terminal, o.set.non_terminal().len(), "non_terminal")?;
        write_out(sweeps, o.tables.sweeps, "sweeps")
    })
}

/// # Safety
/// `oracle` must be a live handle; `residual` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_oracle_bellman_residual(oracle: *const EgOracle, residual: *mut f64) -> EgStatus {
    guard(|| {
        let o = deref(oracle, "oracle")?;
        write_out(residual, bellman_residual(&o.set, &o.tables), "residual")
    })
}

/// V* of the running episode's current state. Fails with `Contract` when
/// that state lies outside the reachable set (an unreachable test context).
///
/// # Safety
/// Both handles must be live; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_oracle_value(oracle: *const EgOracle, env: *const EgEnv, value: *mut f64) -> EgStatus {
    guard(|| {
        let o = deref(oracle, "oracle")?;
        let e = deref(env, "env")?;
        if o.env != e.env {
            return Err(fail(EgStatus::Contract, "oracle was built for a different environment"));
        }
        let i = o
            .set
            .index_of(e.state()?)
            .ok_or_else(|| fail(EgStatus::Contract, "current state is not reachable from the train contexts"))?;
        write_out(value, o.tables.v(i), "value")
    })
}

/// Global and per-worker episodic visit counts.
pub struct EgCounts {
    inner: CountTables<UnderlyingState>,
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_counts_new(workers: usize, out: *mut *mut EgCounts) -> EgStatus {
    guard(|| {
        if workers == 0 {
            return Err(fail(EgStatus::Contract, "workers must be positive"));
        }
        let h = Box::into_raw(Box::new(EgCounts { inner: CountTables::new(workers) }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// # Safety
/// `counts` must be null or a handle from [`eg_counts_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn eg_counts_free(counts: *mut EgCounts) {
    if !counts.is_null() {
        drop(Box::from_raw(counts));
    }
}

/// Records `action` taken by `worker` in the env's current state and writes
/// the intrinsic reward `N_global^{-1/2}` when the pair is new this episode,
/// else 0. Call before [`eg_env_step`].
///
/// # Safety
/// Both handles must be live; `eta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eg_counts_observe(
    counts: *mut EgCounts,
    env: *const EgEnv,
    worker: usize,
    action: usize,
    eta: *mut f64,
) -> EgStatus {
    guard(|| {
        let c = deref_mut(counts, "counts")?;
        let e = deref(env, "env")?;
        if worker >= c.inner.workers() {
            return Err(fail(EgStatus::Contract, format!("worker {worker} out of range")));
        }
        if action >= e.env.action_count() {
            return Err(fail(EgStatus::Contract, format!("action {action} out of range")));
        }
        if eta.is_null() {
            return Err(fail(EgStatus::NullArgument, "eta is null"));
        }
        let s = *e.state()?;
        eta.write(c.inner.observe_and_reward(worker, &s, ActionId(action)));
        Ok(())
    })
}

/// Clears `worker`'s episodic counts; global counts persist.
///
/// # Safety
/// `counts` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eg_counts_reset_episode(counts: *mut EgCounts, worker: usize) -> EgStatus {
    guard(|| {
        let c = deref_mut(counts, "counts")?;
        if worker >= c.inner.workers() {
            return Err(fail(EgStatus::Contract, format!("worker {worker} out of range")));
        }
        c.inner.reset_episode(worker);
        Ok(())
    })
}

/// Per-worker exploration coefficients `phi * lambda^(1 + alpha*i/(N-1))`.
///
/// # Safety
/// `out` must be valid for `workers` doubles.
#[no_mangle]
pub unsafe extern "C" fn eg_tee_betas(phi: f64, lambda: f64, alpha: f64, workers: usize, out: *mut f64) -> EgStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(EgStatus::NullArgument, "out is null"));
        }
        let betas = lift(tee_betas(phi, lambda, alpha, workers))?;
        std::ptr::copy_nonoverlapping(betas.as_ptr(), out, betas.len());
        Ok(())
    })
}

/// Trains one seed from a JSON config (nested or dotted keys) and writes the
/// config echo, metrics CSV and checkpoint into `out_dir`.
///
/// # Safety
/// `config_json` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn eg_run(config_json: *const c_char, seed: u64, out_dir: *const c_char) -> EgStatus {
    guard(|| {
        let text = c_str(config_json, "config_json")?;
        let dir = c_str(out_dir, "out_dir")?;
        let cfg = lift(RunConfig::from_json_str(text))?;
        lift(explore_go::experiment::run(&cfg, seed, Path::new(dir)))?;
        Ok(())
    })
}
