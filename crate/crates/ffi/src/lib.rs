//! C ABI over `bsdp-core`.
//!
//! Every fallible function returns a [`BsdpStatus`]; on failure the message
//! is kept per thread and can be read with [`bsdp_last_error`]. Objects are
//! opaque handles created by `*_create` functions and released with the
//! matching `*_free`. Output arrays are caller-allocated: each takes a
//! pointer and a capacity, and fails with `BSDP_STATUS_SHAPE` when the
//! capacity does not match.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bsdp_core::agents::{Agent, AgentKind};
use bsdp_core::envs::{make_env, EnvKind, Environment};
use bsdp_core::harness::{self, ExperimentConfig, RunResult};
use bsdp_core::replay::ReplayBuffer;
use bsdp_core::{stream_rng, Error, SeededRng};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Protocol = 5,
    Config = 6,
    Io = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> BsdpStatus {
    match err {
        Error::Shape { .. } => BsdpStatus::Shape,
        Error::Numeric(_) | Error::DivergenceUndefined { .. } | Error::UndefinedMetric(_) => {
            BsdpStatus::Numeric
        }
        Error::Protocol(_) => BsdpStatus::Protocol,
        Error::Config(_) => BsdpStatus::Config,
        Error::Io(_) | Error::Csv(_) => BsdpStatus::Io,
        _ => BsdpStatus::InvalidArgument,
    }
}

struct Failure(BsdpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BsdpStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> BsdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BsdpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside bsdp".into());
            BsdpStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BsdpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_slice<'a>(
    p: *mut f64,
    len: usize,
    want: usize,
    what: &str,
) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != want {
        return Err(Failure(
            BsdpStatus::Shape,
            format!("{what} holds {len} values, expected {want}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bsdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn bsdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque environment handle.
pub struct BsdpEnv {
    kind: EnvKind,
    chain_size: usize,
    env: Box<dyn Environment>,
    rng: SeededRng,
}

/// Creates an environment by name (`binary_chain`, `cartpole`,
/// `mountain_car`, `acrobot`). `chain_size` is only read for BinaryChain.
///
/// # Safety
/// `name` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn bsdp_env_create(
    name: *const c_char,
    chain_size: usize,
    seed: u64,
    out: *mut *mut BsdpEnv,
) -> BsdpStatus {
    guard(|| {
        let kind: EnvKind = read_str(name, "name")?.parse()?;
        if kind == EnvKind::Line1d {
            return Err(Failure(
                BsdpStatus::InvalidArgument,
                "line1d has no dynamics".into(),
            ));
        }
        let mut rng = stream_rng(seed, harness::STREAM_ENV);
        let env = make_env(kind, chain_size, &mut rng)?;
        let boxed = Box::new(BsdpEnv {
            kind,
            chain_size,
            env,
            rng,
        });
        write_out(out, Box::into_raw(boxed), "out")
    })
}

/// # Safety
/// `env` must come from [`bsdp_env_create`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsdp_env_free(env: *mut BsdpEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_env_shape(
    env: *const BsdpEnv,
    state_dim: *mut usize,
    action_count: *mut usize,
) -> BsdpStatus {
    guard(|| {
        let e = handle(env, "env")?;
        write_out(state_dim, e.env.spec().state_dim, "state_dim")?;
        write_out(action_count, e.env.spec().action_count, "action_count")
    })
}

/// Starts an episode and writes the initial observation.
///
/// # Safety
/// `env` must be a live handle and `state` hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bsdp_env_reset(
    env: *mut BsdpEnv,
    state: *mut f64,
    len: usize,
) -> BsdpStatus {
    guard(|| {
        let e = handle_mut(env, "env")?;
        let out = out_slice(state, len, e.env.spec().state_dim, "state")?;
        let s = e.env.reset(&mut e.rng);
        out.copy_from_slice(&s);
        Ok(())
    })
}

/// Applies `action`, writing the next observation, reward and end flags.
///
/// # Safety
/// `env` must be a live handle; `next_state` must hold `len` writable
/// doubles and the remaining out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_env_step(
    env: *mut BsdpEnv,
    action: usize,
    next_state: *mut f64,
    len: usize,
    reward: *mut f64,
    terminal: *mut bool,
    truncated: *mut bool,
) -> BsdpStatus {
    guard(|| {
        let e = handle_mut(env, "env")?;
        let out = out_slice(next_state, len, e.env.spec().state_dim, "next_state")?;
        let r = e.env.step(action)?;
        out.copy_from_slice(&r.next_state);
        write_out(reward, r.reward, "reward")?;
        write_out(terminal, r.terminal, "terminal")?;
        write_out(truncated, r.truncated, "truncated")
    })
}

/// Opaque agent handle; owns its replay buffer and episode random stream.
pub struct BsdpAgent {
    agent: Agent,
    buffer: ReplayBuffer,
    rng: SeededRng,
    kind: EnvKind,
    chain_size: usize,
}

/// Builds an agent (`bsdp`, `bsp`, `bs`, `dqn`, `random`) for `env` with the
/// harness defaults for that environment. BSDP runs prior diversification
/// here, which can take seconds.
///
/// # Safety
/// `algorithm` must be a valid C string, `env` a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_agent_create(
    algorithm: *const c_char,
    env: *const BsdpEnv,
    seed: u64,
    out: *mut *mut BsdpAgent,
) -> BsdpStatus {
    guard(|| {
        let algo: AgentKind = read_str(algorithm, "algorithm")?.parse()?;
        let e = handle(env, "env")?;
        let cfg = ExperimentConfig::defaults(algo, e.kind, e.chain_size);
        let agent = Agent::new(algo, cfg.agent.clone(), e.env.spec(), seed)?;
        let buffer = agent.new_buffer(cfg.replay_capacity)?;
        let boxed = Box::new(BsdpAgent {
            agent,
            buffer,
            rng: stream_rng(seed, harness::STREAM_EPISODES),
            kind: e.kind,
            chain_size: e.chain_size,
        });
        write_out(out, Box::into_raw(boxed), "out")
    })
}

/// # Safety
/// `agent` must come from [`bsdp_agent_create`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsdp_agent_free(agent: *mut BsdpAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Number of Q networks (0 for `random`, 1 for `dqn`).
///
/// # Safety
/// `agent` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_agent_ensemble_size(
    agent: *const BsdpAgent,
    out: *mut usize,
) -> BsdpStatus {
    guard(|| write_out(out, handle(agent, "agent")?.agent.members().len(), "out"))
}

/// `Q_member(state, a)` for every action.
///
/// # Safety
/// `agent` must be a live handle, `state` must hold `state_len` doubles and
/// `q` `q_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bsdp_agent_q_values(
    agent: *const BsdpAgent,
    member: usize,
    state: *const f64,
    state_len: usize,
    q: *mut f64,
    q_len: usize,
) -> BsdpStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        let m =
            a.agent.members().get(member).ok_or_else(|| {
                Failure(BsdpStatus::InvalidArgument, format!("no member {member}"))
            })?;
        let s = in_slice(state, state_len, "state")?;
        let values = m.q_values(s)?;
        out_slice(q, q_len, values.len(), "q")?.copy_from_slice(&values);
        Ok(())
    })
}

/// Runs one training episode of `agent` on `env`.
///
/// # Safety
/// Both handles must be live and the out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_agent_train_episode(
    agent: *mut BsdpAgent,
    env: *mut BsdpEnv,
    reward: *mut f64,
    steps: *mut usize,
    exploration_rate: *mut f64,
) -> BsdpStatus {
    guard(|| {
        let a = handle_mut(agent, "agent")?;
        let e = handle_mut(env, "env")?;
        let same_chain = a.kind != EnvKind::BinaryChain || a.chain_size == e.chain_size;
        if a.kind != e.kind || !same_chain {
            return Err(Failure(
                BsdpStatus::InvalidArgument,
                "agent was built for another environment".into(),
            ));
        }
        let rec = a
            .agent
            .train_episode(e.env.as_mut(), &mut a.buffer, &mut a.rng)?;
        write_out(reward, rec.reward, "reward")?;
        write_out(steps, rec.steps, "steps")?;
        write_out(
            exploration_rate,
            harness::exploration_rate(&rec.exploration_flags)?,
            "exploration_rate",
        )
    })
}

/// Opaque set of finished runs.
pub struct BsdpRuns {
    runs: Vec<RunResult>,
}

/// Parses a `key = value` experiment config and runs every repeat.
///
/// # Safety
/// `config` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_experiment_run(
    config: *const c_char,
    out: *mut *mut BsdpRuns,
) -> BsdpStatus {
    guard(|| {
        let cfg = ExperimentConfig::parse(read_str(config, "config")?)?;
        let runs = harness::run_experiment(&cfg)?;
        write_out(out, Box::into_raw(Box::new(BsdpRuns { runs })), "out")
    })
}

/// # Safety
/// `runs` must come from [`bsdp_experiment_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bsdp_runs_free(runs: *mut BsdpRuns) {
    if !runs.is_null() {
        drop(Box::from_raw(runs));
    }
}

unsafe fn run_at<'a>(runs: *const BsdpRuns, index: usize) -> Result<&'a RunResult, Failure> {
    let r = handle(runs, "runs")?;
    r.runs
        .get(index)
        .ok_or_else(|| Failure(BsdpStatus::InvalidArgument, format!("no run {index}")))
}

/// # Safety
/// `runs` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_runs_count(runs: *const BsdpRuns, out: *mut usize) -> BsdpStatus {
    guard(|| write_out(out, handle(runs, "runs")?.runs.len(), "out"))
}

/// Seed and episode count of run `index`.
///
/// # Safety
/// `runs` must be a live handle and the out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_run_info(
    runs: *const BsdpRuns,
    index: usize,
    seed: *mut u64,
    episodes: *mut usize,
) -> BsdpStatus {
    guard(|| {
        let r = run_at(runs, index)?;
        write_out(seed, r.seed, "seed")?;
        write_out(episodes, r.episodes(), "episodes")
    })
}

/// Per-episode rewards of run `index`; `len` must equal its episode count.
///
/// # Safety
/// `runs` must be a live handle and `out` hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bsdp_run_rewards(
    runs: *const BsdpRuns,
    index: usize,
    out: *mut f64,
    len: usize,
) -> BsdpStatus {
    guard(|| {
        let r = run_at(runs, index)?;
        out_slice(out, len, r.rewards.len(), "out")?.copy_from_slice(&r.rewards);
        Ok(())
    })
}

/// Per-episode exploration rates of run `index`.
///
/// # Safety
/// `runs` must be a live handle and `out` hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bsdp_run_exploration_rates(
    runs: *const BsdpRuns,
    index: usize,
    out: *mut f64,
    len: usize,
) -> BsdpStatus {
    guard(|| {
        let r = run_at(runs, index)?;
        out_slice(out, len, r.exploration_rates.len(), "out")?
            .copy_from_slice(&r.exploration_rates);
        Ok(())
    })
}

/// Episodes-to-solve of a BinaryChain run; `-1` when unsolved or not a
/// chain run.
///
/// # Safety
/// `runs` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_run_episodes_to_solve(
    runs: *const BsdpRuns,
    index: usize,
    out: *mut i64,
) -> BsdpStatus {
    guard(|| {
        let r = run_at(runs, index)?;
        write_out(out, r.episodes_to_solve.map_or(-1, |e| e as i64), "out")
    })
}

/// 1-based first episode with positive reward within `cap`, or `-1`.
///
/// # Safety
/// `rewards` must hold `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_episodes_to_solve(
    rewards: *const f64,
    len: usize,
    cap: usize,
    out: *mut i64,
) -> BsdpStatus {
    guard(|| {
        let r = in_slice(rewards, len, "rewards")?;
        write_out(
            out,
            harness::episodes_to_solve(r, cap).map_or(-1, |e| e as i64),
            "out",
        )
    })
}

/// Fraction of true flags; fails with `BSDP_STATUS_NUMERIC` when `len` is 0.
///
/// # Safety
/// `flags` must hold `len` bools and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn bsdp_exploration_rate(
    flags: *const bool,
    len: usize,
    out: *mut f64,
) -> BsdpStatus {
    guard(|| {
        let f = in_slice(flags, len, "flags")?;
        write_out(out, harness::exploration_rate(f)?, "out")
    })
}

/// Trailing moving average of `x` into `out` (same length).
///
/// # Safety
/// `x` must hold `len` doubles and `out` `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bsdp_moving_average(
    x: *const f64,
    len: usize,
    window: usize,
    out: *mut f64,
) -> BsdpStatus {
    guard(|| {
        let xs = in_slice(x, len, "x")?;
        let ma = harness::moving_average(xs, window)?;
        if len > 0 {
            out_slice(out, len, len, "out")?.copy_from_slice(&ma);
        }
        Ok(())
    })
}

/// Mean and `mean ± 0.3 std` band over `runs` row-major curves of `len`
/// points each. Each output holds `len` doubles.
///
/// # Safety
/// `curves` must hold `runs * len` doubles; the outputs `len` writable
/// doubles each.
#[no_mangle]
pub unsafe extern "C" fn bsdp_aggregate_curves(
    curves: *const f64,
    runs: usize,
    len: usize,
    mean: *mut f64,
    lower: *mut f64,
    upper: *mut f64,
) -> BsdpStatus {
    guard(|| {
        let flat = in_slice(curves, runs * len, "curves")?;
        let rows: Vec<&[f64]> = if len == 0 {
            vec![&[][..]; runs]
        } else {
            flat.chunks_exact(len).collect()
        };
        let agg = harness::aggregate_curves(&rows)?;
        if len > 0 {
            out_slice(mean, len, len, "mean")?.copy_from_slice(&agg.mean);
            out_slice(lower, len, len, "lower")?.copy_from_slice(&agg.lower);
            out_slice(upper, len, len, "upper")?.copy_from_slice(&agg.upper);
        }
        Ok(())
    })
}
