//! C ABI over the `acrl` toolkit.
//!
//! Every entry point returns an [`AcrlStatus`]. On failure a message is kept
//! per thread and can be copied out with [`acrl_last_error`]. Handles are
//! opaque and must be released with their `_free` function; passing a null
//! handle yields `ACRL_STATUS_NULL_POINTER`, never a crash. Panics are caught
//! at the boundary and reported as `ACRL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use acrl::approx::ProposalNoise;
use acrl::arm::{arm_sample, ArmConfig};
use acrl::envs::{make, EnvId};
use acrl::mosac::{train, Agent, Algo, TrainerConfig};
use acrl::tabular::{interior_lambda_grid, random_instance, verify_equivalence};
use acrl::{AcrlError, ActionVec, EnvState, Environment, Preference, QpCounter};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InfeasibleAction = 4,
    NotProjectable = 5,
    NoConvergence = 6,
    SamplingExhausted = 7,
    Io = 8,
    Panic = 9,
    Internal = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &AcrlError) -> AcrlStatus {
    match e {
        AcrlError::DimensionMismatch { .. } => AcrlStatus::DimensionMismatch,
        AcrlError::InfeasibleAction { .. } => AcrlStatus::InfeasibleAction,
        AcrlError::NotProjectable(_) => AcrlStatus::NotProjectable,
        AcrlError::NoConvergence { .. } => AcrlStatus::NoConvergence,
        AcrlError::SamplingExhausted { .. } => AcrlStatus::SamplingExhausted,
        AcrlError::UnknownEnv(_) | AcrlError::Config(_) => AcrlStatus::InvalidArgument,
        AcrlError::Io(_) | AcrlError::Csv(_) | AcrlError::Checkpoint(_) => AcrlStatus::Io,
        _ => AcrlStatus::Internal,
    }
}

struct Fail(AcrlStatus, String);

impl From<AcrlError> for Fail {
    fn from(e: AcrlError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AcrlStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AcrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AcrlStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            AcrlStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Fail> {
    if dst.len() != src.len() {
        return Err(Fail(
            AcrlStatus::DimensionMismatch,
            format!("buffer holds {} values, need {}", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn preference(lambda_r: f64) -> Result<Preference, Fail> {
    Preference::try_from_pair(lambda_r, 1.0 - lambda_r).map_err(Fail::from)
}

/// Copies the calling thread's last error message (NUL terminated, truncated
/// to fit) into `buf` and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn acrl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn acrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// An environment together with its current state and projection counter.
pub struct AcrlEnv {
    env: Box<dyn Environment>,
    state: EnvState,
    qp: QpCounter,
}

/// Builds an environment by id ("BallReach", "BSS3z", "BSS5z",
/// "NSFnetLite", "GridTab") and resets it.
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_new(name: *const c_char, seed: u64, out: *mut *mut AcrlEnv) -> AcrlStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Fail(AcrlStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let id: EnvId = name.parse()?;
        let mut env = make(id, seed);
        let state = env.reset();
        *out = Box::into_raw(Box::new(AcrlEnv { env, state, qp: QpCounter::new() }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`acrl_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_free(env: *mut AcrlEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

unsafe fn env_ref<'a>(env: *mut AcrlEnv) -> Result<&'a mut AcrlEnv, Fail> {
    env.as_mut().ok_or_else(|| null("env"))
}

/// # Safety
/// `env` must be a live handle; `state_dim` and `action_dim` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_dims(env: *mut AcrlEnv, state_dim: *mut usize, action_dim: *mut usize) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        if state_dim.is_null() || action_dim.is_null() {
            return Err(null("output"));
        }
        *state_dim = e.env.state_dim();
        *action_dim = e.env.action_dim();
        Ok(())
    })
}

/// Starts a new episode and writes the initial state.
///
/// # Safety
/// `state_out` must be valid for `state_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_reset(env: *mut AcrlEnv, state_out: *mut f64, state_len: usize) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        let dst = slice_mut(state_out, state_len, "state_out")?;
        if dst.len() != e.env.state_dim() {
            return Err(Fail(AcrlStatus::DimensionMismatch, "state buffer size".into()));
        }
        e.state = e.env.reset();
        copy_out(&e.state.vector, dst)
    })
}

/// Writes the current state.
///
/// # Safety
/// `state_out` must be valid for `state_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_state(env: *mut AcrlEnv, state_out: *mut f64, state_len: usize) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        copy_out(&e.state.vector, slice_mut(state_out, state_len, "state_out")?)
    })
}

/// Membership test of `action` in the feasible set at the current state.
///
/// # Safety
/// `action` must be valid for `action_len` doubles, `feasible` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_is_feasible(
    env: *mut AcrlEnv,
    action: *const f64,
    action_len: usize,
    feasible: *mut bool,
) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        if feasible.is_null() {
            return Err(null("feasible"));
        }
        let a = ActionVec::new(slice(action, action_len, "action")?.to_vec());
        *feasible = e.env.action_box().contains(&a) && e.env.constraint().is_feasible(&e.state, &a)?;
        Ok(())
    })
}

/// Steps the base dynamics. Infeasible actions fail with
/// `ACRL_STATUS_INFEASIBLE_ACTION` and leave the environment unchanged.
///
/// # Safety
/// Pointers must be valid for their stated lengths; `reward` and `done`
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_step(
    env: *mut AcrlEnv,
    action: *const f64,
    action_len: usize,
    state_out: *mut f64,
    state_len: usize,
    reward: *mut f64,
    done: *mut bool,
) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        if reward.is_null() || done.is_null() {
            return Err(null("output"));
        }
        let a = ActionVec::new(slice(action, action_len, "action")?.to_vec());
        let dst = slice_mut(state_out, state_len, "state_out")?;
        if dst.len() != e.env.state_dim() {
            return Err(Fail(AcrlStatus::DimensionMismatch, "state buffer size".into()));
        }
        let out = e.env.step(&a)?;
        e.state = out.state;
        copy_out(&e.state.vector, dst)?;
        *reward = out.reward;
        *done = e.state.done;
        Ok(())
    })
}

/// Euclidean projection of `action` onto the feasible set at the current
/// state (intersected with the action box).
///
/// # Safety
/// `action` and `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_project(env: *mut AcrlEnv, action: *const f64, out: *mut f64, len: usize) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        let a = ActionVec::new(slice(action, len, "action")?.to_vec());
        let rep = acrl::project_onto_feasible(e.env.constraint(), &e.state, &a, e.env.action_box(), &e.qp)?;
        copy_out(&rep.projected, slice_mut(out, len, "out")?)
    })
}

/// Projections performed through this handle.
///
/// # Safety
/// `env` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acrl_env_qp_count(env: *mut AcrlEnv, count: *mut u64) -> AcrlStatus {
    guard(|| {
        let e = env_ref(env)?;
        if count.is_null() {
            return Err(null("count"));
        }
        *count = e.qp.get();
        Ok(())
    })
}

/// A trained agent plus the random stream used for acting.
pub struct AcrlAgent {
    agent: Agent,
    env: EnvId,
    rng: ChaCha8Rng,
    qp: QpCounter,
}

/// Trains an agent on environment `name` with the desk configuration.
/// `algo` is 0 for acceptance-rejection, 1 for the projection baseline.
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acrl_agent_train(
    name: *const c_char,
    algo: u32,
    seed: u64,
    steps: u64,
    out: *mut *mut AcrlAgent,
) -> AcrlStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| Fail(AcrlStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let id: EnvId = name.parse()?;
        let algo = match algo {
            0 => Algo::Aram,
            1 => Algo::ProjectionBaseline,
            _ => return Err(Fail(AcrlStatus::InvalidArgument, format!("unknown algorithm {algo}"))),
        };
        let cfg = TrainerConfig { eval_interval: 0, ..TrainerConfig::desk() };
        let trained = train(id, &cfg, algo, seed, steps)?;
        *out = Box::into_raw(Box::new(AcrlAgent {
            agent: trained.agent,
            env: id,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5),
            qp: QpCounter::new(),
        }));
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or a handle from [`acrl_agent_train`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn acrl_agent_free(agent: *mut AcrlAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// Emits a feasible action for the environment's current state by
/// acceptance-rejection (10 attempts, then projection).
///
/// # Safety
/// Handles must be live; `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn acrl_agent_act(
    agent: *mut AcrlAgent,
    env: *mut AcrlEnv,
    lambda_r: f64,
    out: *mut f64,
    len: usize,
) -> AcrlStatus {
    guard(|| {
        let ag = agent.as_mut().ok_or_else(|| null("agent"))?;
        let e = env_ref(env)?;
        if e.env.id() != ag.env.as_str() {
            return Err(Fail(AcrlStatus::InvalidArgument, "agent was trained on another environment".into()));
        }
        let lam = preference(lambda_r)?;
        let prop = ag.agent.policy.proposal(&e.state, lam, ProposalNoise::Gaussian);
        let r = arm_sample(
            &prop,
            &e.state,
            e.env.constraint(),
            e.env.action_box(),
            &ArmConfig::evaluation(),
            &mut ag.rng,
            &ag.qp,
        )?;
        copy_out(&r.action, slice_mut(out, len, "out")?)
    })
}

/// Checks the augmented/constrained equivalence on `instances` random
/// tabular MDPs; `passed` receives how many had no counterexample.
///
/// # Safety
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn acrl_verify_tabular(seed: u64, instances: usize, passed: *mut usize) -> AcrlStatus {
    guard(|| {
        if passed.is_null() {
            return Err(null("passed"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = interior_lambda_grid();
        let mut ok = 0;
        for _ in 0..instances {
            let (m, k) = random_instance(&mut rng);
            ok += verify_equivalence(&m, k, &grid, 1e-9)?.passed() as usize;
        }
        *passed = ok;
        Ok(())
    })
}
