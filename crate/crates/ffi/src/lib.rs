//! C ABI over the hdice toolkit.
//!
//! Every function returns an [`HdiceStatus`]; on failure the message is
//! available from [`hdice_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hdice::env::{make_env, Action, ActionSpace, Environment};
use hdice::harness::{run_experiment, RunConfig, RunOutput};
use hdice::hindsight::{direct_ratio, DEFAULT_RATIO_CAP};
use hdice::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HdiceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Contract = 4,
    Dimension = 5,
    Numeric = 6,
    Parse = 7,
    Size = 8,
    Io = 9,
    Format = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HdiceStatus {
    match e {
        Error::Dimension { .. } => HdiceStatus::Dimension,
        Error::Numeric(_) => HdiceStatus::Numeric,
        Error::Contract(_) => HdiceStatus::Contract,
        Error::Parse { .. } => HdiceStatus::Parse,
        Error::Size(_) => HdiceStatus::Size,
        Error::Config(_) => HdiceStatus::Config,
        Error::Format(_) | Error::Json(_) => HdiceStatus::Format,
        Error::Io(_) => HdiceStatus::Io,
    }
}

struct Fail(HdiceStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HdiceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HdiceStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside hdice".into());
            HdiceStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(HdiceStatus::NullPointer, "null pointer argument".into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(HdiceStatus::InvalidUtf8, "argument is not valid UTF-8".into()))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hdice_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Opaque run configuration.
pub struct HdiceConfig(RunConfig);

/// Opaque finished run.
pub struct HdiceRun(RunOutput);

/// Opaque environment instance.
pub struct HdiceEnv(Box<dyn Environment>);

/// Parses a `key = value` config body.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdice_config_parse(text: *const c_char, out: *mut *mut HdiceConfig) -> HdiceStatus {
    guard(|| {
        let out = out_arg(out)?;
        let cfg = RunConfig::parse(str_arg(text)?)?;
        *out = Box::into_raw(Box::new(HdiceConfig(cfg)));
        Ok(())
    })
}

/// Overrides one key, with the same validation as the config file.
///
/// # Safety
/// `cfg` must come from [`hdice_config_parse`]; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hdice_config_set(cfg: *mut HdiceConfig, key: *const c_char, value: *const c_char) -> HdiceStatus {
    guard(|| {
        let cfg = out_arg(cfg)?;
        let ov = format!("--{}={}", str_arg(key)?, str_arg(value)?);
        cfg.0 = RunConfig::parse_with_overrides(&cfg.0.to_text(), &[ov])?;
        Ok(())
    })
}

/// Writes the canonical echo into `buf` (NUL-terminated). `needed` receives
/// the required size including the terminator.
///
/// # Safety
/// `buf` must hold `cap` bytes (it may be null when `cap` is 0).
#[no_mangle]
pub unsafe extern "C" fn hdice_config_echo(cfg: *const HdiceConfig, buf: *mut c_char, cap: usize, needed: *mut usize) -> HdiceStatus {
    guard(|| {
        let text = handle(cfg)?.0.to_text();
        let bytes = text.as_bytes();
        *out_arg(needed)? = bytes.len() + 1;
        if cap < bytes.len() + 1 {
            return Err(Fail(HdiceStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1)));
        }
        if buf.is_null() {
            return Err(null());
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
        *buf.add(bytes.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`hdice_config_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn hdice_config_free(cfg: *mut HdiceConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a full experiment. A run that aborts midway still yields a handle;
/// check [`hdice_run_aborted`].
///
/// # Safety
/// `cfg` must be a live config handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdice_run(cfg: *const HdiceConfig, out: *mut *mut HdiceRun) -> HdiceStatus {
    guard(|| {
        let out = out_arg(out)?;
        let run = run_experiment(&handle(cfg)?.0)?;
        *out = Box::into_raw(Box::new(HdiceRun(run)));
        Ok(())
    })
}

/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn hdice_run_rows(run: *const HdiceRun, rows: *mut usize) -> HdiceStatus {
    guard(|| {
        *out_arg(rows)? = handle(run)?.0.rows.len();
        Ok(())
    })
}

/// Episodes elapsed and eval return mean/std at metrics row `index`.
///
/// # Safety
/// `run` must be a live run handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdice_run_row(
    run: *const HdiceRun,
    index: usize,
    episodes: *mut usize,
    mean: *mut f64,
    std: *mut f64,
) -> HdiceStatus {
    guard(|| {
        let rows = &handle(run)?.0.rows;
        let row = rows
            .get(index)
            .ok_or_else(|| Fail(HdiceStatus::Contract, format!("row {index} of {}", rows.len())))?;
        *out_arg(episodes)? = row.episodes_elapsed;
        *out_arg(mean)? = row.eval_return_mean;
        *out_arg(std)? = row.eval_return_std;
        Ok(())
    })
}

/// `aborted` receives the abort iteration, or 0 when the run completed.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn hdice_run_aborted(run: *const HdiceRun, aborted: *mut usize) -> HdiceStatus {
    guard(|| {
        *out_arg(aborted)? = handle(run)?.0.aborted.as_ref().map_or(0, |(it, _)| *it);
        Ok(())
    })
}

/// Writes `config.txt`, `metrics.csv` and `snapshot.json` into `dir`.
///
/// # Safety
/// `run` must be a live run handle; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hdice_run_write(run: *const HdiceRun, dir: *const c_char) -> HdiceStatus {
    guard(|| {
        handle(run)?.0.write(Path::new(str_arg(dir)?))?;
        Ok(())
    })
}

/// # Safety
/// `run` must come from [`hdice_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn hdice_run_free(run: *mut HdiceRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Creates an environment from an id such as `gridworld-v1+delayed`.
///
/// # Safety
/// `id` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdice_env_new(id: *const c_char, out: *mut *mut HdiceEnv) -> HdiceStatus {
    guard(|| {
        let out = out_arg(out)?;
        let env = make_env(str_arg(id)?)?;
        *out = Box::into_raw(Box::new(HdiceEnv(env)));
        Ok(())
    })
}

/// Observation length and number of discrete actions (0 if continuous).
///
/// # Safety
/// `env` must be a live environment handle.
#[no_mangle]
pub unsafe extern "C" fn hdice_env_dims(env: *const HdiceEnv, obs_dim: *mut usize, n_actions: *mut usize) -> HdiceStatus {
    guard(|| {
        let c = handle(env)?.0.contract();
        *out_arg(obs_dim)? = c.observation_dim;
        *out_arg(n_actions)? = match c.action_space {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous { .. } => 0,
        };
        Ok(())
    })
}

unsafe fn write_obs(values: &[f64], obs: *mut f64, cap: usize) -> Result<(), Fail> {
    if cap < values.len() {
        return Err(Fail(HdiceStatus::BufferTooSmall, format!("need {} observation slots", values.len())));
    }
    if obs.is_null() {
        return Err(null());
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), obs, values.len());
    Ok(())
}

/// Resets and writes the first observation into `obs` (`cap` slots).
///
/// # Safety
/// `env` must be a live environment handle; `obs` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn hdice_env_reset(env: *mut HdiceEnv, seed: u64, obs: *mut f64, cap: usize) -> HdiceStatus {
    guard(|| {
        let env = out_arg(env)?;
        let o = env.0.reset(seed);
        write_obs(o.data(), obs, cap)
    })
}

/// Takes discrete action `action`.
///
/// # Safety
/// `env` must be a live environment handle; `obs` must hold `cap` doubles;
/// `reward` and `done` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdice_env_step(
    env: *mut HdiceEnv,
    action: usize,
    obs: *mut f64,
    cap: usize,
    reward: *mut f64,
    done: *mut bool,
) -> HdiceStatus {
    guard(|| {
        let env = out_arg(env)?;
        let (reward, done) = (out_arg(reward)?, out_arg(done)?);
        let step = env.0.step(&Action::Discrete(action))?;
        write_obs(step.observation.data(), obs, cap)?;
        *reward = step.reward;
        *done = step.done();
        Ok(())
    })
}

/// # Safety
/// `env` must come from [`hdice_env_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn hdice_env_free(env: *mut HdiceEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// `π/h` from log-probabilities, optionally clipped to `[0, 1]`.
///
/// # Safety
/// `ratio` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hdice_direct_ratio(log_pi: f64, log_h: f64, clip: bool, ratio: *mut f64) -> HdiceStatus {
    guard(|| {
        *out_arg(ratio)? = direct_ratio(log_pi, log_h, clip, DEFAULT_RATIO_CAP).0;
        Ok(())
    })
}
