//! C interface to the scenario runner.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`DistddpStatus`];
//! the message of the most recent failure on the calling thread is available
//! through [`distddp_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use distddp::parallel::Executor;
use distddp::scenario::builtin;
use distddp::scenario::config::ScenarioConfig;
use distddp::scenario::run::{run, Outcome};
use distddp::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistddpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or inconsistent scenario input.
    InvalidConfig = 3,
    UnknownScenario = 4,
    /// The solver itself failed.
    SolverFailed = 5,
    OutOfRange = 6,
    /// The caller's buffer is too small; the required length was written.
    BufferTooSmall = 7,
    Io = 8,
    Panic = 9,
}

/// Scenario description, built from TOML or a built-in name.
pub struct DistddpScenario {
    config: ScenarioConfig,
}

/// Result of a solve: trajectories, feedback gains and a summary.
pub struct DistddpOutcome {
    outcome: Outcome,
    summary_json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: DistddpStatus, msg: impl Into<String>) -> DistddpStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> DistddpStatus {
    let status = match &e {
        _ if e.is_validation() => DistddpStatus::InvalidConfig,
        Error::Io(_) => DistddpStatus::Io,
        _ => DistddpStatus::SolverFailed,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> DistddpStatus) -> DistddpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DistddpStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, DistddpStatus> {
    if s.is_null() {
        return Err(fail(DistddpStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(DistddpStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn boxed_scenario(config: ScenarioConfig, out: *mut *mut DistddpScenario) -> DistddpStatus {
    if let Err(e) = config.validate() {
        return from_error(e.into());
    }
    unsafe { *out = Box::into_raw(Box::new(DistddpScenario { config })) };
    DistddpStatus::Ok
}

/// Copies the last error message on this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL, or 0
/// when no error has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn distddp_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn distddp_scenario_from_toml(
    toml: *const c_char,
    out: *mut *mut DistddpScenario,
) -> DistddpStatus {
    guard(|| {
        if out.is_null() {
            return fail(DistddpStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml(text) {
            Ok(cfg) => boxed_scenario(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Loads a built-in scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn distddp_scenario_builtin(
    name: *const c_char,
    out: *mut *mut DistddpScenario,
) -> DistddpStatus {
    guard(|| {
        if out.is_null() {
            return fail(DistddpStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let name = match read_str(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match builtin::by_name(name) {
            Some(cfg) => boxed_scenario(cfg, out),
            None => fail(
                DistddpStatus::UnknownScenario,
                format!("unknown scenario `{name}`"),
            ),
        }
    })
}

/// Applies one `key=value` override, e.g. `md.iterations=50`. The scenario is
/// left unchanged on failure.
///
/// # Safety
/// `scenario` must come from this library and `assignment` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn distddp_scenario_set(
    scenario: *mut DistddpScenario,
    assignment: *const c_char,
) -> DistddpStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(DistddpStatus::NullPointer, "null scenario");
        };
        let kv = match read_str(assignment) {
            Ok(t) => t,
            Err(st) => return st,
        };
        match s.config.with_overrides(&[kv.to_string()]) {
            Ok(cfg) => {
                s.config = cfg;
                DistddpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of agents in the scenario.
///
/// # Safety
/// `scenario` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn distddp_scenario_agents(scenario: *const DistddpScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.config.agents.len())
}

/// # Safety
/// `scenario` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn distddp_scenario_free(scenario: *mut DistddpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Solves the scenario with `workers` threads (0 reads `DISTDDP_WORKERS`,
/// defaulting to one thread).
///
/// # Safety
/// `scenario` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn distddp_solve(
    scenario: *const DistddpScenario,
    workers: usize,
    out: *mut *mut DistddpOutcome,
) -> DistddpStatus {
    guard(|| {
        if out.is_null() {
            return fail(DistddpStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let Some(s) = scenario.as_ref() else {
            return fail(DistddpStatus::NullPointer, "null scenario");
        };
        let exec = match if workers == 0 {
            Executor::from_env()
        } else {
            Executor::with_workers(workers)
        } {
            Ok(e) => e,
            Err(msg) => return fail(DistddpStatus::InvalidConfig, msg),
        };
        let outcome = match run(&s.config, &exec) {
            Ok(o) => o,
            Err(e) => return from_error(e),
        };
        let json = match serde_json::to_string(&outcome.summary) {
            Ok(j) => j,
            Err(e) => return from_error(e.into()),
        };
        let summary_json = CString::new(json).expect("JSON has no interior NUL");
        *out = Box::into_raw(Box::new(DistddpOutcome {
            outcome,
            summary_json,
        }));
        DistddpStatus::Ok
    })
}

/// # Safety
/// `outcome` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_free(outcome: *mut DistddpOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

/// Summary as a JSON object. The pointer stays valid until the outcome is freed.
///
/// # Safety
/// `outcome` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_summary_json(
    outcome: *const DistddpOutcome,
) -> *const c_char {
    outcome
        .as_ref()
        .map_or(ptr::null(), |o| o.summary_json.as_ptr())
}

/// Writes agent count, horizon, and the state and control dimension of
/// `agent`. Any output pointer may be null.
///
/// # Safety
/// `outcome` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_dims(
    outcome: *const DistddpOutcome,
    agent: usize,
    agents: *mut usize,
    horizon: *mut usize,
    state_dim: *mut usize,
    control_dim: *mut usize,
) -> DistddpStatus {
    let Some(o) = outcome.as_ref() else {
        return fail(DistddpStatus::NullPointer, "null outcome");
    };
    let trajs = &o.outcome.trajectories;
    let Some(t) = trajs.get(agent) else {
        return fail(
            DistddpStatus::OutOfRange,
            format!("agent {agent} out of range (have {})", trajs.len()),
        );
    };
    for (p, v) in [
        (agents, trajs.len()),
        (horizon, t.controls.len()),
        (state_dim, t.states[0].len()),
        (control_dim, t.controls[0].len()),
    ] {
        if !p.is_null() {
            *p = v;
        }
    }
    DistddpStatus::Ok
}

unsafe fn copy_out(
    values: impl ExactSizeIterator<Item = f64>,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DistddpStatus {
    let n = values.len();
    if !written.is_null() {
        *written = n;
    }
    if len < n {
        return fail(
            DistddpStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {n}"),
        );
    }
    if buf.is_null() {
        return fail(DistddpStatus::NullPointer, "null buffer");
    }
    for (i, v) in values.enumerate() {
        *buf.add(i) = v;
    }
    DistddpStatus::Ok
}

enum Field {
    States,
    Controls,
    Feedforward,
    Feedback,
}

unsafe fn agent_field(
    outcome: *const DistddpOutcome,
    agent: usize,
    field: Field,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DistddpStatus {
    let Some(o) = outcome.as_ref() else {
        return fail(DistddpStatus::NullPointer, "null outcome");
    };
    let (Some(t), Some(l)) = (o.outcome.trajectories.get(agent), o.outcome.laws.get(agent)) else {
        return fail(
            DistddpStatus::OutOfRange,
            format!("agent {agent} out of range"),
        );
    };
    let v: Vec<f64> = match field {
        Field::States => t.states.iter().flat_map(|x| x.iter().copied()).collect(),
        Field::Controls => t.controls.iter().flat_map(|u| u.iter().copied()).collect(),
        Field::Feedforward => l
            .feedforward
            .iter()
            .flat_map(|k| k.iter().copied())
            .collect(),
        // row-major per step
        Field::Feedback => l
            .feedback
            .iter()
            .flat_map(|k| k.transpose().iter().copied().collect::<Vec<_>>())
            .collect(),
    };
    copy_out(v.into_iter(), buf, len, written)
}

/// Copies the `(horizon + 1) × state_dim` states of `agent`, step-major.
/// `written` receives the required length even when the buffer is too small.
///
/// # Safety
/// `buf` must point to `len` writable doubles; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_states(
    outcome: *const DistddpOutcome,
    agent: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DistddpStatus {
    guard(|| agent_field(outcome, agent, Field::States, buf, len, written))
}

/// Copies the `horizon × control_dim` controls of `agent`, step-major.
///
/// # Safety
/// As for [`distddp_outcome_states`].
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_controls(
    outcome: *const DistddpOutcome,
    agent: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DistddpStatus {
    guard(|| agent_field(outcome, agent, Field::Controls, buf, len, written))
}

/// Copies the `horizon × control_dim` feedforward terms of `agent`.
///
/// # Safety
/// As for [`distddp_outcome_states`].
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_feedforward(
    outcome: *const DistddpOutcome,
    agent: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DistddpStatus {
    guard(|| agent_field(outcome, agent, Field::Feedforward, buf, len, written))
}

/// Copies the `horizon × control_dim × state_dim` feedback gains of `agent`,
/// each matrix row-major.
///
/// # Safety
/// As for [`distddp_outcome_states`].
#[no_mangle]
pub unsafe extern "C" fn distddp_outcome_feedback(
    outcome: *const DistddpOutcome,
    agent: usize,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DistddpStatus {
    guard(|| agent_field(outcome, agent, Field::Feedback, buf, len, written))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn distddp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
