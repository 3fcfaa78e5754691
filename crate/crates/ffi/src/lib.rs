//! C ABI over the drone-marl simulator and saved Q-networks.
//!
//! Every function returns a [`DmStatus`]; on anything other than
//! `DM_STATUS_OK` a description is kept per thread and can be read with
//! [`dm_last_error_message`]. Environments and agents are opaque handles
//! created by `*_new`/`*_load` and released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use drone_marl::config::RunConfig;
use drone_marl::energy::{PhysicalParams, PowerRates};
use drone_marl::gridworld::mission_complete;
use drone_marl::qlearn::{encode_state, feature_dim, greedy_action, Mlp};
use drone_marl::reward::{individual_reward, shared_reward};
use drone_marl::rng::{stream, Stream};
use drone_marl::{
    Action, ActionMask, EnvState, EpisodeStatus, Error, Mission, MissionConfig, RewardMode,
    RewardParams,
};
use rand_chacha::ChaCha8Rng;

/// Number of actions, in the order N, S, E, W, NE, NW, SE, SW, Hover, Execute.
pub const DM_ACTION_COUNT: usize = 10;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IllegalAction = 3,
    DimensionMismatch = 4,
    BufferTooSmall = 5,
    Io = 6,
    Config = 7,
    Internal = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmEpisodeStatus {
    Running = 0,
    Done = 1,
    TimedOut = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmPowerRates {
    pub p_forward: f64,
    pub p_hover: f64,
    pub p_execute: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmPhysicalParams {
    pub rotor_diameter: f64,
    pub rotor_count: u32,
    pub mass: f64,
    pub gravity: f64,
    pub speed: f64,
    pub pitch_angle: f64,
    pub battery_efficiency: f64,
    pub air_density: f64,
    pub drag_force: f64,
}

/// Result of one drone's sub-step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmStepResult {
    pub energy_spent: f64,
    pub progress: u32,
    /// Reward in individual mode; 0 in shared mode, where the fleet reward
    /// comes from `dm_env_end_time_step`.
    pub reward: f64,
    pub mission_done: bool,
    pub episode_failed: bool,
}

/// A mission instance with its own environment random stream.
pub struct DmEnv {
    mission: Mission,
    reward: RewardParams,
    rng: ChaCha8Rng,
    state: EnvState,
    step_start: EnvState,
}

/// A frozen Q-network loaded from a checkpoint.
pub struct DmAgent {
    net: Mlp,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DmStatus {
    match err {
        Error::IllegalAction { .. } | Error::NoLegalAction => DmStatus::IllegalAction,
        Error::DimensionMismatch { .. } => DmStatus::DimensionMismatch,
        Error::Io(_) | Error::Checkpoint { .. } | Error::Csv(_) => DmStatus::Io,
        Error::Config(_) => DmStatus::Config,
        Error::InvalidParameter { .. }
        | Error::TooManyTasks { .. }
        | Error::InvalidScenario(_)
        | Error::NoSuchDrone(_) => DmStatus::InvalidArgument,
        _ => DmStatus::Internal,
    }
}

struct Failure(DmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside drone-marl".into());
            DmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            DmStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// without the terminator; 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// The scaled per-step rates used by the bundled scenarios.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_simulation_rates(out: *mut DmPowerRates) -> DmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = rates_to_c(PowerRates::simulation());
        Ok(())
    })
}

/// Forward and hover power for `params`, with `p_execute` passed through.
///
/// # Safety
/// `params` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_physical_rates(
    params: *const DmPhysicalParams,
    p_execute: f64,
    out: *mut DmPowerRates,
) -> DmStatus {
    guard(|| {
        let p = deref(params, "params")?;
        let out = deref_mut(out, "out")?;
        let params = PhysicalParams {
            rotor_diameter: p.rotor_diameter,
            rotor_count: p.rotor_count,
            mass: p.mass,
            gravity: p.gravity,
            speed: p.speed,
            pitch_angle: p.pitch_angle,
            battery_efficiency: p.battery_efficiency,
            air_density: p.air_density,
            drag_force: p.drag_force,
        };
        params.validate()?;
        *out = rates_to_c(PowerRates::from_physical(&params, p_execute)?);
        Ok(())
    })
}

/// Physical parameters of the reference drone.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_base_case_params(out: *mut DmPhysicalParams) -> DmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let p = PhysicalParams::base_case();
        *out = DmPhysicalParams {
            rotor_diameter: p.rotor_diameter,
            rotor_count: p.rotor_count,
            mass: p.mass,
            gravity: p.gravity,
            speed: p.speed,
            pitch_angle: p.pitch_angle,
            battery_efficiency: p.battery_efficiency,
            air_density: p.air_density,
            drag_force: p.drag_force,
        };
        Ok(())
    })
}

fn rates_to_c(r: PowerRates) -> DmPowerRates {
    DmPowerRates {
        p_forward: r.p_forward,
        p_hover: r.p_hover,
        p_execute: r.p_execute,
    }
}

fn make_env(
    mission: MissionConfig,
    rates: PowerRates,
    reward: RewardParams,
    seed: u64,
) -> Result<Box<DmEnv>, Failure> {
    let mission = Mission::new(mission, rates)?;
    let mut rng = stream(seed, Stream::Environment);
    let state = mission.reset(&mut rng);
    Ok(Box::new(DmEnv {
        mission,
        reward,
        rng,
        step_start: state.clone(),
        state,
    }))
}

/// A `width`×`height` mission with `task_count` randomly placed tasks of
/// length 1 to 5, simulation rates and default individual rewards. The
/// environment is already reset.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_env_new(
    width: usize,
    height: usize,
    task_count: usize,
    seed: u64,
    out: *mut *mut DmEnv,
) -> DmStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let env = make_env(
            MissionConfig::random(width, height, task_count),
            PowerRates::simulation(),
            RewardParams::default(),
            seed,
        )?;
        *out = Box::into_raw(env);
        Ok(())
    })
}

/// Builds an environment from run-configuration TOML text.
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_env_from_config(
    toml: *const c_char,
    seed: u64,
    out: *mut *mut DmEnv,
) -> DmStatus {
    guard(|| {
        let text = c_str(toml, "toml")?;
        let out = deref_mut(out, "out")?;
        let config = RunConfig::from_toml_str(text)?.train_config(seed)?;
        *out = Box::into_raw(make_env(config.mission, config.rates, config.reward, seed)?);
        Ok(())
    })
}

/// # Safety
/// `env` must come from `dm_env_new`/`dm_env_from_config` and not be used
/// afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dm_env_free(env: *mut DmEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Starts a new episode from the environment's own random stream.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dm_env_reset(env: *mut DmEnv) -> DmStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        env.state = env.mission.reset(&mut env.rng);
        env.step_start = env.state.clone();
        Ok(())
    })
}

/// # Safety
/// `env` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_drone_count(env: *const DmEnv, out: *mut usize) -> DmStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(env, "env")?.mission.drone_count();
        Ok(())
    })
}

/// Length of the feature vector written by `dm_env_encode`.
///
/// # Safety
/// `env` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_feature_dim(env: *const DmEnv, out: *mut usize) -> DmStatus {
    guard(|| {
        *deref_mut(out, "out")? = feature_dim(deref(env, "env")?.mission.drone_count());
        Ok(())
    })
}

/// Bit `i` set means action `i` is legal for `drone`.
///
/// # Safety
/// `env` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_legal_mask(
    env: *const DmEnv,
    drone: usize,
    out: *mut u16,
) -> DmStatus {
    guard(|| {
        let env = deref(env, "env")?;
        *deref_mut(out, "out")? = env.mission.legal_actions(&env.state, drone)?.bits();
        Ok(())
    })
}

/// Applies one drone's sub-step. Drones act in id order; call
/// `dm_env_end_time_step` after the last one.
///
/// # Safety
/// `env` must be a live handle; `out` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_env_step(
    env: *mut DmEnv,
    drone: usize,
    action: u32,
    out: *mut DmStepResult,
) -> DmStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        let action = Action::from_index(action as usize).ok_or_else(|| {
            Failure(
                DmStatus::InvalidArgument,
                format!("action index {action} out of range"),
            )
        })?;
        let pre = env.state.clone();
        let outcome = env
            .mission
            .apply_action_in_place(&mut env.state, drone, action)?;
        let reward = match env.reward.mode {
            RewardMode::Individual => {
                individual_reward(&pre, &env.state, drone, &env.reward, &env.mission)?
            }
            RewardMode::Shared => 0.0,
        };
        if let Some(out) = out.as_mut() {
            *out = DmStepResult {
                energy_spent: outcome.energy_spent,
                progress: outcome.progress_delta,
                reward,
                mission_done: outcome.mission_done,
                episode_failed: outcome.episode_failed,
            };
        }
        Ok(())
    })
}

/// Closes the current time step and advances the clock. Writes the
/// fleet-wide shared reward for the step (computed whatever the mode).
///
/// # Safety
/// `env` must be a live handle; `shared_reward_out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_end_time_step(
    env: *mut DmEnv,
    shared_reward_out: *mut f64,
) -> DmStatus {
    guard(|| {
        let env = deref_mut(env, "env")?;
        let r = shared_reward(&env.step_start, &env.state, &env.reward, &env.mission)?;
        if let Some(out) = shared_reward_out.as_mut() {
            *out = r;
        }
        if !mission_complete(&env.state) {
            env.mission.advance_clock(&mut env.state);
        }
        env.step_start = env.state.clone();
        Ok(())
    })
}

/// Writes `drone`'s view of the state into `buf`, which must hold at least
/// `dm_env_feature_dim` values.
///
/// # Safety
/// `env` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_env_encode(
    env: *const DmEnv,
    drone: usize,
    buf: *mut f64,
    len: usize,
) -> DmStatus {
    guard(|| {
        let env = deref(env, "env")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        env.state.drone(drone)?;
        let features = encode_state(&env.state, drone, &env.mission);
        if len < features.len() {
            return Err(Failure(
                DmStatus::BufferTooSmall,
                format!(
                    "feature buffer holds {len} values, {} needed",
                    features.len()
                ),
            ));
        }
        ptr::copy_nonoverlapping(features.as_ptr(), buf, features.len());
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle; outputs null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_status(
    env: *const DmEnv,
    status_out: *mut DmEpisodeStatus,
    time_step_out: *mut u32,
) -> DmStatus {
    guard(|| {
        let env = deref(env, "env")?;
        if let Some(out) = status_out.as_mut() {
            *out = match env.mission.status(&env.state) {
                EpisodeStatus::Running => DmEpisodeStatus::Running,
                EpisodeStatus::Done => DmEpisodeStatus::Done,
                EpisodeStatus::TimedOut => DmEpisodeStatus::TimedOut,
            };
        }
        if let Some(out) = time_step_out.as_mut() {
            *out = env.state.time_step;
        }
        Ok(())
    })
}

/// Remaining battery of `drone`.
///
/// # Safety
/// `env` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_battery(
    env: *const DmEnv,
    drone: usize,
    out: *mut f64,
) -> DmStatus {
    guard(|| {
        let env = deref(env, "env")?;
        *deref_mut(out, "out")? = env.state.drone(drone)?.battery;
        Ok(())
    })
}

/// Whether the finished mission succeeded. Fails with
/// `DM_STATUS_INVALID_ARGUMENT` while tasks remain.
///
/// # Safety
/// `env` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_env_success(env: *const DmEnv, out: *mut bool) -> DmStatus {
    guard(|| {
        let env = deref(env, "env")?;
        let out = deref_mut(out, "out")?;
        *out = env
            .mission
            .mission_success(&env.state)
            .map_err(|e| Failure(DmStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// Loads a network checkpoint written by the training command.
///
/// # Safety
/// `path` must be null or NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_agent_load(path: *const c_char, out: *mut *mut DmAgent) -> DmStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let out = deref_mut(out, "out")?;
        let net = Mlp::load(Path::new(path))?;
        if net.output_dim() != DM_ACTION_COUNT {
            return Err(Failure(
                DmStatus::DimensionMismatch,
                format!(
                    "network has {} outputs, expected {DM_ACTION_COUNT}",
                    net.output_dim()
                ),
            ));
        }
        *out = Box::into_raw(Box::new(DmAgent { net }));
        Ok(())
    })
}

/// # Safety
/// `agent` must come from `dm_agent_load` and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dm_agent_free(agent: *mut DmAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// # Safety
/// `agent` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dm_agent_input_dim(agent: *const DmAgent, out: *mut usize) -> DmStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(agent, "agent")?.net.input_dim();
        Ok(())
    })
}

/// Writes the ten Q-values for `features` into `q_out`.
///
/// # Safety
/// `features` must point to `len` doubles and `q_out` to 10 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dm_agent_q_values(
    agent: *const DmAgent,
    features: *const f64,
    len: usize,
    q_out: *mut f64,
) -> DmStatus {
    guard(|| {
        let agent = deref(agent, "agent")?;
        let x = slice(features, len, "features")?;
        if q_out.is_null() {
            return Err(null("q_out"));
        }
        let q = agent.net.forward(x)?;
        ptr::copy_nonoverlapping(q.as_ptr(), q_out, q.len());
        Ok(())
    })
}

/// Highest-valued action among those set in `legal_mask`, lowest index
/// on ties.
///
/// # Safety
/// `features` must point to `len` doubles; `action_out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dm_agent_greedy(
    agent: *const DmAgent,
    features: *const f64,
    len: usize,
    legal_mask: u16,
    action_out: *mut u32,
) -> DmStatus {
    guard(|| {
        let agent = deref(agent, "agent")?;
        let x = slice(features, len, "features")?;
        let out = deref_mut(action_out, "action_out")?;
        let q = agent.net.forward(x)?;
        let a = greedy_action(&q, ActionMask::from_bits(legal_mask)).ok_or(Error::NoLegalAction)?;
        *out = a as u32;
        Ok(())
    })
}
