//! Individual and shared reward functions.
//!
//! Both modes share one piecewise form: execution progress, plus a battery
//! bonus `α·μ` once every task is finished and the energy constraint holds,
//! or minus a penalty `β` when the tasks are finished but the constraint is
//! violated. Individual mode evaluates it per drone on that drone's own
//! sub-step; shared mode evaluates it once per time step for the whole fleet
//! and broadcasts the value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{mission_complete, EnvState, Mission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Individual,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub mode: RewardMode,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            mode: RewardMode::Individual,
            alpha: 10.0,
            beta: 5.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Remaining battery as a fraction of capacity; negative once overdrawn.
pub fn battery_fraction(state: &EnvState, drone: usize, mission: &Mission) -> f64 {
    state.drones[drone].battery / mission.battery_capacity()
}

/// Total decrease of remaining task lengths between `pre` and `post`.
pub fn execution_progress(pre: &EnvState, post: &EnvState) -> Result<u32> {
    let mut total = 0;
    for (i, (a, b)) in pre.tasks.iter().zip(&post.tasks).enumerate() {
        if b.remaining > a.remaining {
            return Err(Error::TaskLengthIncreased {
                task: i,
                before: a.remaining,
                after: b.remaining,
            });
        }
        total += a.remaining - b.remaining;
    }
    Ok(total)
}

/// The bonus or penalty term for `drone` in `state`: zero while tasks
/// remain, `α·μ` if the drone can reach base, `−β` otherwise.
pub fn completion_term(
    state: &EnvState,
    drone: usize,
    params: &RewardParams,
    mission: &Mission,
) -> f64 {
    if !mission_complete(state) {
        0.0
    } else if mission.can_return(&state.drones[drone]) {
        params.alpha * battery_fraction(state, drone, mission)
    } else {
        -params.beta
    }
}

/// Reward for `drone` after its own sub-step took `pre` to `post`.
pub fn individual_reward(
    pre: &EnvState,
    post: &EnvState,
    drone: usize,
    params: &RewardParams,
    mission: &Mission,
) -> Result<f64> {
    state_has_drone(post, drone)?;
    let progress = f64::from(execution_progress(pre, post)?);
    Ok(progress + completion_term(post, drone, params, mission))
}

/// Fleet-wide reward for a full time step, identical for every drone.
pub fn shared_reward(
    pre: &EnvState,
    post: &EnvState,
    params: &RewardParams,
    mission: &Mission,
) -> Result<f64> {
    let progress = f64::from(execution_progress(pre, post)?);
    if !mission_complete(post) {
        return Ok(progress);
    }
    let k = post.drones.len();
    if post.drones.iter().all(|d| mission.can_return(d)) {
        let mean_mu = if k == 0 {
            0.0
        } else {
            (0..k)
                .map(|i| battery_fraction(post, i, mission))
                .sum::<f64>()
                / k as f64
        };
        Ok(progress + params.alpha * mean_mu)
    } else {
        Ok(progress - params.beta)
    }
}

fn state_has_drone(state: &EnvState, drone: usize) -> Result<()> {
    state.drone(drone).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::PowerRates;
    use crate::gridworld::{Action, MissionConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Mission, EnvState) {
        let m = Mission::new(MissionConfig::fixed_default(), PowerRates::simulation()).unwrap();
        let s = m.reset(&mut ChaCha8Rng::seed_from_u64(3));
        (m, s)
    }

    #[test]
    fn progress_counts_single_execute() {
        let (m, mut s) = setup();
        s.drones[0].location = s.tasks[2].location;
        s.tasks[2].remaining = 2;
        let (post, _) = m.apply_action(&s, 0, Action::Execute).unwrap();
        assert_eq!(execution_progress(&s, &post).unwrap(), 1);
        let (moved, _) = m.apply_action(&s, 1, Action::MoveN).unwrap();
        assert_eq!(execution_progress(&s, &moved).unwrap(), 0);
    }

    #[test]
    fn progress_rejects_increase() {
        let (_, s) = setup();
        let mut pre = s.clone();
        pre.tasks[0].remaining = 1;
        assert!(matches!(
            execution_progress(&pre, &s),
            Err(Error::TaskLengthIncreased { task: 0, .. })
        ));
    }

    #[test]
    fn scripted_four_drone_step_sums_progress() {
        let (m, mut s) = setup();
        for k in 0..3 {
            s.drones[k].location = s.tasks[k].location;
        }
        let start = s.clone();
        let actions = [
            Action::Execute,
            Action::Execute,
            Action::Execute,
            Action::MoveN,
        ];
        let mut total = 0;
        for (k, a) in actions.into_iter().enumerate() {
            let (post, _) = m.apply_action(&s, k, a).unwrap();
            total += execution_progress(&s, &post).unwrap();
            s = post;
        }
        assert_eq!(total, 3);
        assert_eq!(execution_progress(&start, &s).unwrap(), 3);
    }

    #[test]
    fn individual_reward_cases() {
        let (m, mut s) = setup();
        let params = RewardParams {
            mode: RewardMode::Individual,
            alpha: 10.0,
            beta: 5.0,
        };
        s.drones[0].location = s.tasks[0].location;
        s.tasks[0].remaining = 2;
        let (post, _) = m.apply_action(&s, 0, Action::Execute).unwrap();
        assert_eq!(individual_reward(&s, &post, 0, &params, &m).unwrap(), 1.0);

        // finishing the last task with half a battery left
        for t in &mut s.tasks {
            t.remaining = 0;
        }
        s.tasks[0].remaining = 1;
        s.drones[0].battery = 900.0 + 7.0;
        let (post, _) = m.apply_action(&s, 0, Action::Execute).unwrap();
        assert_eq!(individual_reward(&s, &post, 0, &params, &m).unwrap(), 6.0);

        // same, but stranded
        s.drones[0].battery = 7.5;
        let (post, _) = m.apply_action(&s, 0, Action::Execute).unwrap();
        assert!(!m.can_return(&post.drones[0]));
        assert_eq!(individual_reward(&s, &post, 0, &params, &m).unwrap(), -4.0);
    }

    #[test]
    fn shared_reward_cases() {
        let (m, mut s) = setup();
        let params = RewardParams {
            mode: RewardMode::Shared,
            alpha: 10.0,
            beta: 5.0,
        };
        let mut post = s.clone();
        post.tasks[0].remaining -= 1;
        post.tasks[1].remaining -= 1;
        assert_eq!(shared_reward(&s, &post, &params, &m).unwrap(), 2.0);

        for t in &mut s.tasks {
            t.remaining = 1;
        }
        let mut post = s.clone();
        for t in &mut post.tasks {
            t.remaining = 0;
        }
        for (d, b) in post.drones.iter_mut().zip([0.6, 0.4, 0.8, 0.6]) {
            d.battery = b * 1800.0;
        }
        let r = shared_reward(&s, &post, &params, &m).unwrap();
        assert!((r - (4.0 + 6.0)).abs() < 1e-12);

        post.drones[2].location = post.tasks[3].location;
        post.drones[2].battery = 0.1;
        assert_eq!(shared_reward(&s, &post, &params, &m).unwrap(), 4.0 - 5.0);
    }

    #[test]
    fn bonus_increases_with_battery() {
        let (m, mut s) = setup();
        let params = RewardParams::default();
        for t in &mut s.tasks {
            t.remaining = 0;
        }
        let mut last = f64::NEG_INFINITY;
        for b in [10.0, 100.0, 900.0, 1800.0] {
            s.drones[1].battery = b;
            let r = completion_term(&s, 1, &params, &m);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn params_validation() {
        assert!(RewardParams::default().validate().is_ok());
        let p = RewardParams {
            alpha: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = RewardParams {
            beta: f64::INFINITY,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
