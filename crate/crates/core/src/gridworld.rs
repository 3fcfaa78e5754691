//! Trajectory-point grid, tasks, drones and the ten-action transition function.
//!
//! Points are indexed row-major, `index = y * width + x`, with the base station
//! at index 0 in the `(0, 0)` corner. Distances are measured in units of one
//! cell diagonal, the distance a drone covers in one time step.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::energy::PowerRates;
use crate::error::{Error, Result};

pub const ACTION_COUNT: usize = 10;
pub const DEFAULT_BATTERY: f64 = 1800.0;
pub const DEFAULT_CUTOFF: u32 = 600;
pub const DEFAULT_TASK_LENGTH: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    MoveN,
    MoveS,
    MoveE,
    MoveW,
    MoveNE,
    MoveNW,
    MoveSE,
    MoveSW,
    Hover,
    Execute,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::MoveN,
        Action::MoveS,
        Action::MoveE,
        Action::MoveW,
        Action::MoveNE,
        Action::MoveNW,
        Action::MoveSE,
        Action::MoveSW,
        Action::Hover,
        Action::Execute,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Grid offset `(dx, dy)` of a move; `None` for hover and execute.
    pub fn offset(self) -> Option<(i64, i64)> {
        match self {
            Action::MoveN => Some((0, 1)),
            Action::MoveS => Some((0, -1)),
            Action::MoveE => Some((1, 0)),
            Action::MoveW => Some((-1, 0)),
            Action::MoveNE => Some((1, 1)),
            Action::MoveNW => Some((-1, 1)),
            Action::MoveSE => Some((1, -1)),
            Action::MoveSW => Some((-1, -1)),
            Action::Hover | Action::Execute => None,
        }
    }

    pub fn is_diagonal(self) -> bool {
        matches!(
            self,
            Action::MoveNE | Action::MoveNW | Action::MoveSE | Action::MoveSW
        )
    }
}

/// Set of actions as a bit mask over [`Action::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionMask(u16);

impl ActionMask {
    pub const ALL: ActionMask = ActionMask((1 << ACTION_COUNT) - 1);
    pub const EMPTY: ActionMask = ActionMask(0);

    pub fn from_bits(bits: u16) -> ActionMask {
        ActionMask(bits & Self::ALL.0)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, action: Action) {
        self.0 |= 1 << action.index();
    }

    pub fn contains(self, action: Action) -> bool {
        self.contains_index(action.index())
    }

    pub fn contains_index(self, i: usize) -> bool {
        i < ACTION_COUNT && self.0 & (1 << i) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ActionMask) -> ActionMask {
        ActionMask(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        let grid = Self { width, height };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!(
                    "width and height must be >= 2, got {}x{}",
                    self.width, self.height
                ),
            });
        }
        Ok(())
    }

    pub const fn base_index(&self) -> usize {
        0
    }

    pub fn point_count(&self) -> usize {
        self.width * self.height
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn index(&self, x: usize, y: usize) -> Option<usize> {
        (x < self.width && y < self.height).then(|| y * self.width + x)
    }

    /// Destination of `action` from `location`, `None` if it leaves the grid.
    pub fn destination(&self, location: usize, action: Action) -> Option<usize> {
        let Some((dx, dy)) = action.offset() else {
            return Some(location);
        };
        let (x, y) = self.coords(location);
        let nx = usize::try_from(x as i64 + dx).ok()?;
        let ny = usize::try_from(y as i64 + dy).ok()?;
        self.index(nx, ny)
    }

    pub fn legal_actions(&self, location: usize) -> ActionMask {
        let mut mask = ActionMask::EMPTY;
        for action in Action::ALL {
            if self.destination(location, action).is_some() {
                mask.insert(action);
            }
        }
        mask
    }

    /// Euclidean distance from `location` to the base, in cell diagonals.
    pub fn distance_to_base(&self, location: usize) -> f64 {
        let (x, y) = self.coords(location);
        let (x, y) = (x as f64, y as f64);
        ((x * x + y * y) / 2.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub location: usize,
    pub initial_length: u32,
    pub remaining: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroneState {
    pub location: usize,
    pub battery: f64,
}

/// Joint state: task locations, drone locations, last actions, remaining task
/// lengths and batteries, plus the episode clock.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub tasks: Vec<Task>,
    pub drones: Vec<DroneState>,
    pub last_actions: Vec<Action>,
    pub time_step: u32,
}

impl EnvState {
    pub fn task_locations(&self) -> impl Iterator<Item = usize> + '_ {
        self.tasks.iter().map(|t| t.location)
    }

    pub fn remaining_total(&self) -> u64 {
        self.tasks.iter().map(|t| u64::from(t.remaining)).sum()
    }

    pub fn drone(&self, id: usize) -> Result<&DroneState> {
        self.drones.get(id).ok_or(Error::NoSuchDrone(id))
    }

    pub fn task_at(&self, location: usize) -> Option<usize> {
        self.tasks.iter().position(|t| t.location == location)
    }
}

/// True once every remaining task length is zero.
pub fn mission_complete(state: &EnvState) -> bool {
    state.tasks.iter().all(|t| t.remaining == 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutTask {
    pub x: usize,
    pub y: usize,
    pub length: u32,
}

impl LayoutTask {
    pub const fn new(x: usize, y: usize, length: u32) -> Self {
        Self { x, y, length }
    }
}

/// Four-task layout on the 5×5 grid used by the fixed-location experiments.
pub const DEFAULT_LAYOUT: [LayoutTask; 4] = [
    LayoutTask::new(1, 3, DEFAULT_TASK_LENGTH),
    LayoutTask::new(3, 4, DEFAULT_TASK_LENGTH),
    LayoutTask::new(2, 1, DEFAULT_TASK_LENGTH),
    LayoutTask::new(4, 2, DEFAULT_TASK_LENGTH),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Fixed(Vec<LayoutTask>),
    /// Uniform without replacement over the non-base points.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthPolicy {
    Fixed(u32),
    /// Uniform integer in `[min, max]`.
    Uniform {
        min: u32,
        max: u32,
    },
    /// Lengths taken from the fixed layout.
    Layout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    pub grid: GridSpec,
    /// Number of tasks; the fleet has the same number of drones.
    pub task_count: usize,
    pub placement: Placement,
    pub lengths: LengthPolicy,
    pub battery_capacity: f64,
    pub episode_cutoff: u32,
}

impl MissionConfig {
    /// 5×5 grid with the default four-task layout, every task of length 5.
    pub fn fixed_default() -> Self {
        Self {
            grid: GridSpec {
                width: 5,
                height: 5,
            },
            task_count: DEFAULT_LAYOUT.len(),
            placement: Placement::Fixed(DEFAULT_LAYOUT.to_vec()),
            lengths: LengthPolicy::Fixed(DEFAULT_TASK_LENGTH),
            battery_capacity: DEFAULT_BATTERY,
            episode_cutoff: DEFAULT_CUTOFF,
        }
    }

    /// Random placement with lengths uniform in `[1, 5]`.
    pub fn random(width: usize, height: usize, task_count: usize) -> Self {
        Self {
            grid: GridSpec { width, height },
            task_count,
            placement: Placement::Random,
            lengths: LengthPolicy::Uniform {
                min: 1,
                max: DEFAULT_TASK_LENGTH,
            },
            battery_capacity: DEFAULT_BATTERY,
            episode_cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn drone_count(&self) -> usize {
        self.task_count
    }

    /// Largest initial task length the policy can produce.
    pub fn max_task_length(&self) -> u32 {
        match (&self.lengths, &self.placement) {
            (LengthPolicy::Fixed(n), _) => *n,
            (LengthPolicy::Uniform { max, .. }, _) => *max,
            (LengthPolicy::Layout, Placement::Fixed(layout)) => {
                layout.iter().map(|t| t.length).max().unwrap_or(1)
            }
            (LengthPolicy::Layout, Placement::Random) => 1,
        }
        .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let available = self.grid.point_count() - 1;
        if self.task_count > available {
            return Err(Error::TooManyTasks {
                requested: self.task_count,
                available,
            });
        }
        if !(self.battery_capacity.is_finite() && self.battery_capacity > 0.0) {
            return Err(Error::InvalidParameter {
                name: "battery_capacity",
                reason: "must be finite and > 0".into(),
            });
        }
        if self.episode_cutoff == 0 {
            return Err(Error::InvalidParameter {
                name: "episode_cutoff",
                reason: "must be >= 1".into(),
            });
        }
        match self.lengths {
            LengthPolicy::Fixed(0) => {
                return Err(Error::InvalidScenario("task length must be >= 1".into()))
            }
            LengthPolicy::Uniform { min, max } if min == 0 || min > max => {
                return Err(Error::InvalidScenario(format!(
                    "uniform length range {min}..{max} must satisfy 1 <= min <= max"
                )))
            }
            LengthPolicy::Layout if self.placement == Placement::Random => {
                return Err(Error::InvalidScenario(
                    "layout lengths require a fixed layout".into(),
                ))
            }
            _ => {}
        }
        if let Placement::Fixed(layout) = &self.placement {
            if layout.len() != self.task_count {
                return Err(Error::InvalidScenario(format!(
                    "fixed layout lists {} tasks but task count is {}",
                    layout.len(),
                    self.task_count
                )));
            }
            let mut seen = vec![false; self.grid.point_count()];
            for t in layout {
                let idx = self.grid.index(t.x, t.y).ok_or_else(|| {
                    Error::InvalidScenario(format!("task ({}, {}) lies off the grid", t.x, t.y))
                })?;
                if idx == self.grid.base_index() {
                    return Err(Error::InvalidScenario("no task may sit at the base".into()));
                }
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(Error::InvalidScenario(format!(
                        "two tasks share point ({}, {})",
                        t.x, t.y
                    )));
                }
                if t.length == 0 && self.lengths == LengthPolicy::Layout {
                    return Err(Error::InvalidScenario("task length must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeStatus {
    Running,
    Done,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub energy_spent: f64,
    pub progress_delta: u32,
    pub mission_done: bool,
    /// Mission finished but some drone cannot make it back to base.
    pub episode_failed: bool,
}

/// Mission dynamics: a validated configuration plus the power rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    config: MissionConfig,
    rates: PowerRates,
}

impl Mission {
    pub fn new(config: MissionConfig, rates: PowerRates) -> Result<Self> {
        config.validate()?;
        rates.validate()?;
        Ok(Self { config, rates })
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.config.grid
    }

    pub fn rates(&self) -> &PowerRates {
        &self.rates
    }

    pub fn drone_count(&self) -> usize {
        self.config.drone_count()
    }

    pub fn battery_capacity(&self) -> f64 {
        self.config.battery_capacity
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> EnvState {
        let cfg = &self.config;
        let grid = &cfg.grid;
        let mut tasks: Vec<Task> = match &cfg.placement {
            Placement::Fixed(layout) => layout
                .iter()
                .map(|t| Task {
                    location: grid.index(t.x, t.y).expect("layout validated"),
                    initial_length: t.length,
                    remaining: t.length,
                })
                .collect(),
            Placement::Random => index::sample(rng, grid.point_count() - 1, cfg.task_count)
                .into_iter()
                .map(|i| Task {
                    location: i + 1,
                    initial_length: 0,
                    remaining: 0,
                })
                .collect(),
        };
        tasks.sort_by_key(|t| t.location);
        for task in &mut tasks {
            let length = match cfg.lengths {
                LengthPolicy::Fixed(n) => n,
                LengthPolicy::Uniform { min, max } => rng.gen_range(min..=max),
                LengthPolicy::Layout => task.initial_length,
            };
            task.initial_length = length;
            task.remaining = length;
        }
        let k = cfg.drone_count();
        EnvState {
            tasks,
            drones: vec![
                DroneState {
                    location: grid.base_index(),
                    battery: cfg.battery_capacity,
                };
                k
            ],
            last_actions: vec![Action::Hover; k],
            time_step: 0,
        }
    }

    pub fn legal_actions(&self, state: &EnvState, drone: usize) -> Result<ActionMask> {
        Ok(self.grid().legal_actions(state.drone(drone)?.location))
    }

    /// Energy one sub-step of `action` costs from `location`.
    pub fn action_cost(&self, location: usize, action: Action) -> f64 {
        let r = &self.rates;
        match action {
            Action::Hover if location == self.grid().base_index() => 0.0,
            Action::Hover => r.p_hover,
            Action::Execute => r.p_hover + r.p_execute,
            a if a.is_diagonal() => r.p_forward,
            // travel covers 1/√2 of the step, hovering fills the rest
            _ => r.p_forward * FRAC_1_SQRT_2 + r.p_hover * (1.0 - FRAC_1_SQRT_2),
        }
    }

    /// Applies one drone's sub-step in place. The clock is not advanced.
    pub fn apply_action_in_place(
        &self,
        state: &mut EnvState,
        drone: usize,
        action: Action,
    ) -> Result<StepOutcome> {
        let location = state.drone(drone)?.location;
        let destination =
            self.grid()
                .destination(location, action)
                .ok_or(Error::IllegalAction {
                    drone,
                    action,
                    location,
                })?;
        let energy = self.action_cost(location, action);
        let mut progress = 0;
        if action == Action::Execute {
            if let Some(i) = state.task_at(location) {
                let task = &mut state.tasks[i];
                if task.remaining > 0 {
                    task.remaining -= 1;
                    progress = 1;
                }
            }
        }
        let d = &mut state.drones[drone];
        d.location = destination;
        d.battery -= energy;
        state.last_actions[drone] = action;

        let done = mission_complete(state);
        let failed = done && !self.all_can_return(state);
        Ok(StepOutcome {
            energy_spent: energy,
            progress_delta: progress,
            mission_done: done,
            episode_failed: failed,
        })
    }

    pub fn apply_action(
        &self,
        state: &EnvState,
        drone: usize,
        action: Action,
    ) -> Result<(EnvState, StepOutcome)> {
        let mut next = state.clone();
        let outcome = self.apply_action_in_place(&mut next, drone, action)?;
        Ok((next, outcome))
    }

    /// Advances the clock once every drone has taken its sub-step.
    pub fn advance_clock(&self, state: &mut EnvState) {
        state.time_step += 1;
    }

    /// Energy needed to fly straight back to base at forward power.
    pub fn return_energy(&self, drone: &DroneState) -> f64 {
        self.rates.p_forward * self.grid().distance_to_base(drone.location)
    }

    pub fn can_return(&self, drone: &DroneState) -> bool {
        drone.battery >= self.return_energy(drone)
    }

    fn all_can_return(&self, state: &EnvState) -> bool {
        state.drones.iter().all(|d| self.can_return(d))
    }

    pub fn mission_success(&self, state: &EnvState) -> Result<bool> {
        if !mission_complete(state) {
            return Err(Error::MissionIncomplete);
        }
        Ok(self.all_can_return(state))
    }

    pub fn status_with_cutoff(state: &EnvState, cutoff: u32) -> EpisodeStatus {
        if mission_complete(state) {
            EpisodeStatus::Done
        } else if state.time_step >= cutoff {
            EpisodeStatus::TimedOut
        } else {
            EpisodeStatus::Running
        }
    }

    pub fn status(&self, state: &EnvState) -> EpisodeStatus {
        Self::status_with_cutoff(state, self.config.episode_cutoff)
    }
}
