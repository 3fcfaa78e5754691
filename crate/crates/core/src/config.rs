//! Run configuration files.
//!
//! A run file is TOML with one table per concern. Every table rejects
//! unknown keys and every key has a default, so a file only needs to list
//! what differs from the baseline scenario.
//!
//! ```toml
//! [grid]
//! width = 5
//! height = 5
//!
//! [tasks]
//! count = 4
//! placement = "random"
//! lengths = "uniform:1..5"
//!
//! [agent]
//! psi = 10
//! sync_f = 8000
//!
//! [run]
//! episodes = 1200
//! seeds = [0, 1, 2]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{PhysicalParams, PowerRates};
use crate::error::{Error, Result};
use crate::gridworld::{
    GridSpec, LayoutTask, LengthPolicy, MissionConfig, Placement, DEFAULT_BATTERY, DEFAULT_CUTOFF,
    DEFAULT_LAYOUT,
};
use crate::qlearn::AgentConfig;
use crate::reward::{RewardMode, RewardParams};
use crate::trainer::{Schedule, TrainConfig, DEFAULT_EVAL_EPSILON, DEFAULT_WINDOW};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub tasks: TasksSection,
    pub reward: RewardSection,
    pub schedule: ScheduleSection,
    pub agent: AgentSection,
    pub run: RunSection,
    pub energy: EnergySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub width: usize,
    pub height: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementKind {
    Fixed,
    Random,
}

/// Task-length policy written as `fixed:N`, `uniform:A..B` or `layout`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LengthSpec(pub LengthPolicy);

impl FromStr for LengthSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid lengths {s:?}; expected fixed:N, uniform:A..B or layout");
        let policy = if s == "layout" {
            LengthPolicy::Layout
        } else if let Some(n) = s.strip_prefix("fixed:") {
            LengthPolicy::Fixed(n.trim().parse().map_err(|_| bad())?)
        } else if let Some(range) = s.strip_prefix("uniform:") {
            let (a, b) = range.split_once("..").ok_or_else(bad)?;
            LengthPolicy::Uniform {
                min: a.trim().parse().map_err(|_| bad())?,
                max: b.trim().parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        Ok(Self(policy))
    }
}

impl TryFrom<String> for LengthSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl fmt::Display for LengthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            LengthPolicy::Fixed(n) => write!(f, "fixed:{n}"),
            LengthPolicy::Uniform { min, max } => write!(f, "uniform:{min}..{max}"),
            LengthPolicy::Layout => f.write_str("layout"),
        }
    }
}

impl From<LengthSpec> for String {
    fn from(spec: LengthSpec) -> Self {
        spec.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TasksSection {
    pub count: usize,
    pub placement: PlacementKind,
    pub lengths: LengthSpec,
    /// `[x, y, length]` triples; used when placement is fixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_layout: Option<Vec<(usize, usize, u32)>>,
    pub battery: f64,
    pub cutoff: u32,
}

impl Default for TasksSection {
    fn default() -> Self {
        Self {
            count: 4,
            placement: PlacementKind::Random,
            lengths: LengthSpec(LengthPolicy::Uniform { min: 1, max: 5 }),
            fixed_layout: None,
            battery: DEFAULT_BATTERY,
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSection {
    pub mode: RewardMode,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        let p = RewardParams::default();
        Self {
            mode: p.mode,
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub delta_init: f64,
    pub delta_decrement: f64,
    pub delta_cutoff: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = Schedule::default();
        Self {
            delta_init: s.delta_init,
            delta_decrement: s.delta_decrement,
            delta_cutoff: s.delta_cutoff,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub psi: usize,
    pub sync_f: u64,
    pub buffer: usize,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        Self {
            hidden: a.hidden,
            lr: a.learning_rate,
            gamma: a.gamma,
            batch_size: a.batch_size,
            psi: a.psi,
            sync_f: a.sync_period,
            buffer: a.buffer_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Episodes per row of the windowed curve.
    pub window: usize,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            episodes: 1200,
            seeds: vec![0],
            window: DEFAULT_WINDOW,
            eval_episodes: 200,
            eval_epsilon: DEFAULT_EVAL_EPSILON,
        }
    }
}

/// Per-step power rates. Without `physical` the forward and hover rates
/// default to the scaled simulation values; with it they are derived from
/// the drone's physics and must not be given explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_forward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hover: Option<f64>,
    pub p_execute: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalParams>,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self {
            p_forward: None,
            p_hover: None,
            p_execute: PowerRates::simulation().p_execute,
            physical: None,
        }
    }
}

impl EnergySection {
    pub fn rates(&self) -> Result<PowerRates> {
        match &self.physical {
            Some(params) => {
                for (key, v) in [
                    ("energy.p_forward", self.p_forward),
                    ("energy.p_hover", self.p_hover),
                ] {
                    if v.is_some() {
                        return Err(Error::Config(format!(
                            "{key} cannot be combined with energy.physical"
                        )));
                    }
                }
                params.validate()?;
                PowerRates::from_physical(params, self.p_execute)
            }
            None => {
                let sim = PowerRates::simulation();
                PowerRates::custom(
                    self.p_forward.unwrap_or(sim.p_forward),
                    self.p_hover.unwrap_or(sim.p_hover),
                    self.p_execute,
                )
            }
        }
    }
}

fn section<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(msg) => Error::Config(msg),
        other => Error::Config(format!("[{name}] {other}")),
    })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(describe_toml_error(text, &e)))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config is always representable as TOML")
    }

    pub fn mission(&self) -> Result<MissionConfig> {
        let placement = match self.tasks.placement {
            PlacementKind::Random => Placement::Random,
            PlacementKind::Fixed => Placement::Fixed(match &self.tasks.fixed_layout {
                Some(list) => list
                    .iter()
                    .map(|&(x, y, length)| LayoutTask { x, y, length })
                    .collect(),
                None => DEFAULT_LAYOUT.to_vec(),
            }),
        };
        let mission = MissionConfig {
            grid: GridSpec {
                width: self.grid.width,
                height: self.grid.height,
            },
            task_count: self.tasks.count,
            placement,
            lengths: self.tasks.lengths.0,
            battery_capacity: self.tasks.battery,
            episode_cutoff: self.tasks.cutoff,
        };
        section("tasks", mission.validate())?;
        Ok(mission)
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            hidden: self.agent.hidden.clone(),
            learning_rate: self.agent.lr,
            gamma: self.agent.gamma,
            batch_size: self.agent.batch_size,
            psi: self.agent.psi,
            sync_period: self.agent.sync_f,
            buffer_capacity: self.agent.buffer,
        }
    }

    /// The training configuration for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let config = TrainConfig {
            mission: self.mission()?,
            rates: section("energy", self.energy.rates())?,
            reward: RewardParams {
                mode: self.reward.mode,
                alpha: self.reward.alpha,
                beta: self.reward.beta,
            },
            agent: self.agent_config(),
            schedule: Schedule {
                delta_init: self.schedule.delta_init,
                delta_decrement: self.schedule.delta_decrement,
                delta_cutoff: self.schedule.delta_cutoff,
            },
            total_episodes: self.run.episodes,
            master_seed: seed,
        };
        section("reward", config.reward.validate())?;
        section("agent", config.agent.validate())?;
        section("schedule", config.schedule.validate())?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::Config(
                "run.seeds must list at least one seed".into(),
            ));
        }
        if self.run.window == 0 {
            return Err(Error::Config("run.window must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.run.eval_epsilon) {
            return Err(Error::Config("run.eval_epsilon must lie in [0, 1]".into()));
        }
        self.train_config(self.run.seeds[0]).map(|_| ())
    }
}

fn describe_toml_error(text: &str, err: &toml::de::Error) -> String {
    let message = err.message().replace('\n', " ");
    match err.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {message}")
        }
        None => message,
    }
}

/// Parses `--seeds`: a single number `N` means seeds `0..N`, a
/// comma-separated list is taken literally.
pub fn parse_seeds(arg: &str) -> Result<Vec<u64>> {
    let bad = || {
        Error::Config(format!(
            "--seeds: expected a count or a comma-separated list, got {arg:?}"
        ))
    };
    if arg.contains(',') {
        arg.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect()
    } else {
        let n: u64 = arg.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        Ok((0..n).collect())
    }
}
