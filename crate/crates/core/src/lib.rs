//! Energy-aware multi-agent deep Q-learning for mission-oriented drone networks.
//!
//! Drones start at a base station on a grid of trajectory points, fly to
//! tasks, execute them over several time steps, and must finish the whole
//! mission with enough battery left to fly home. Each drone learns its own
//! DQN policy from either an individual or a shared reward signal.

pub mod config;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod gridworld;
pub mod qlearn;
pub mod reward;
pub mod rng;
pub mod trainer;

pub use energy::{PhysicalParams, PowerRates};
pub use error::{Error, Result};
pub use gridworld::{
    Action, ActionMask, EnvState, EpisodeStatus, GridSpec, Mission, MissionConfig,
};
pub use reward::{RewardMode, RewardParams};
pub use trainer::{EpisodeRecord, MetricsRow, Schedule, TrainConfig, Trainer};
