use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "induced velocity did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{requested} tasks requested but only {available} non-base points exist")]
    TooManyTasks { requested: usize, available: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("illegal action {action:?} for drone {drone} at point {location}")]
    IllegalAction {
        drone: usize,
        action: crate::Action,
        location: usize,
    },

    #[error("drone index {0} out of range")]
    NoSuchDrone(usize),

    #[error("mission success queried before all tasks finished")]
    MissionIncomplete,

    #[error("remaining length of task {task} increased from {before} to {after}")]
    TaskLengthIncreased {
        task: usize,
        before: u32,
        after: u32,
    },

    #[error("no legal action available")]
    NoLegalAction,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("replay buffer holds {have} samples, {need} needed before learning")]
    BelowLearningThreshold { have: usize, need: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
