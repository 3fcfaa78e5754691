//! Episode loop: sequential per-drone sub-steps, ε schedule, experience
//! collection, learning and target syncs, plus evaluation and metrics.
//!
//! A drone's transition runs from one of its decisions to the next, so the
//! next state it learns from already reflects its teammates' sub-steps.
//! Shared-mode rewards are assigned once the time step finishes. When the
//! last task is finished, every drone's open transition is closed as
//! terminal and receives the completion bonus or penalty.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::PowerRates;
use crate::error::{Error, Result};
use crate::gridworld::{mission_complete, ActionMask, EnvState, Mission, MissionConfig};
use crate::qlearn::{encode_state, epsilon_greedy, feature_dim, AgentConfig, DqnAgent, Experience};
use crate::reward::{completion_term, individual_reward, shared_reward, RewardMode, RewardParams};
use crate::rng::{stream, Stream};

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_EVAL_EPSILON: f64 = 0.15;

/// Linearly decaying exploration rate, decremented once per sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub delta_init: f64,
    pub delta_decrement: f64,
    pub delta_cutoff: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            delta_init: 0.5,
            delta_decrement: 3e-6,
            delta_cutoff: 0.15,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.delta_cutoff
            && self.delta_cutoff <= self.delta_init
            && self.delta_init <= 1.0
            && self.delta_decrement >= 0.0
            && self.delta_decrement.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "schedule",
                reason: "need 0 <= delta_cutoff <= delta_init <= 1 and delta_decrement >= 0".into(),
            })
        }
    }

    /// Exploration rate after `substeps` decrements.
    pub fn value_after(&self, substeps: u64) -> f64 {
        (self.delta_init - self.delta_decrement * substeps as f64).max(self.delta_cutoff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mission: MissionConfig,
    pub rates: PowerRates,
    pub reward: RewardParams,
    pub agent: AgentConfig,
    pub schedule: Schedule,
    pub total_episodes: usize,
    pub master_seed: u64,
}

impl TrainConfig {
    pub fn new(mission: MissionConfig) -> Self {
        Self {
            mission,
            rates: PowerRates::simulation(),
            reward: RewardParams::default(),
            agent: AgentConfig::default(),
            schedule: Schedule::default(),
            total_episodes: 1200,
            master_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mission.validate()?;
        self.rates.validate()?;
        self.reward.validate()?;
        self.agent.validate()?;
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub epsilon_at_start: f64,
    pub steps_used: u32,
    /// Every task finished before the cutoff.
    pub complete: bool,
    /// Complete, and every drone could still reach base.
    pub success: bool,
    pub final_batteries: Vec<f64>,
    pub cumulative_rewards: Vec<f64>,
}

impl EpisodeRecord {
    pub fn min_final_battery(&self) -> f64 {
        self.final_batteries
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sum_rewards(&self) -> f64 {
        self.cumulative_rewards.iter().sum()
    }
}

/// One aggregate over a window of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub window_center_epsilon: f64,
    pub success_rate: f64,
    pub mean_steps: f64,
}

pub type MetricsSeries = Vec<MetricsRow>;

/// Non-overlapping windows of `window` episodes (the last may be shorter).
/// Every episode contributes its steps, timeouts at the cutoff.
pub fn window_metrics(records: &[EpisodeRecord], window: usize) -> MetricsSeries {
    assert!(window >= 1, "window must be >= 1");
    records
        .chunks(window)
        .map(|chunk| {
            let n = chunk.len() as f64;
            MetricsRow {
                window_center_epsilon: chunk[chunk.len() / 2].epsilon_at_start,
                success_rate: chunk.iter().filter(|r| r.success).count() as f64 / n,
                mean_steps: chunk.iter().map(|r| f64::from(r.steps_used)).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Counters exposed for instrumentation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub substeps: u64,
    /// Buffer length the first time each agent trained.
    pub first_train_buffer_len: Vec<Option<usize>>,
    pub last_losses: Vec<f64>,
    pub min_delta_seen: f64,
}

struct Open {
    features: Vec<f64>,
    action: usize,
    reward: f64,
    /// Reward already includes the completion term.
    bonus_applied: bool,
}

pub struct Trainer {
    config: TrainConfig,
    mission: Mission,
    agents: Vec<DqnAgent>,
    env_rng: ChaCha8Rng,
    substeps: u64,
    episodes_run: usize,
    stats: TrainStats,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mission = Mission::new(config.mission.clone(), config.rates)?;
        let k = mission.drone_count();
        let dim = feature_dim(k);
        let agents = (0..k)
            .map(|i| {
                DqnAgent::new(
                    dim,
                    config.agent.clone(),
                    &mut stream(config.master_seed, Stream::WeightInit(i)),
                    stream(config.master_seed, Stream::Exploration(i)),
                    stream(config.master_seed, Stream::Replay(i)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            env_rng: stream(config.master_seed, Stream::Environment),
            stats: TrainStats {
                first_train_buffer_len: vec![None; k],
                last_losses: vec![f64::NAN; k],
                min_delta_seen: config.schedule.delta_init,
                substeps: 0,
            },
            config,
            mission,
            agents,
            substeps: 0,
            episodes_run: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn mission(&self) -> &Mission {
        &self.mission
    }

    pub fn agents(&self) -> &[DqnAgent] {
        &self.agents
    }

    pub fn into_agents(self) -> Vec<DqnAgent> {
        self.agents
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    pub fn delta(&self) -> f64 {
        self.config.schedule.value_after(self.substeps)
    }

    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let k = self.mission.drone_count();
        let cutoff = self.config.mission.episode_cutoff;
        let reward = self.config.reward;
        let epsilon_at_start = self.delta();
        let mut state = self.mission.reset(&mut self.env_rng);
        let mut open: Vec<Option<Open>> = (0..k).map(|_| None).collect();
        let mut cumulative = vec![0.0; k];

        while !mission_complete(&state) && state.time_step < cutoff {
            let step_start = state.clone();
            let mut acted = 0;
            for drone in 0..k {
                let features = encode_state(&state, drone, &self.mission);
                let legal = self.mission.legal_actions(&state, drone)?;
                if let Some(prev) = open[drone].take() {
                    cumulative[drone] += prev.reward;
                    self.agents[drone].remember(&Experience {
                        state: prev.features,
                        action: prev.action,
                        reward: prev.reward,
                        next_state: features.clone(),
                        terminal: false,
                        next_legal: legal,
                    });
                }

                let delta = self.delta();
                self.stats.min_delta_seen = self.stats.min_delta_seen.min(delta);
                let agent = &mut self.agents[drone];
                let action_index = agent.select_action(&features, delta, legal)?;
                let action = crate::Action::from_index(action_index).expect("index < 10");
                let pre = state.clone();
                let outcome = self
                    .mission
                    .apply_action_in_place(&mut state, drone, action)?;
                self.substeps += 1;
                self.stats.substeps = self.substeps;

                let (r, bonus_applied) = match reward.mode {
                    RewardMode::Individual => (
                        individual_reward(&pre, &state, drone, &reward, &self.mission)?,
                        outcome.mission_done,
                    ),
                    RewardMode::Shared => (0.0, false),
                };
                open[drone] = Some(Open {
                    features,
                    action: action_index,
                    reward: r,
                    bonus_applied,
                });

                if agent.ready_to_learn() {
                    if self.stats.first_train_buffer_len[drone].is_none() {
                        self.stats.first_train_buffer_len[drone] = Some(agent.buffer().len());
                    }
                    self.stats.last_losses[drone] = agent.train_step()?;
                }
                agent.tick();
                acted = drone + 1;
                if outcome.mission_done {
                    break;
                }
            }
            if reward.mode == RewardMode::Shared {
                let r = shared_reward(&step_start, &state, &reward, &self.mission)?;
                let complete = mission_complete(&state);
                for (drone, slot) in open.iter_mut().enumerate() {
                    let Some(o) = slot else { continue };
                    if drone < acted {
                        o.reward = r;
                        o.bonus_applied = complete;
                    } else if complete {
                        // did not act in the finishing step; the step's reward
                        // still reaches it
                        o.reward += r;
                        o.bonus_applied = true;
                    }
                }
            }
            self.mission.advance_clock(&mut state);
        }

        let complete = mission_complete(&state);
        for drone in 0..k {
            let Some(mut o) = open[drone].take() else {
                continue;
            };
            if complete && !o.bonus_applied {
                o.reward += completion_term(&state, drone, &reward, &self.mission);
            }
            cumulative[drone] += o.reward;
            let next_state = encode_state(&state, drone, &self.mission);
            let next_legal = self.mission.legal_actions(&state, drone)?;
            self.agents[drone].remember(&Experience {
                state: o.features,
                action: o.action,
                reward: o.reward,
                next_state,
                terminal: complete,
                next_legal,
            });
        }

        let record = finish_record(
            &self.mission,
            &state,
            self.episodes_run,
            epsilon_at_start,
            cumulative,
        );
        self.episodes_run += 1;
        Ok(record)
    }

    /// Runs `episodes` more episodes, handing each record to `on_record`.
    pub fn run_with<F>(&mut self, episodes: usize, mut on_record: F) -> Result<()>
    where
        F: FnMut(&EpisodeRecord, &Trainer) -> Result<()>,
    {
        for _ in 0..episodes {
            let record = self.run_episode()?;
            on_record(&record, self)?;
        }
        Ok(())
    }
}

fn finish_record(
    mission: &Mission,
    state: &EnvState,
    episode: usize,
    epsilon_at_start: f64,
    cumulative_rewards: Vec<f64>,
) -> EpisodeRecord {
    let complete = mission_complete(state);
    EpisodeRecord {
        episode,
        epsilon_at_start,
        steps_used: state.time_step,
        complete,
        success: complete && mission.mission_success(state).unwrap_or(false),
        final_batteries: state.drones.iter().map(|d| d.battery).collect(),
        cumulative_rewards,
    }
}

pub fn run_training(config: TrainConfig) -> Result<(Vec<DqnAgent>, Vec<EpisodeRecord>)> {
    let episodes = config.total_episodes;
    let mut trainer = Trainer::new(config)?;
    let mut records = Vec::with_capacity(episodes);
    trainer.run_with(episodes, |r, _| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((trainer.into_agents(), records))
}

/// Chooses every drone's action during evaluation.
pub trait FleetPolicy {
    fn choose(
        &mut self,
        drone: usize,
        state: &EnvState,
        mission: &Mission,
        legal: ActionMask,
    ) -> Result<usize>;
}

/// Frozen networks acting ε-greedily at a fixed rate.
pub struct FrozenAgents<'a> {
    pub agents: &'a [DqnAgent],
    pub epsilon: f64,
    pub rng: ChaCha8Rng,
}

impl FleetPolicy for FrozenAgents<'_> {
    fn choose(
        &mut self,
        drone: usize,
        state: &EnvState,
        mission: &Mission,
        legal: ActionMask,
    ) -> Result<usize> {
        let agent = self.agents.get(drone).ok_or(Error::NoSuchDrone(drone))?;
        let features = encode_state(state, drone, mission);
        epsilon_greedy(
            agent.policy(),
            &features,
            self.epsilon,
            legal,
            &mut self.rng,
        )
    }
}

/// Rolls out `episodes` episodes without learning.
pub fn rollout<P: FleetPolicy>(
    mission: &Mission,
    policy: &mut P,
    episodes: usize,
    epsilon: f64,
    env_rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeRecord>> {
    let k = mission.drone_count();
    let cutoff = mission.config().episode_cutoff;
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut state = mission.reset(env_rng);
        let mut cumulative = vec![0.0; k];
        'outer: while !mission_complete(&state) && state.time_step < cutoff {
            for drone in 0..k {
                let legal = mission.legal_actions(&state, drone)?;
                let index = policy.choose(drone, &state, mission, legal)?;
                let action = crate::Action::from_index(index)
                    .filter(|a| legal.contains(*a))
                    .ok_or(Error::IllegalAction {
                        drone,
                        action: crate::Action::from_index(index).unwrap_or(crate::Action::Hover),
                        location: state.drones[drone].location,
                    })?;
                let outcome = mission.apply_action_in_place(&mut state, drone, action)?;
                cumulative[drone] += f64::from(outcome.progress_delta);
                if outcome.mission_done {
                    mission.advance_clock(&mut state);
                    break 'outer;
                }
            }
            mission.advance_clock(&mut state);
        }
        records.push(finish_record(mission, &state, episode, epsilon, cumulative));
    }
    Ok(records)
}

/// Frozen-weight evaluation at a fixed exploration rate. Returns the raw
/// records; see [`evaluate`] for the aggregate.
pub fn evaluate_records(
    agents: &[DqnAgent],
    config: &TrainConfig,
    episodes: usize,
    epsilon_eval: f64,
) -> Result<Vec<EpisodeRecord>> {
    let mission = Mission::new(config.mission.clone(), config.rates)?;
    if agents.len() != mission.drone_count() {
        return Err(Error::DimensionMismatch {
            expected: mission.drone_count(),
            actual: agents.len(),
        });
    }
    let mut policy = FrozenAgents {
        agents,
        epsilon: epsilon_eval,
        rng: stream(config.master_seed, Stream::EvalExploration),
    };
    let mut env_rng = stream(config.master_seed, Stream::Evaluation);
    rollout(&mission, &mut policy, episodes, epsilon_eval, &mut env_rng)
}

/// One aggregate row over all evaluation episodes; empty for zero episodes.
pub fn evaluate(
    agents: &[DqnAgent],
    config: &TrainConfig,
    episodes: usize,
    epsilon_eval: f64,
) -> Result<MetricsSeries> {
    let records = evaluate_records(agents, config, episodes, epsilon_eval)?;
    Ok(window_metrics(&records, episodes.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Action, LayoutTask, LengthPolicy, Placement};

    fn small_config(episodes: usize) -> TrainConfig {
        let mut c = TrainConfig::new(MissionConfig::random(3, 3, 2));
        c.mission.episode_cutoff = 40;
        c.agent.hidden = vec![8, 8];
        c.agent.batch_size = 4;
        c.agent.psi = 2;
        c.agent.sync_period = 50;
        c.agent.buffer_capacity = 500;
        c.total_episodes = episodes;
        c
    }

    fn record(steps: u32, success: bool) -> EpisodeRecord {
        EpisodeRecord {
            episode: 0,
            epsilon_at_start: 0.15,
            steps_used: steps,
            complete: success,
            success,
            final_batteries: vec![],
            cumulative_rewards: vec![],
        }
    }

    #[test]
    fn schedule_values() {
        let s = Schedule::default();
        assert_eq!(s.value_after(0), 0.5);
        assert!((s.value_after(50_000) - 0.35).abs() < 1e-12);
        assert_eq!(s.value_after(10_000_000), 0.15);
        assert!(Schedule {
            delta_cutoff: 0.6,
            ..s
        }
        .validate()
        .is_err());
    }

    #[test]
    fn window_aggregation() {
        let recs: Vec<_> = (0..200).map(|i| record(10 + i % 3, true)).collect();
        assert_eq!(window_metrics(&recs, 100).len(), 2);
        let m = window_metrics(&[record(10, true), record(20, true)], 2);
        assert_eq!(m[0].mean_steps, 15.0);
        let m = window_metrics(&[record(12, true), record(600, false)], 2);
        assert_eq!(m[0].success_rate, 0.5);
        assert_eq!(m[0].mean_steps, 306.0);
    }

    #[test]
    fn zero_episodes() {
        let (agents, records) = run_training(small_config(0)).unwrap();
        assert!(records.is_empty());
        assert_eq!(agents.len(), 2);
        assert!(agents
            .iter()
            .all(|a| a.train_steps() == 0 && a.policy() == a.target()));
        let c = small_config(0);
        assert!(evaluate(&agents, &c, 0, 0.15).unwrap().is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (_, a) = run_training(small_config(15)).unwrap();
        let (_, b) = run_training(small_config(15)).unwrap();
        assert_eq!(a, b);
        let mut other = small_config(15);
        other.master_seed = 1;
        let (_, c) = run_training(other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn learning_waits_for_threshold_and_syncs_on_schedule() {
        let mut t = Trainer::new(small_config(0)).unwrap();
        t.run_with(20, |r, _| {
            assert!(r.steps_used <= 40);
            Ok(())
        })
        .unwrap();
        let threshold = t.config().agent.learning_threshold();
        for (agent, first) in t.agents().iter().zip(&t.stats().first_train_buffer_len) {
            assert!(first.unwrap() >= threshold);
            assert_eq!(agent.syncs(), agent.substeps() / 50);
        }
        assert!(t.stats().min_delta_seen >= t.config().schedule.delta_cutoff);
    }

    struct Scripted;

    impl FleetPolicy for Scripted {
        fn choose(
            &mut self,
            _: usize,
            state: &EnvState,
            _: &Mission,
            _: ActionMask,
        ) -> Result<usize> {
            let at_task = state.task_at(state.drones[0].location).is_some();
            Ok(if at_task {
                Action::Execute
            } else {
                Action::MoveNE
            }
            .index())
        }
    }

    #[test]
    fn scripted_policy_succeeds_on_adjacent_task() {
        let mut mc = MissionConfig::fixed_default();
        mc.task_count = 1;
        mc.placement = Placement::Fixed(vec![LayoutTask::new(1, 1, 3)]);
        mc.lengths = LengthPolicy::Layout;
        let mission = Mission::new(mc, PowerRates::simulation()).unwrap();
        let mut rng = stream(0, Stream::Evaluation);
        let records = rollout(&mission, &mut Scripted, 10, 0.0, &mut rng).unwrap();
        let m = window_metrics(&records, 10);
        assert_eq!(m[0].success_rate, 1.0);
        assert_eq!(m[0].mean_steps, 4.0);
    }

    #[test]
    fn random_walk_with_tiny_battery_fails() {
        let mut c = small_config(0);
        c.mission.battery_capacity = 1.0;
        let (agents, _) = run_training(c.clone()).unwrap();
        let m = evaluate(&agents, &c, 50, 1.0).unwrap();
        assert!(m[0].success_rate < 0.1);
    }
}
