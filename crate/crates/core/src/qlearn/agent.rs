use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activations, Backprop};
use super::replay::Minibatch;
use super::{Adam, Experience, Mlp, ReplayBuffer};
use crate::error::{Error, Result};
use crate::gridworld::{ActionMask, ACTION_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Learning starts once the buffer holds `batch_size * psi` samples.
    pub psi: usize,
    /// Target network sync period, in this agent's sub-steps.
    pub sync_period: u64,
    pub buffer_capacity: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            gamma: 0.95,
            batch_size: 32,
            psi: 10,
            sync_period: 8000,
            buffer_capacity: 100_000,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", "need at least one non-empty hidden layer");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", "must be finite and > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.psi == 0 {
            return bad("psi", "must be >= 1");
        }
        if self.sync_period == 0 {
            return bad("sync_f", "must be >= 1");
        }
        if self.buffer_capacity < self.batch_size * self.psi {
            return bad(
                "buffer",
                "capacity must reach the learning threshold batch_size * psi",
            );
        }
        Ok(())
    }

    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend(&self.hidden);
        dims.push(ACTION_COUNT);
        dims
    }

    pub fn learning_threshold(&self) -> usize {
        self.batch_size * self.psi
    }
}

/// Index of the largest Q-value among `legal` actions, lowest index on ties.
pub fn greedy_action(q: &[f64], legal: ActionMask) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in q.iter().enumerate() {
        if legal.contains_index(i) && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// With probability `delta` a uniform legal action, otherwise the greedy one.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    net: &Mlp,
    features: &[f64],
    delta: f64,
    legal: ActionMask,
    rng: &mut R,
) -> Result<usize> {
    if legal.is_empty() {
        return Err(Error::NoLegalAction);
    }
    if rng.gen::<f64>() < delta {
        let pick = rng.gen_range(0..legal.len());
        return Ok(legal.iter().nth(pick).expect("pick < len").index());
    }
    let q = net.forward(features)?;
    greedy_action(&q, legal).ok_or(Error::NoLegalAction)
}

fn max_legal(q: &[f64], legal: ActionMask) -> f64 {
    greedy_action(q, legal).map_or(0.0, |i| q[i])
}

/// Bootstrapped targets `r + γ·max_a' Q_target(s', a')`, or `r` for terminal samples.
pub fn td_targets(batch: &[Experience], target: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    let mb = Minibatch::from_experiences(batch);
    check_width(target, &mb)?;
    let mut acts = Activations::default();
    let mut out = Vec::new();
    minibatch_targets(&mb, target, gamma, &mut acts, &mut out);
    Ok(out)
}

fn check_width(net: &Mlp, mb: &Minibatch) -> Result<()> {
    if mb.states.len() != mb.len() * net.input_dim() || mb.next_states.len() != mb.states.len() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: mb.dim,
        });
    }
    Ok(())
}

fn minibatch_targets(
    mb: &Minibatch,
    target: &Mlp,
    gamma: f64,
    acts: &mut Activations,
    out: &mut Vec<f64>,
) {
    out.clear();
    let n = mb.len();
    if n == 0 {
        return;
    }
    target.forward_batch(&mb.next_states, n, acts);
    let q_next = acts.output();
    for i in 0..n {
        let y = if mb.terminals[i] {
            mb.rewards[i]
        } else {
            let q = &q_next[i * ACTION_COUNT..(i + 1) * ACTION_COUNT];
            mb.rewards[i] + gamma * max_legal(q, mb.next_legal[i])
        };
        out.push(y);
    }
}

/// Mean squared error between `Q(s, a)` at the stored actions and `targets`.
pub fn batch_loss(net: &Mlp, batch: &[Experience], targets: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (e, y) in batch.iter().zip(targets) {
        let q = net.forward(&e.state)?;
        total += (q[e.action] - y).powi(2);
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its gradient with respect to every parameter of `net`. Targets
/// are constants.
pub fn batch_loss_and_gradient(
    net: &Mlp,
    batch: &[Experience],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let mb = Minibatch::from_experiences(batch);
    check_width(net, &mb)?;
    let mut grad = vec![0.0; net.params().len()];
    let mut scratch = Scratch::default();
    let loss = accumulate_gradient(net, &mb, targets, &mut grad, &mut scratch);
    Ok((loss, grad))
}

#[derive(Debug, Default, Clone)]
struct Scratch {
    acts: Activations,
    target_acts: Activations,
    backprop: Backprop,
    output_grad: Vec<f64>,
    targets: Vec<f64>,
    batch: Minibatch,
}

fn accumulate_gradient(
    net: &Mlp,
    mb: &Minibatch,
    targets: &[f64],
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    let n = mb.len();
    if n == 0 {
        return 0.0;
    }
    let out_dim = net.output_dim();
    net.forward_batch(&mb.states, n, &mut scratch.acts);
    let q = scratch.acts.output();
    scratch.output_grad.clear();
    scratch.output_grad.resize(n * out_dim, 0.0);
    let mut loss = 0.0;
    for i in 0..n {
        let a = mb.actions[i];
        let err = q[i * out_dim + a] - targets[i];
        loss += err * err;
        scratch.output_grad[i * out_dim + a] = 2.0 * err / n as f64;
    }
    net.backward_batch(
        &mb.states,
        n,
        &scratch.acts,
        &scratch.output_grad,
        grad,
        &mut scratch.backprop,
    );
    loss / n as f64
}

/// One drone's learner: policy and target networks, optimizer, replay memory
/// and its private random streams.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    config: AgentConfig,
    policy: Mlp,
    target: Mlp,
    optimizer: Adam,
    buffer: ReplayBuffer,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    substeps: u64,
    train_steps: u64,
    syncs: u64,
    grad: Vec<f64>,
    scratch: Scratch,
}

impl DqnAgent {
    pub fn new(
        input_dim: usize,
        config: AgentConfig,
        init_rng: &mut ChaCha8Rng,
        explore_rng: ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let policy = Mlp::new(&config.layer_dims(input_dim), init_rng)?;
        Self::from_network(policy, config, explore_rng, replay_rng)
    }

    pub fn from_network(
        policy: Mlp,
        config: AgentConfig,
        explore_rng: ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if policy.output_dim() != ACTION_COUNT {
            return Err(Error::DimensionMismatch {
                expected: ACTION_COUNT,
                actual: policy.output_dim(),
            });
        }
        let n = policy.params().len();
        Ok(Self {
            optimizer: Adam::new(n, config.learning_rate),
            buffer: ReplayBuffer::new(config.buffer_capacity, policy.input_dim()),
            target: policy.clone(),
            policy,
            config,
            explore_rng,
            replay_rng,
            substeps: 0,
            train_steps: 0,
            syncs: 0,
            grad: vec![0.0; n],
            scratch: Scratch::default(),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut Mlp {
        &mut self.policy
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn substeps(&self) -> u64 {
        self.substeps
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.policy.forward(features)
    }

    /// ε-greedy over `legal` using the agent's own exploration stream.
    pub fn select_action(
        &mut self,
        features: &[f64],
        delta: f64,
        legal: ActionMask,
    ) -> Result<usize> {
        epsilon_greedy(&self.policy, features, delta, legal, &mut self.explore_rng)
    }

    pub fn select_action_with<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        delta: f64,
        legal: ActionMask,
        rng: &mut R,
    ) -> Result<usize> {
        epsilon_greedy(&self.policy, features, delta, legal, rng)
    }

    pub fn remember(&mut self, exp: &Experience) {
        self.buffer.push(exp);
    }

    /// Drops every stored experience and frees the buffer's memory. The
    /// networks and counters are kept.
    pub fn release_replay(&mut self) {
        self.buffer = ReplayBuffer::new(self.config.buffer_capacity, self.buffer.dim());
    }

    pub fn ready_to_learn(&self) -> bool {
        self.buffer.len() >= self.config.learning_threshold()
    }

    /// One Adam update on a uniformly sampled minibatch. Returns the loss
    /// measured before the update.
    pub fn train_step(&mut self) -> Result<f64> {
        let need = self.config.learning_threshold();
        if self.buffer.len() < need {
            return Err(Error::BelowLearningThreshold {
                have: self.buffer.len(),
                need,
            });
        }
        let mut batch = std::mem::take(&mut self.scratch.batch);
        let mut targets = std::mem::take(&mut self.scratch.targets);
        self.buffer
            .sample_into(self.config.batch_size, &mut self.replay_rng, &mut batch);
        minibatch_targets(
            &batch,
            &self.target,
            self.config.gamma,
            &mut self.scratch.target_acts,
            &mut targets,
        );
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = accumulate_gradient(
            &self.policy,
            &batch,
            &targets,
            &mut self.grad,
            &mut self.scratch,
        );
        self.scratch.batch = batch;
        self.scratch.targets = targets;
        self.optimizer.step(self.policy.params_mut(), &self.grad);
        self.train_steps += 1;
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.policy);
        self.syncs += 1;
    }

    /// Counts one sub-step; syncs the target network when the count reaches
    /// a multiple of the sync period. Returns whether a sync happened.
    pub fn tick(&mut self) -> bool {
        self.substeps += 1;
        if self.substeps % self.config.sync_period == 0 {
            self.sync_target();
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn agent(input: usize, config: AgentConfig) -> DqnAgent {
        DqnAgent::new(
            input,
            config,
            &mut stream(1, Stream::WeightInit(0)),
            stream(1, Stream::Exploration(0)),
            stream(1, Stream::Replay(0)),
        )
        .unwrap()
    }

    fn sample(state: Vec<f64>, action: usize, reward: f64, terminal: bool) -> Experience {
        Experience {
            next_state: state.iter().map(|v| 1.0 - v).collect(),
            state,
            action,
            reward,
            terminal,
            next_legal: ActionMask::ALL,
        }
    }

    #[test]
    fn greedy_respects_mask_and_ties() {
        let mut q = [0.0; 10];
        q[6] = 5.0;
        assert_eq!(greedy_action(&q, ActionMask::ALL), Some(6));
        let mut mask = ActionMask::ALL;
        mask = ActionMask::from_bits(mask.bits() & !(1 << 6));
        q[2] = 4.0;
        assert_eq!(greedy_action(&q, mask), Some(2));
        assert_eq!(greedy_action(&[1.0; 10], ActionMask::ALL), Some(0));
        assert_eq!(greedy_action(&q, ActionMask::EMPTY), None);
    }

    #[test]
    fn exploitation_picks_argmax() {
        let mut a = agent(3, AgentConfig::default());
        let n = a.policy().params().len();
        let mut params = vec![0.0; n];
        // output bias of action 6
        params[n - 10 + 6] = 5.0;
        a.policy_mut().params_mut().copy_from_slice(&params);
        assert_eq!(
            a.select_action(&[0.1, 0.2, 0.3], 0.0, ActionMask::ALL)
                .unwrap(),
            6
        );
        assert!(matches!(
            a.select_action(&[0.1, 0.2, 0.3], 0.0, ActionMask::EMPTY),
            Err(Error::NoLegalAction)
        ));
    }

    #[test]
    fn terminal_and_zero_gamma_targets() {
        let mut rng = stream(3, Stream::WeightInit(1));
        let target = Mlp::new(&[2, 4, 10], &mut rng).unwrap();
        let batch = vec![
            sample(vec![0.3, 0.4], 1, 6.0, true),
            sample(vec![0.9, 0.1], 2, -1.0, false),
        ];
        let y = td_targets(&batch, &target, 0.0).unwrap();
        assert_eq!(y, vec![6.0, -1.0]);
        let y = td_targets(&batch, &target, 0.99).unwrap();
        assert_eq!(y[0], 6.0);
        let zero = Mlp::zeros(&[2, 4, 10]).unwrap();
        assert_eq!(td_targets(&batch, &zero, 0.99).unwrap(), vec![6.0, -1.0]);
    }

    #[test]
    fn train_step_requires_threshold() {
        let cfg = AgentConfig {
            batch_size: 4,
            psi: 2,
            buffer_capacity: 100,
            ..AgentConfig::default()
        };
        let mut a = agent(2, cfg);
        for i in 0..7 {
            a.remember(&sample(vec![0.1 * i as f64, 0.5], i % 10, 1.0, false));
        }
        assert!(matches!(
            a.train_step(),
            Err(Error::BelowLearningThreshold { have: 7, need: 8 })
        ));
        a.remember(&sample(vec![0.0, 0.0], 0, 1.0, false));
        let before = a.target().clone();
        a.train_step().unwrap();
        assert_eq!(a.target(), &before);
        assert_ne!(a.policy(), &before);
        assert_eq!(a.train_steps(), 1);
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let mut rng = stream(5, Stream::WeightInit(0));
        let net = Mlp::new(&[3, 5, 5, 10], &mut rng).unwrap();
        let batch: Vec<Experience> = (0..4)
            .map(|i| sample(vec![0.2 * i as f64, 0.5, 0.1], i, 0.0, true))
            .collect();
        let targets: Vec<f64> = batch
            .iter()
            .map(|e| net.forward(&e.state).unwrap()[e.action])
            .collect();
        let (loss, grad) = batch_loss_and_gradient(&net, &batch, &targets).unwrap();
        assert!(loss < 1e-24);
        assert!(grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-12);
    }

    #[test]
    fn sync_schedule() {
        let cfg = AgentConfig {
            sync_period: 8000,
            ..AgentConfig::default()
        };
        let mut a = agent(2, cfg);
        let mut synced_at = Vec::new();
        for step in 1..=24_000u64 {
            if a.tick() {
                synced_at.push(step);
            }
        }
        assert_eq!(synced_at, vec![8000, 16000, 24000]);
    }

    #[test]
    fn target_independent_between_syncs() {
        let mut a = agent(2, AgentConfig::default());
        let x = [0.3, 0.7];
        let before = a.target().forward(&x).unwrap();
        a.policy_mut().params_mut()[0] += 1.0;
        assert_eq!(a.target().forward(&x).unwrap(), before);
        a.sync_target();
        assert_eq!(
            a.target().forward(&x).unwrap(),
            a.policy().forward(&x).unwrap()
        );
    }
}
