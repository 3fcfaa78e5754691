//! Per-drone deep Q-learning: state encoding, the Q-network, Adam, experience
//! replay and the agent that ties them together.

mod adam;
mod agent;
mod features;
mod mlp;
mod replay;

pub use adam::Adam;
pub use agent::{
    batch_loss, batch_loss_and_gradient, epsilon_greedy, greedy_action, td_targets, AgentConfig,
    DqnAgent,
};
pub use features::{encode_state, feature_dim};
pub use mlp::{Gradient, Mlp};
pub use replay::{Experience, Minibatch, ReplayBuffer};
