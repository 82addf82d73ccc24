//! Trajectory-design agents: TD3 with clipped double-Q, target policy
//! smoothing and delayed policy updates, plus the single-critic DDPG
//! baseline sharing the same plumbing.

mod buffer;
mod td3;

pub use buffer::{ReplayBuffer, Transition};
pub use td3::{
    physical_action, rollout_deterministic, rollout_random, target_value, train, train_from,
    AgentError, Algorithm, EpisodeStat, Td3Agent, Td3Hyper, TrainResult, UpdateStats,
};
