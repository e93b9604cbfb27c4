//! Episode loop, scripted policies, group rollouts and the trajectory buffer.

mod agent;
mod buffer;
mod episode;
pub mod template;
mod trajectory;

pub use agent::{
    first_keyword, Action, AgentFactory, AgentFault, AgentKind, AgentPolicy, GreedyKeywordAgent,
    NoisyOracle, Observation, OracleAgent, RandomAgent, SilentAgent,
};
pub use buffer::{
    append_buffer, append_records, read_buffer, BufferError, BufferRecord, RewardBlock,
};
pub use episode::{
    replay, run_episode, run_group, run_group_from, session_id, Environment, Episode, EpisodeError,
    ReplayError, Replayed, RolloutGroup,
};
pub use trajectory::{AgentContent, Trajectory, Turn};
