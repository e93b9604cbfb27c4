//! Desk-scale agentic RL environment for a simulated PC-parts support desk.

pub mod bundle;
pub mod clock;
pub mod gen;
pub mod grpo;
pub mod metrics;
pub mod rollout;
pub mod rubric;
pub mod server;
pub mod suite;
pub mod tools;
pub mod world;
