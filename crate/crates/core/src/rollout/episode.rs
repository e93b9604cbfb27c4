use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::{Map, Value};

use super::agent::{Action, AgentFactory, Observation};
use super::trajectory::{AgentContent, Trajectory, Turn};
use crate::rubric::{evaluate, Judge, JudgeUnavailable, RewardReport, Task};
use crate::tools::{invoke_tool, Catalog, ToolCall, ToolResult, ToolStatus};
use crate::world::{fork_session_with_id, EpisodeSession, WorldState, WorldView};

/// Everything an episode needs besides the task and the policy.
pub struct Environment {
    pub world: Arc<WorldState>,
    pub catalog: Catalog,
    /// System prompt text by reference name, e.g. `support-agent.md`.
    pub system_prompts: BTreeMap<String, String>,
}

impl Environment {
    pub fn new(world: Arc<WorldState>, system_prompts: BTreeMap<String, String>) -> Self {
        Self {
            world,
            catalog: Catalog::builtin().clone(),
            system_prompts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EpisodeError {
    #[error("protocol fault in {task_id}#{rollout_idx}: {message}")]
    Protocol {
        task_id: String,
        rollout_idx: usize,
        message: String,
    },
    #[error("task {task_id} references unknown system prompt {reference}")]
    MissingSystemPrompt { task_id: String, reference: String },
    #[error(transparent)]
    Judge(#[from] JudgeUnavailable),
}

pub struct Episode {
    pub trajectory: Trajectory,
    pub report: RewardReport,
    pub world_digest: String,
    pub session_digest: String,
    pub session: EpisodeSession,
}

/// Session ids are derived from the task and rollout so traces are reproducible.
pub fn session_id(task_id: &str, rollout_idx: usize) -> String {
    format!("{task_id}/{rollout_idx}")
}

fn call_id(n: usize) -> String {
    format!("call-{n:03}")
}

pub fn run_episode(
    env: &Environment,
    task: &Task,
    agent: &dyn AgentFactory,
    rollout_idx: usize,
    seed: u64,
    judge: Option<&dyn Judge>,
) -> Result<Episode, EpisodeError> {
    let system_prompt = env
        .system_prompts
        .get(&task.system_prompt_ref)
        .ok_or_else(|| EpisodeError::MissingSystemPrompt {
            task_id: task.id.clone(),
            reference: task.system_prompt_ref.clone(),
        })?;
    let mut session = fork_session_with_id(&env.world, session_id(&task.id, rollout_idx));
    let mut traj = Trajectory::new(&task.id, rollout_idx, seed);
    traj.turns.push(Turn::System(system_prompt.clone()));
    traj.turns.push(Turn::User(task.prompt.clone()));
    let mut policy = agent.make(task, seed);

    while traj.turn_count < task.max_turns {
        let obs = Observation {
            system_prompt,
            prompt: &task.prompt,
            history: &traj.turns,
            catalog: &env.catalog,
        };
        let action = match policy.act(&obs) {
            Ok(a) => a,
            Err(fault) => {
                traj.agent_fault = Some(fault.0);
                break;
            }
        };
        match action {
            Action::Respond(text) => {
                traj.turns
                    .push(Turn::Agent(AgentContent::Message(text.clone())));
                traj.final_response = text;
                traj.turn_count += 1;
                break;
            }
            Action::Call { tool, arguments } => {
                let arguments = match arguments {
                    Value::Object(m) => m,
                    Value::Null => Map::new(),
                    other => {
                        traj.agent_fault =
                            Some(format!("tool arguments must be an object, got {other}"));
                        break;
                    }
                };
                let call = ToolCall {
                    session_id: session.id().to_string(),
                    tool,
                    arguments,
                    call_id: call_id(traj.turn_count),
                };
                let result = invoke_tool(&env.catalog, &mut session, &call);
                if result.status == ToolStatus::Internal {
                    return Err(EpisodeError::Protocol {
                        task_id: task.id.clone(),
                        rollout_idx,
                        message: format!("{} failed internally: {}", call.tool, result.payload),
                    });
                }
                traj.turns.push(Turn::Agent(AgentContent::Call(call)));
                traj.turns.push(Turn::Tool(result));
                traj.turn_count += 1;
            }
        }
    }
    let report = evaluate(&task.id, &task.rubric, &traj, &session, judge)?;
    Ok(Episode {
        trajectory: traj,
        report,
        world_digest: env.world.digest().to_string(),
        session_digest: session.digest(),
        session,
    })
}

pub struct RolloutGroup {
    pub task_id: String,
    /// Indexed by rollout; a protocol fault fails only its own slot.
    pub episodes: Vec<Result<Episode, EpisodeError>>,
}

impl RolloutGroup {
    pub fn group_size(&self) -> usize {
        self.episodes.len()
    }

    /// Rewards in rollout order, if every rollout completed.
    pub fn rewards(&self) -> Result<Vec<num_rational::Ratio<u64>>, &EpisodeError> {
        self.episodes
            .iter()
            .map(|e| e.as_ref().map(|ep| ep.report.r()))
            .collect()
    }
}

/// Runs `g` episodes with seeds `base_seed + i` in parallel; order follows the rollout index.
pub fn run_group(
    env: &Environment,
    task: &Task,
    agent: &dyn AgentFactory,
    g: usize,
    base_seed: u64,
    judge: Option<&dyn Judge>,
) -> RolloutGroup {
    run_group_from(env, task, agent, 0..g, base_seed, judge)
}

/// Runs rollout indices `idx` in parallel, episode `i` with seed `base_seed + i`.
pub fn run_group_from(
    env: &Environment,
    task: &Task,
    agent: &dyn AgentFactory,
    idx: std::ops::Range<usize>,
    base_seed: u64,
    judge: Option<&dyn Judge>,
) -> RolloutGroup {
    assert!(!idx.is_empty(), "group size must be at least 1");
    let episodes = idx
        .into_par_iter()
        .map(|i| run_episode(env, task, agent, i, base_seed.wrapping_add(i as u64), judge))
        .collect();
    RolloutGroup {
        task_id: task.id.clone(),
        episodes,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("replay diverged at {call_id}: recorded {recorded}, replayed {replayed}")]
    Divergence {
        call_id: String,
        recorded: Box<Value>,
        replayed: Box<Value>,
    },
    #[error("malformed trajectory: {0}")]
    Malformed(String),
    #[error(transparent)]
    Judge(#[from] JudgeUnavailable),
}

pub struct Replayed {
    pub report: RewardReport,
    pub session_digest: String,
    pub session: EpisodeSession,
}

/// Re-executes the recorded calls on a fresh fork, checks every result
/// against the record, then re-scores the trajectory.
pub fn replay(
    env: &Environment,
    task: &Task,
    traj: &Trajectory,
    judge: Option<&dyn Judge>,
) -> Result<Replayed, ReplayError> {
    if !traj.is_well_formed() {
        return Err(ReplayError::Malformed(
            "tool call without matching result".into(),
        ));
    }
    let mut session = fork_session_with_id(&env.world, session_id(&task.id, traj.rollout_idx));
    for (call, recorded) in traj.tool_exchanges() {
        let recorded: &ToolResult = recorded.expect("checked well-formed");
        let replayed = invoke_tool(&env.catalog, &mut session, call);
        if &replayed != recorded {
            return Err(ReplayError::Divergence {
                call_id: call.call_id.clone(),
                recorded: Box::new(serde_json::to_value(recorded).unwrap_or_default()),
                replayed: Box::new(serde_json::to_value(&replayed).unwrap_or_default()),
            });
        }
    }
    let report = evaluate(&task.id, &task.rubric, traj, &session, judge)?;
    Ok(Replayed {
        report,
        session_digest: session.digest(),
        session,
    })
}
