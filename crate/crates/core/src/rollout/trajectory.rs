use serde::{Deserialize, Serialize};

use crate::tools::{ToolCall, ToolResult};

/// What an agent turn carries: a tool call or a message to the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentContent {
    Call(ToolCall),
    Message(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", content = "content", rename_all = "lowercase")]
pub enum Turn {
    System(String),
    User(String),
    Agent(AgentContent),
    Tool(ToolResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub rollout_idx: usize,
    pub seed: u64,
    pub turns: Vec<Turn>,
    pub final_response: String,
    /// Agent actions taken, tool calls and the final message alike.
    pub turn_count: usize,
    /// Set when the policy failed mid-episode; the episode is still scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_fault: Option<String>,
}

impl Trajectory {
    pub fn new(task_id: &str, rollout_idx: usize, seed: u64) -> Self {
        Self {
            task_id: task_id.to_string(),
            rollout_idx,
            seed,
            turns: Vec::new(),
            final_response: String::new(),
            turn_count: 0,
            agent_fault: None,
        }
    }

    /// Tool calls paired with their results, in order.
    pub fn tool_exchanges(&self) -> Vec<(&ToolCall, Option<&ToolResult>)> {
        let mut out = Vec::new();
        for (i, t) in self.turns.iter().enumerate() {
            if let Turn::Agent(AgentContent::Call(c)) = t {
                let r = match self.turns.get(i + 1) {
                    Some(Turn::Tool(r)) if r.call_id == c.call_id => Some(r),
                    _ => None,
                };
                out.push((c, r));
            }
        }
        out
    }

    pub fn tool_calls(&self) -> impl Iterator<Item = &ToolCall> {
        self.turns.iter().filter_map(|t| match t {
            Turn::Agent(AgentContent::Call(c)) => Some(c),
            _ => None,
        })
    }

    /// Every call turn is directly followed by the result with its call id.
    pub fn is_well_formed(&self) -> bool {
        self.tool_exchanges().iter().all(|(_, r)| r.is_some())
            && self.turns.iter().enumerate().all(|(i, t)| match t {
                Turn::Tool(r) => matches!(
                    i.checked_sub(1).and_then(|j| self.turns.get(j)),
                    Some(Turn::Agent(AgentContent::Call(c))) if c.call_id == r.call_id
                ),
                _ => true,
            })
    }
}
