//! Rubric bandit: a one-call task whose three rubric criteria reward the
//! right tool, then the right argument for it, then the right answer. Each
//! decision is a four-way choice, so a uniform policy scores 3/16 on average.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::policy::{Sample, ToyPolicy};
use crate::rollout::{Action, AgentFactory, AgentFault, AgentPolicy, Observation, Trajectory};
use crate::rubric::{
    CheckSpec, CriterionKind, RubricCriterion, Task, TaskCategory, DEFAULT_MAX_TURNS,
};
use crate::suite::SYSTEM_PROMPT_REF;
use crate::world::{EntityKind, WorldState, WorldView};

/// Decision points in episode order.
pub const BANDIT_STATES: [&str; 3] = ["tool", "argument", "response"];

const TOOLS: [&str; 4] = ["getOrder", "searchTickets", "getShipment", "getCustomer"];
const CORRECT_TOOL: &str = "getShipment";

#[derive(Debug, Clone, PartialEq)]
pub struct BanditFamily {
    pub task: Task,
    pub tools: Vec<String>,
    /// `order_id` values on offer.
    pub arguments: Vec<String>,
    pub responses: Vec<String>,
}

impl BanditFamily {
    /// Built from the first four orders with a tracking number; the target is
    /// the first of them that is still in transit, or the first overall.
    pub fn rubric_bandit(world: &WorldState) -> Self {
        let mut shipped: Vec<(String, String, String)> = world
            .entities_of(EntityKind::ShippingRecord)
            .into_iter()
            .filter_map(|s| {
                Some((
                    s.str_attr("order_id")?.to_string(),
                    s.str_attr("tracking_number")?.to_string(),
                    s.str_attr("status").unwrap_or("").to_string(),
                ))
            })
            .collect();
        shipped.sort();
        shipped.truncate(4);
        assert_eq!(shipped.len(), 4, "world needs four shipped orders");
        let target = shipped
            .iter()
            .position(|s| s.2 == "in_transit")
            .unwrap_or(0);
        let (order, tracking) = (shipped[target].0.clone(), shipped[target].1.clone());
        let arguments: Vec<String> = shipped.iter().map(|s| s.0.clone()).collect();
        let responses: Vec<String> = shipped
            .iter()
            .map(|s| format!("Your tracking number is {}.", s.1))
            .collect();

        let called =
            |id: &str, kind, description: &str, arguments: Map<String, Value>| RubricCriterion {
                id: id.to_string(),
                kind,
                description: Some(description.to_string()),
                check: CheckSpec::ToolWasCalled {
                    tool: CORRECT_TOOL.to_string(),
                    arguments,
                    min_count: 1,
                    max_count: None,
                    before: None,
                    succeeded: true,
                },
            };
        let mut args = Map::new();
        args.insert("order_id".into(), json!(order));
        let task = Task {
            id: "bandit-tracking".into(),
            category: TaskCategory::InformationRetrieval,
            prompt: format!("What is the tracking number for order {order}?"),
            system_prompt_ref: SYSTEM_PROMPT_REF.to_string(),
            max_turns: DEFAULT_MAX_TURNS,
            rubric: vec![
                called(
                    "right-tool",
                    CriterionKind::Completeness,
                    "Looked up a shipment.",
                    Map::new(),
                ),
                called(
                    "right-argument",
                    CriterionKind::Correctness,
                    "Looked up the shipment of the asked order.",
                    args,
                ),
                RubricCriterion {
                    id: "right-answer".into(),
                    kind: CriterionKind::Correctness,
                    description: Some("States the tracking number.".into()),
                    check: CheckSpec::ResponseContainsFact { fact: tracking },
                },
            ],
            oracle_plan: None,
        };
        Self {
            task,
            tools: TOOLS.iter().map(|t| t.to_string()).collect(),
            arguments,
            responses,
        }
    }

    pub fn initial_policy(&self, temperature: f64) -> ToyPolicy {
        ToyPolicy::uniform(
            [
                (BANDIT_STATES[0], self.tools.len()),
                (BANDIT_STATES[1], self.arguments.len()),
                (BANDIT_STATES[2], self.responses.len()),
            ],
            temperature,
        )
    }

    /// The three `(state, action)` choices an episode made, read back from its trajectory.
    pub fn decode(&self, traj: &Trajectory) -> Option<[(&'static str, usize); 3]> {
        let call = traj.tool_calls().next()?;
        let tool = self.tools.iter().position(|t| *t == call.tool)?;
        let order = call.arguments.get("order_id")?.as_str()?;
        let arg = self.arguments.iter().position(|a| a == order)?;
        let resp = self
            .responses
            .iter()
            .position(|r| *r == traj.final_response)?;
        Some([
            (BANDIT_STATES[0], tool),
            (BANDIT_STATES[1], arg),
            (BANDIT_STATES[2], resp),
        ])
    }

    /// Samples for one episode, all sharing the episode's advantage.
    pub fn samples(
        &self,
        traj: &Trajectory,
        sampler: &ToyPolicy,
        advantage: f64,
    ) -> Option<Vec<Sample>> {
        let picks = self.decode(traj)?;
        picks
            .iter()
            .map(|&(state, action)| {
                Some(Sample {
                    state: state.to_string(),
                    action,
                    old_prob: sampler.prob(state, action)?,
                    advantage,
                })
            })
            .collect()
    }
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples the three choices from a frozen policy snapshot.
pub struct BanditAgent {
    pub family: Arc<BanditFamily>,
    pub policy: Arc<ToyPolicy>,
}

struct BanditEpisode {
    family: Arc<BanditFamily>,
    policy: Arc<ToyPolicy>,
    rng: ChaCha8Rng,
    called: bool,
}

impl AgentPolicy for BanditEpisode {
    fn act(&mut self, _: &Observation<'_>) -> Result<Action, AgentFault> {
        let mut pick = |state: &str| {
            let probs = self
                .policy
                .probs(state)
                .ok_or_else(|| AgentFault(format!("policy lacks state {state}")))?;
            Ok::<usize, AgentFault>(draw(&mut self.rng, &probs))
        };
        if !self.called {
            let (tool, arg) = (pick(BANDIT_STATES[0])?, pick(BANDIT_STATES[1])?);
            self.called = true;
            return Ok(Action::Call {
                tool: self.family.tools[tool].clone(),
                arguments: json!({"order_id": self.family.arguments[arg]}),
            });
        }
        let resp = pick(BANDIT_STATES[2])?;
        Ok(Action::Respond(self.family.responses[resp].clone()))
    }
}

impl AgentFactory for BanditAgent {
    fn name(&self) -> String {
        "bandit".into()
    }

    fn make(&self, _: &Task, seed: u64) -> Box<dyn AgentPolicy> {
        Box::new(BanditEpisode {
            family: Arc::clone(&self.family),
            policy: Arc::clone(&self.policy),
            rng: ChaCha8Rng::seed_from_u64(seed),
            called: false,
        })
    }
}
