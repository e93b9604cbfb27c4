//! The policy slot of the rollout loop and the scripted policies.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::template;
use super::trajectory::Turn;
use crate::rubric::{OraclePlan, Task};
use crate::tools::{Catalog, ParamDef, ParamType, ToolDefinition, ToolStatus};
use crate::world::schema::Schema;

/// What the policy sees before each action.
pub struct Observation<'a> {
    pub system_prompt: &'a str,
    pub prompt: &'a str,
    pub history: &'a [Turn],
    pub catalog: &'a Catalog,
}

impl Observation<'_> {
    /// Payloads of tool results so far, in call order (errors included).
    pub fn payloads(&self) -> Vec<Value> {
        self.history
            .iter()
            .filter_map(|t| match t {
                Turn::Tool(r) => Some(r.payload.clone()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Call { tool: String, arguments: Value },
    Respond(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("agent fault: {0}")]
pub struct AgentFault(pub String);

pub trait AgentPolicy: Send {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentFault>;
}

/// Builds a fresh policy per episode. Scripted policies are pure functions of `(task, seed)`.
pub trait AgentFactory: Sync {
    fn name(&self) -> String;
    fn make(&self, task: &Task, seed: u64) -> Box<dyn AgentPolicy>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentKind {
    Oracle,
    Random,
    Greedy,
    Silent,
    /// Oracle that skips each plan step, and blanks its answer, with probability `eps`.
    NoisyOracle {
        eps: f64,
    },
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::Oracle => f.write_str("oracle"),
            AgentKind::Random => f.write_str("random"),
            AgentKind::Greedy => f.write_str("greedy"),
            AgentKind::Silent => f.write_str("silent"),
            AgentKind::NoisyOracle { eps } => write!(f, "noisy:{eps}"),
        }
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "oracle" => AgentKind::Oracle,
            "random" => AgentKind::Random,
            "greedy" | "greedy_keyword" | "greedy-keyword" => AgentKind::Greedy,
            "silent" => AgentKind::Silent,
            other => match other.strip_prefix("noisy:").map(str::parse::<f64>) {
                Some(Ok(eps)) if (0.0..=1.0).contains(&eps) => AgentKind::NoisyOracle { eps },
                _ => {
                    return Err(format!(
                        "unknown agent `{other}` (oracle, random, greedy, silent, noisy:EPS)"
                    ))
                }
            },
        })
    }
}

impl AgentFactory for AgentKind {
    fn name(&self) -> String {
        self.to_string()
    }

    fn make(&self, task: &Task, seed: u64) -> Box<dyn AgentPolicy> {
        match *self {
            AgentKind::Oracle => Box::new(OracleAgent::new(task.oracle_plan.clone())),
            AgentKind::Random => Box::new(RandomAgent::new(seed)),
            AgentKind::Greedy => Box::new(GreedyKeywordAgent::default()),
            AgentKind::Silent => Box::new(SilentAgent),
            AgentKind::NoisyOracle { eps } => {
                Box::new(NoisyOracle::new(task.oracle_plan.clone(), eps, seed))
            }
        }
    }
}

pub struct SilentAgent;

impl AgentPolicy for SilentAgent {
    fn act(&mut self, _: &Observation<'_>) -> Result<Action, AgentFault> {
        Ok(Action::Respond(String::new()))
    }
}

/// Replays the task's oracle plan, filling templates from earlier results.
pub struct OracleAgent {
    plan: Option<OraclePlan>,
    next: usize,
}

impl OracleAgent {
    pub fn new(plan: Option<OraclePlan>) -> Self {
        Self { plan, next: 0 }
    }
}

impl AgentPolicy for OracleAgent {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentFault> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| AgentFault("task has no oracle plan".into()))?;
        let payloads = obs.payloads();
        if let Some(call) = plan.calls.get(self.next) {
            self.next += 1;
            let arguments = template::render(&call.arguments, &payloads).map_err(AgentFault)?;
            return Ok(Action::Call {
                tool: call.tool.clone(),
                arguments,
            });
        }
        match template::render_str(&plan.final_response, &payloads).map_err(AgentFault)? {
            Value::String(s) => Ok(Action::Respond(s)),
            other => Ok(Action::Respond(other.to_string())),
        }
    }
}

pub struct NoisyOracle {
    plan: Option<OraclePlan>,
    eps: f64,
    rng: ChaCha8Rng,
    next: usize,
    /// Result index for each executed plan step; skipped steps hold `None`.
    executed: Vec<Option<usize>>,
    calls_made: usize,
}

impl NoisyOracle {
    pub fn new(plan: Option<OraclePlan>, eps: f64, seed: u64) -> Self {
        Self {
            plan,
            eps,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x006e_6f69_7379),
            next: 0,
            executed: Vec::new(),
            calls_made: 0,
        }
    }

    /// Payload list indexed by plan step; skipped steps read as `null`.
    fn step_payloads(&self, obs: &Observation<'_>) -> Vec<Value> {
        let all = obs.payloads();
        self.executed
            .iter()
            .map(|slot| {
                slot.and_then(|i| all.get(i).cloned())
                    .unwrap_or(Value::Null)
            })
            .collect()
    }
}

impl AgentPolicy for NoisyOracle {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentFault> {
        let plan = self
            .plan
            .clone()
            .ok_or_else(|| AgentFault("task has no oracle plan".into()))?;
        while let Some(call) = plan.calls.get(self.next) {
            self.next += 1;
            if self.rng.gen_bool(self.eps) {
                self.executed.push(None);
                continue;
            }
            let payloads = self.step_payloads(obs);
            match template::render(&call.arguments, &payloads) {
                Ok(arguments) => {
                    self.executed.push(Some(self.calls_made));
                    self.calls_made += 1;
                    return Ok(Action::Call {
                        tool: call.tool.clone(),
                        arguments,
                    });
                }
                Err(_) => self.executed.push(None),
            }
        }
        if self.rng.gen_bool(self.eps) {
            return Ok(Action::Respond(String::new()));
        }
        let payloads = self.step_payloads(obs);
        Ok(Action::Respond(
            match template::render_str(&plan.final_response, &payloads) {
                Ok(Value::String(s)) => s,
                Ok(other) => other.to_string(),
                Err(_) => String::new(),
            },
        ))
    }
}

const FILLER: [&str; 8] = [
    "order", "refund", "return", "gpu", "warranty", "shipping", "help", "promo",
];

/// Uniform over tools, arguments drawn to satisfy each parameter schema.
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn id_for(&mut self, p: &ParamDef) -> Option<String> {
        let kind = p.entity?;
        let prefix = &Schema::builtin().kind(kind).id_prefix;
        Some(format!("{prefix}-{:05}", self.rng.gen_range(1..=30)))
    }

    fn value_for(&mut self, name: &str, p: &ParamDef) -> Value {
        if let Some(allowed) = &p.allowed {
            return json!(allowed[self.rng.gen_range(0..allowed.len())]);
        }
        match p.ty {
            ParamType::String => match self.id_for(p) {
                Some(id) => json!(id),
                None => json!(FILLER[self.rng.gen_range(0..FILLER.len())]),
            },
            ParamType::StringList => {
                let n = self.rng.gen_range(1..=4);
                json!((0..n)
                    .map(|_| self.id_for(p).unwrap_or_else(|| "x".into()))
                    .collect::<Vec<_>>())
            }
            ParamType::Integer => {
                let lo = p.minimum.unwrap_or(0);
                let hi = p.maximum.unwrap_or(match name {
                    "limit" => 10,
                    "offset" => 30,
                    _ => lo + 200_000,
                });
                json!(self.rng.gen_range(lo..=hi.max(lo)))
            }
            ParamType::Number => json!(self.rng.gen_range(0.0..1000.0)),
            ParamType::Boolean => json!(self.rng.gen_bool(0.5)),
            ParamType::Date => json!(format!(
                "2025-{:02}-{:02}",
                self.rng.gen_range(1..=12),
                self.rng.gen_range(1..=28)
            )),
        }
    }

    fn arguments_for(&mut self, def: &ToolDefinition) -> Value {
        let mut args = Map::new();
        for (name, p) in &def.params {
            if p.required || self.rng.gen_bool(0.5) {
                let v = self.value_for(name, p);
                args.insert(name.clone(), v);
            }
        }
        Value::Object(args)
    }
}

impl AgentPolicy for RandomAgent {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentFault> {
        if self.rng.gen_bool(0.2) {
            let n = self.rng.gen_range(3..10);
            let words: Vec<&str> = (0..n)
                .map(|_| FILLER[self.rng.gen_range(0..FILLER.len())])
                .collect();
            return Ok(Action::Respond(words.join(" ")));
        }
        let tools = &obs.catalog.tools;
        let def = &tools[self.rng.gen_range(0..tools.len())];
        Ok(Action::Call {
            tool: def.name.clone(),
            arguments: self.arguments_for(def),
        })
    }
}

const STOPWORDS: [&str; 40] = [
    "the", "a", "an", "and", "or", "of", "to", "for", "in", "on", "my", "me", "i", "is", "it",
    "with", "what", "which", "can", "you", "please", "our", "their", "was", "are", "do", "does",
    "how", "this", "that", "from", "customer", "help", "need", "want", "has", "have", "be", "we",
    "they",
];

/// Searches the catalog with the first content word of the prompt, takes the
/// first page at face value and answers from it.
#[derive(Default)]
pub struct GreedyKeywordAgent {
    step: usize,
}

pub fn first_keyword(prompt: &str) -> String {
    prompt
        .split(|c: char| !c.is_alphanumeric() && c != '-')
        .map(str::to_lowercase)
        .find(|w| {
            w.len() > 2
                && !STOPWORDS.contains(&w.as_str())
                && !w.chars().any(|c| c.is_ascii_digit())
        })
        .unwrap_or_else(|| "order".into())
}

impl AgentPolicy for GreedyKeywordAgent {
    fn act(&mut self, obs: &Observation<'_>) -> Result<Action, AgentFault> {
        let kw = first_keyword(obs.prompt);
        let plan = [
            ("searchKnowledgeBase", json!({"query": kw})),
            ("searchProducts", json!({"query": kw})),
            ("searchOrders", json!({})),
        ];
        if let Some((tool, arguments)) = plan.get(self.step) {
            self.step += 1;
            return Ok(Action::Call {
                tool: tool.to_string(),
                arguments: arguments.clone(),
            });
        }
        let mut lines = Vec::new();
        for t in obs.history {
            if let Turn::Tool(r) = t {
                if r.status != ToolStatus::Ok {
                    continue;
                }
                for item in r.payload["results"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .take(3)
                {
                    let label = ["title", "name", "status"]
                        .iter()
                        .find_map(|k| item[*k].as_str())
                        .unwrap_or("");
                    lines.push(format!("{} {label}", item["id"].as_str().unwrap_or("?")));
                }
            }
        }
        Ok(Action::Respond(if lines.is_empty() {
            format!("I could not find anything about {kw}.")
        } else {
            format!("Here is what I found for {kw}: {}.", lines.join("; "))
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_kind_parses() {
        assert_eq!("oracle".parse::<AgentKind>().unwrap(), AgentKind::Oracle);
        assert_eq!(
            "noisy:0.25".parse::<AgentKind>().unwrap(),
            AgentKind::NoisyOracle { eps: 0.25 }
        );
        assert!("noisy:2".parse::<AgentKind>().is_err());
        assert!("smart".parse::<AgentKind>().is_err());
    }

    #[test]
    fn keyword_skips_stopwords_and_ids() {
        assert_eq!(
            first_keyword("What is the warranty on ORD-00012?"),
            "warranty"
        );
        assert_eq!(first_keyword("!!"), "order");
    }

    #[test]
    fn random_arguments_always_validate() {
        let c = Catalog::builtin();
        let mut a = RandomAgent::new(7);
        for _ in 0..500 {
            for def in &c.tools {
                let args = a.arguments_for(def);
                crate::tools::validate_args(def, args.as_object().unwrap()).unwrap();
            }
        }
    }
}
