use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::world::EntityKind;

pub const DEFAULT_MAX_TURNS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskCategory {
    InformationRetrieval,
    Communication,
    Reasoning,
    MultiStepWorkflow,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 4] = [
        TaskCategory::InformationRetrieval,
        TaskCategory::Communication,
        TaskCategory::Reasoning,
        TaskCategory::MultiStepWorkflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskCategory::InformationRetrieval => "information-retrieval",
            TaskCategory::Communication => "communication",
            TaskCategory::Reasoning => "reasoning",
            TaskCategory::MultiStepWorkflow => "multi-step-workflow",
        }
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    Completeness,
    Correctness,
    ConstraintSatisfaction,
    FormatCompliance,
}

fn default_tolerance() -> f64 {
    0.01
}

fn default_min_count() -> usize {
    1
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Entity attribute addressed by a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrRef {
    pub kind: EntityKind,
    pub id: String,
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "kebab-case")]
pub enum CheckSpec {
    /// Final response contains `fact` (case-insensitive, whitespace-normalized).
    ResponseContainsFact { fact: String },
    /// Exactly one of `equals`, `not_equals`, `contains` is set.
    EntityStateAssert {
        #[serde(flatten)]
        target: AttrRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        equals: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        not_equals: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contains: Option<Value>,
    },
    /// Some number in the response (after the first occurrence of `after`,
    /// when given) or the `entity` attribute is within `tolerance` of `expected`.
    NumericEquals {
        expected: f64,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        after: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entity: Option<AttrRef>,
    },
    /// Regex over the final response; with `forbid`, satisfied iff no match.
    PatternMatch {
        pattern: String,
        #[serde(default, skip_serializing_if = "is_false")]
        forbid: bool,
    },
    /// Count of calls to `tool` whose arguments include `arguments` lies in
    /// `[min_count, max_count]`. With `before`, the first such call precedes
    /// every call to that other tool.
    ToolWasCalled {
        tool: String,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        arguments: Map<String, Value>,
        #[serde(default = "default_min_count")]
        min_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_count: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        before: Option<String>,
        /// Only count calls whose result status was ok.
        #[serde(default, skip_serializing_if = "is_false")]
        succeeded: bool,
    },
    /// Delegated to a pluggable judge. `entities` selects the state snapshot it receives.
    ExternalJudge {
        criterion: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        entities: Vec<AttrTarget>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrTarget {
    pub kind: EntityKind,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricCriterion {
    pub id: String,
    pub kind: CriterionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub check: CheckSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCall {
    pub tool: String,
    #[serde(default)]
    pub arguments: Value,
}

/// Scripted solution. String values may embed `{{step.N/json/pointer}}`,
/// resolved against the payload of the N-th call's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub calls: Vec<PlanCall>,
    pub final_response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub category: TaskCategory,
    pub prompt: String,
    pub system_prompt_ref: String,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    pub rubric: Vec<RubricCriterion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_plan: Option<OraclePlan>,
}

fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("task file is not valid JSON: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("schema violation at `{field}`: {problem}")]
    Schema { field: String, problem: String },
}

fn schema(field: impl Into<String>, problem: impl Into<String>) -> TaskError {
    TaskError::Schema {
        field: field.into(),
        problem: problem.into(),
    }
}

const TASK_FIELDS: [&str; 7] = [
    "id",
    "category",
    "prompt",
    "system_prompt_ref",
    "max_turns",
    "rubric",
    "oracle_plan",
];

impl Task {
    /// Field-by-field validation so errors name the offending field or criterion.
    pub fn from_value(v: &Value) -> Result<Task, TaskError> {
        let obj = v
            .as_object()
            .ok_or_else(|| schema("$", "task must be an object"))?;
        if let Some(extra) = obj.keys().find(|k| !TASK_FIELDS.contains(&k.as_str())) {
            return Err(schema(extra.as_str(), "unknown field"));
        }
        let text = |name: &str| -> Result<String, TaskError> {
            match obj.get(name) {
                Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
                Some(Value::String(_)) => Err(schema(name, "must not be empty")),
                Some(_) => Err(schema(name, "must be a string")),
                None => Err(schema(name, "missing required field")),
            }
        };
        let id = text("id")?;
        let prompt = text("prompt")?;
        let system_prompt_ref = text("system_prompt_ref")?;
        let category = serde_json::from_value(obj.get("category").cloned().unwrap_or(Value::Null))
            .map_err(|_| schema("category", "expected one of information-retrieval, communication, reasoning, multi-step-workflow"))?;
        let max_turns = match obj.get("max_turns") {
            None => DEFAULT_MAX_TURNS,
            Some(m) => match m.as_u64() {
                Some(n) if n >= 1 => n as usize,
                _ => return Err(schema("max_turns", "must be a positive integer")),
            },
        };
        let raw = obj
            .get("rubric")
            .ok_or_else(|| schema("rubric", "missing required field"))?
            .as_array()
            .ok_or_else(|| schema("rubric", "must be a list"))?;
        if raw.is_empty() {
            return Err(schema("rubric", "must hold at least one criterion"));
        }
        let mut rubric = Vec::with_capacity(raw.len());
        let mut ids = BTreeSet::new();
        for (i, c) in raw.iter().enumerate() {
            let label = c
                .get("id")
                .and_then(Value::as_str)
                .map_or_else(|| format!("rubric[{i}]"), |s| format!("rubric[{i}] ({s})"));
            let crit: RubricCriterion = serde_json::from_value(c.clone())
                .map_err(|e| schema(label.clone(), e.to_string()))?;
            if let CheckSpec::EntityStateAssert {
                equals,
                not_equals,
                contains,
                ..
            } = &crit.check
            {
                let n = [equals.is_some(), not_equals.is_some(), contains.is_some()]
                    .iter()
                    .filter(|b| **b)
                    .count();
                if n != 1 {
                    return Err(schema(
                        label,
                        "entity-state-assert needs exactly one of equals, not_equals, contains",
                    ));
                }
            }
            if let CheckSpec::PatternMatch { pattern, .. } = &crit.check {
                regex::Regex::new(pattern)
                    .map_err(|e| schema(label.clone(), format!("bad pattern: {e}")))?;
            }
            if !ids.insert(crit.id.clone()) {
                return Err(schema(label, "duplicate criterion id"));
            }
            rubric.push(crit);
        }
        let oracle_plan = match obj.get("oracle_plan") {
            None | Some(Value::Null) => None,
            Some(p) => Some(
                serde_json::from_value(p.clone())
                    .map_err(|e| schema("oracle_plan", e.to_string()))?,
            ),
        };
        Ok(Task {
            id,
            category,
            prompt,
            system_prompt_ref,
            max_turns,
            rubric,
            oracle_plan,
        })
    }

    pub fn from_json(text: &str) -> Result<Task, TaskError> {
        let v: Value = serde_json::from_str(text).map_err(TaskError::Parse)?;
        Task::from_value(&v)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("task serializes")
    }
}

pub fn load_task(path: &Path) -> Result<Task, TaskError> {
    let text = std::fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Task::from_json(&text)
}

/// Loads every `*.json` in `dir`, sorted by file name.
pub fn load_tasks(dir: &Path) -> Result<Vec<Task>, (String, TaskError)> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|source| {
            let path = dir.display().to_string();
            (path.clone(), TaskError::Io { path, source })
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_task(p).map_err(|e| (p.display().to_string(), e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Value {
        json!({
            "id": "t1",
            "category": "information-retrieval",
            "prompt": "Which carrier shipped ORD-00001?",
            "system_prompt_ref": "support-agent.md",
            "rubric": [
                {"id": "carrier", "kind": "correctness",
                 "check": {"type": "response-contains-fact", "params": {"fact": "USPS"}}},
                {"id": "looked-up", "kind": "completeness",
                 "check": {"type": "tool-was-called", "params": {"tool": "getShipment"}}}
            ]
        })
    }

    #[test]
    fn parses_with_defaults() {
        let t = Task::from_value(&sample()).unwrap();
        assert_eq!(t.rubric.len(), 2);
        assert_eq!(t.max_turns, DEFAULT_MAX_TURNS);
        let back = Task::from_json(&t.to_json_pretty()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn empty_rubric_is_schema_violation() {
        let mut v = sample();
        v["rubric"] = json!([]);
        assert!(
            matches!(Task::from_value(&v), Err(TaskError::Schema { field, .. }) if field == "rubric")
        );
    }

    #[test]
    fn unknown_check_type_names_criterion() {
        let mut v = sample();
        v["rubric"][1]["check"]["type"] = json!("vibes");
        match Task::from_value(&v) {
            Err(TaskError::Schema { field, .. }) => assert!(field.contains("looked-up"), "{field}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_bad_assert_rejected() {
        let mut v = sample();
        v["rubric"][1]["id"] = json!("carrier");
        assert!(Task::from_value(&v).is_err());
        let mut v = sample();
        v["rubric"][0]["check"] = json!({"type": "entity-state-assert",
            "params": {"kind": "order", "id": "ORD-00001", "attribute": "status"}});
        assert!(Task::from_value(&v).is_err());
    }

    #[test]
    fn malformed_json_is_parse_failure() {
        assert!(matches!(Task::from_json("{"), Err(TaskError::Parse(_))));
    }
}
