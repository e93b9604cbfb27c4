use serde_json::{Map, Value};

use super::SYSTEM_PROMPT_REF;
use crate::rubric::{
    AttrRef, CheckSpec, CriterionKind, OraclePlan, PlanCall, RubricCriterion, Task, TaskCategory,
    DEFAULT_MAX_TURNS,
};
use crate::world::EntityKind;

use CriterionKind::{Completeness, ConstraintSatisfaction, Correctness};

pub(crate) enum Expect {
    Equals(Value),
    Contains(Value),
}

/// Builder for one task: rubric criteria plus the oracle's calls.
pub(crate) struct Draft {
    id: String,
    category: TaskCategory,
    prompt: String,
    rubric: Vec<RubricCriterion>,
    calls: Vec<PlanCall>,
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        Value::Null => Map::new(),
        other => panic!("tool arguments must be an object, got {other}"),
    }
}

impl Draft {
    pub fn new(id: &str, category: TaskCategory, prompt: impl Into<String>) -> Self {
        Self {
            id: id.to_string(),
            category,
            prompt: prompt.into(),
            rubric: Vec::new(),
            calls: Vec::new(),
        }
    }

    pub fn call(mut self, tool: &str, arguments: Value) -> Self {
        self.calls.push(PlanCall {
            tool: tool.to_string(),
            arguments,
        });
        self
    }

    pub fn criterion(
        mut self,
        id: &str,
        kind: CriterionKind,
        description: &str,
        check: CheckSpec,
    ) -> Self {
        self.rubric.push(RubricCriterion {
            id: id.to_string(),
            kind,
            description: Some(description.to_string()),
            check,
        });
        self
    }

    pub fn fact(self, id: &str, description: &str, fact: impl Into<String>) -> Self {
        self.criterion(
            id,
            Correctness,
            description,
            CheckSpec::ResponseContainsFact { fact: fact.into() },
        )
    }

    pub fn number(self, id: &str, description: &str, expected: f64) -> Self {
        self.criterion(
            id,
            Correctness,
            description,
            CheckSpec::NumericEquals {
                expected,
                tolerance: 0.01,
                after: None,
                entity: None,
            },
        )
    }

    pub fn matches(
        self,
        id: &str,
        kind: CriterionKind,
        description: &str,
        pattern: impl Into<String>,
    ) -> Self {
        self.criterion(
            id,
            kind,
            description,
            CheckSpec::PatternMatch {
                pattern: pattern.into(),
                forbid: false,
            },
        )
    }

    pub fn forbid(self, id: &str, description: &str, pattern: impl Into<String>) -> Self {
        self.criterion(
            id,
            ConstraintSatisfaction,
            description,
            CheckSpec::PatternMatch {
                pattern: pattern.into(),
                forbid: true,
            },
        )
    }

    fn tool_check(
        tool: &str,
        arguments: Value,
        min: usize,
        max: Option<usize>,
        before: Option<&str>,
    ) -> CheckSpec {
        CheckSpec::ToolWasCalled {
            tool: tool.to_string(),
            arguments: object(arguments),
            min_count: min,
            max_count: max,
            before: before.map(str::to_string),
            succeeded: true,
        }
    }

    /// At least one successful call whose arguments include `arguments`.
    pub fn called(self, id: &str, description: &str, tool: &str, arguments: Value) -> Self {
        self.criterion(
            id,
            Completeness,
            description,
            Self::tool_check(tool, arguments, 1, None, None),
        )
    }

    pub fn called_times(
        self,
        id: &str,
        description: &str,
        tool: &str,
        arguments: Value,
        min: usize,
    ) -> Self {
        self.criterion(
            id,
            Completeness,
            description,
            Self::tool_check(tool, arguments, min, None, None),
        )
    }

    /// No successful call to `tool` at all.
    pub fn never(self, id: &str, description: &str, tool: &str) -> Self {
        self.criterion(
            id,
            ConstraintSatisfaction,
            description,
            Self::tool_check(tool, Value::Null, 0, Some(0), None),
        )
    }

    /// `tool` succeeds before any call to `later`.
    pub fn before(self, id: &str, description: &str, tool: &str, later: &str) -> Self {
        self.criterion(
            id,
            ConstraintSatisfaction,
            description,
            Self::tool_check(tool, Value::Null, 1, None, Some(later)),
        )
    }

    pub fn state(
        self,
        id: &str,
        kind: CriterionKind,
        description: &str,
        target: (EntityKind, &str, &str),
        expect: Expect,
    ) -> Self {
        let (ekind, eid, attribute) = target;
        let target = AttrRef {
            kind: ekind,
            id: eid.to_string(),
            attribute: attribute.to_string(),
        };
        let (equals, contains) = match expect {
            Expect::Equals(v) => (Some(v), None),
            Expect::Contains(v) => (None, Some(v)),
        };
        self.criterion(
            id,
            kind,
            description,
            CheckSpec::EntityStateAssert {
                target,
                equals,
                not_equals: None,
                contains,
            },
        )
    }

    pub fn respond(self, final_response: impl Into<String>) -> Task {
        assert!(!self.rubric.is_empty(), "{} has no criteria", self.id);
        Task {
            id: self.id,
            category: self.category,
            prompt: self.prompt,
            system_prompt_ref: SYSTEM_PROMPT_REF.to_string(),
            max_turns: DEFAULT_MAX_TURNS,
            rubric: self.rubric,
            oracle_plan: Some(OraclePlan {
                calls: self.calls,
                final_response: final_response.into(),
            }),
        }
    }
}
