use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::validate::ArgViolation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub session_id: String,
    pub tool: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
    pub call_id: String,
}

impl ToolCall {
    pub fn new(session_id: &str, call_id: impl Into<String>, tool: &str, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => panic!("tool arguments must be an object, got {other}"),
        };
        Self {
            session_id: session_id.to_string(),
            tool: tool.to_string(),
            arguments,
            call_id: call_id.into(),
        }
    }
}

/// Outcome class of a tool call. Also the wire error-code vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToolStatus {
    Ok,
    UnknownSession,
    UnknownTool,
    SchemaViolation,
    DomainError,
    SessionFinalized,
    Internal,
}

impl ToolStatus {
    pub fn code(self) -> &'static str {
        match self {
            ToolStatus::Ok => "ok",
            ToolStatus::UnknownSession => "unknown-session",
            ToolStatus::UnknownTool => "unknown-tool",
            ToolStatus::SchemaViolation => "schema-violation",
            ToolStatus::DomainError => "domain-error",
            ToolStatus::SessionFinalized => "session-finalized",
            ToolStatus::Internal => "internal",
        }
    }
}

impl std::fmt::Display for ToolStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub status: ToolStatus,
    pub payload: Value,
}

impl ToolResult {
    pub fn ok(call_id: &str, payload: Value) -> Self {
        Self {
            call_id: call_id.to_string(),
            status: ToolStatus::Ok,
            payload,
        }
    }

    pub fn error(
        call_id: &str,
        status: ToolStatus,
        message: impl Into<String>,
        detail: Value,
    ) -> Self {
        Self {
            call_id: call_id.to_string(),
            status,
            payload: json!({"message": message.into(), "detail": detail}),
        }
    }

    pub fn domain(call_id: &str, reason: &str, message: impl Into<String>) -> Self {
        Self::error(
            call_id,
            ToolStatus::DomainError,
            message,
            json!({"reason": reason}),
        )
    }

    pub fn schema_violation(call_id: &str, tool: &str, violations: &[ArgViolation]) -> Self {
        let names: Vec<&str> = violations.iter().map(|v| v.argument.as_str()).collect();
        Self::error(
            call_id,
            ToolStatus::SchemaViolation,
            format!("invalid arguments for {tool}: {}", names.join(", ")),
            json!({"violations": violations}),
        )
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }

    /// `reason` of a domain error, if this is one.
    pub fn reason(&self) -> Option<&str> {
        (self.status == ToolStatus::DomainError)
            .then(|| {
                self.payload
                    .pointer("/detail/reason")
                    .and_then(Value::as_str)
            })
            .flatten()
    }
}
