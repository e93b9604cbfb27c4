//! The tool catalog and in-process tool execution against a session.

mod call;
mod catalog;
mod handlers;
mod search;
mod support;
mod validate;

pub use call::{ToolCall, ToolResult, ToolStatus};
pub use catalog::{
    Catalog, CatalogError, ParamDef, ParamType, SearchSpec, ToolCategory, ToolDefinition,
};
pub use handlers::{return_eligibility, Eligibility};
pub use support::{current_policy, normalize, order_items, record};
pub use validate::{validate_args, ArgViolation};

use serde_json::json;

use crate::world::EpisodeSession;
use handlers::Handler;
use search::Page;
use support::Args;

/// Runs one call against `session`. Never panics on bad input: every failure
/// comes back as a non-`ok` [`ToolResult`]. The session id inside `call` is
/// not consulted; routing is the caller's job.
pub fn invoke_tool(catalog: &Catalog, session: &mut EpisodeSession, call: &ToolCall) -> ToolResult {
    let Some(def) = catalog.get(&call.tool) else {
        return ToolResult::error(
            &call.call_id,
            ToolStatus::UnknownTool,
            format!("unknown tool {}", call.tool),
            json!({"tool": call.tool}),
        );
    };
    if let Err(v) = validate_args(def, &call.arguments) {
        return ToolResult::schema_violation(&call.call_id, &def.name, &v);
    }
    let Some(h) = handlers::handler(&def.name) else {
        return ToolResult::error(
            &call.call_id,
            ToolStatus::Internal,
            "tool has no handler",
            json!({}),
        );
    };
    let args = Args(&call.arguments);
    let outcome = match h {
        Handler::Search(f) => Ok(f(
            session,
            args,
            &Page::from_args(args, catalog.cap_for(def)),
        )),
        Handler::Read(f) => f(session, args),
        Handler::Write(f) => match f(session, args) {
            Ok((payload, batch)) => match session.apply_batch(batch) {
                Ok(_) => Ok(payload),
                Err(e) => {
                    return ToolResult::error(
                        &call.call_id,
                        ToolStatus::Internal,
                        format!("mutation rejected: {e}"),
                        json!({}),
                    )
                }
            },
            Err(r) => Err(r),
        },
    };
    match outcome {
        Ok(payload) => ToolResult::ok(&call.call_id, payload),
        Err(r) => ToolResult::domain(&call.call_id, r.reason, r.message),
    }
}

#[cfg(test)]
mod tests;
