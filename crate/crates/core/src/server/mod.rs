//! Tool server: newline-delimited JSON frames, one request per line, one
//! response per request, in order.
//!
//! ```text
//! -> {"id":"1","method":"session.create","params":{"task_id":"ir-order-total"}}
//! <- {"id":"1","ok":true,"result":{"session_id":"sess-000001",...}}
//! -> {"id":"2","method":"tools.invoke","params":{"session_id":"sess-000001","call_id":"c1","tool":"getOrder","arguments":{...}}}
//! <- {"id":"2","ok":true,"result":{"call_id":"c1","status":"ok","payload":{...}}}
//! ```
//!
//! Failures carry `{"code","message","detail"}` where `code` is a
//! [`ToolStatus`] code. Requests on one session are serialized by its lock;
//! requests on different sessions run concurrently.

mod client;
mod transport;

pub use client::{Client, ClientError, WireError};
pub use transport::{serve_stream, serve_tcp};

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::bundle::{load_bundle, Bundle};
use crate::rollout::{AgentContent, Trajectory, Turn};
use crate::rubric::{evaluate, Task};
use crate::tools::{invoke_tool, ToolCall, ToolResult, ToolStatus};
use crate::world::{fork_session_with_id, EpisodeSession, WorldView};

pub const PROTOCOL_VERSION: u32 = 1;

/// A failed request, rendered as the `error` member of a response frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: ToolStatus,
    pub message: String,
    pub detail: Value,
}

impl Failure {
    fn new(code: ToolStatus, message: impl Into<String>, detail: Value) -> Self {
        Self {
            code,
            message: message.into(),
            detail,
        }
    }

    fn schema(message: impl Into<String>, detail: Value) -> Self {
        Self::new(ToolStatus::SchemaViolation, message, detail)
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(
            ToolStatus::UnknownSession,
            format!("no session {id}"),
            json!({"session_id": id}),
        )
    }
}

struct Live {
    session: EpisodeSession,
    traj: Trajectory,
    call_ids: HashSet<String>,
}

struct Slot {
    bundle: Arc<Bundle>,
    task: Option<Task>,
    /// `None` once finalized; the finalize result is kept for idempotent repeats.
    live: Option<Live>,
    finalized: Option<Value>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Session registry over one default bundle plus any bundles named by path.
pub struct Server {
    default: Arc<Bundle>,
    bundles: Mutex<HashMap<PathBuf, Arc<Bundle>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    next_id: AtomicU64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateParams {
    #[serde(default)]
    world_digest: Option<String>,
    #[serde(default)]
    bundle: Option<String>,
    #[serde(default)]
    task_id: Option<String>,
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    rollout_idx: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionParams {
    session_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalizeParams {
    session_id: String,
    #[serde(default)]
    final_response: String,
}

fn params<T: for<'de> Deserialize<'de>>(method: &str, p: Value) -> Result<T, Failure> {
    serde_json::from_value(p).map_err(|e| {
        Failure::schema(
            format!("bad params for {method}: {e}"),
            json!({"method": method}),
        )
    })
}

impl Server {
    pub fn new(bundle: Bundle) -> Self {
        let default = Arc::new(bundle);
        let mut bundles = HashMap::new();
        bundles.insert(default.dir.clone(), Arc::clone(&default));
        Self {
            default,
            bundles: Mutex::new(bundles),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    pub fn open(dir: &Path) -> Result<Self, crate::bundle::BundleError> {
        Ok(Self::new(load_bundle(dir)?))
    }

    pub fn bundle(&self) -> &Bundle {
        &self.default
    }

    /// Handles one frame and returns the response frame, without newline.
    pub fn handle_line(&self, line: &str) -> String {
        let (id, out) = match serde_json::from_str::<Value>(line) {
            Err(e) => (
                Value::Null,
                Err(Failure::schema(format!("malformed frame: {e}"), json!({}))),
            ),
            Ok(frame) => {
                let id = frame.get("id").cloned().unwrap_or(Value::Null);
                let out =
                    catch_unwind(AssertUnwindSafe(|| self.dispatch(frame))).unwrap_or_else(|_| {
                        Err(Failure::new(
                            ToolStatus::Internal,
                            "request handler panicked",
                            json!({}),
                        ))
                    });
                (id, out)
            }
        };
        let frame = match out {
            Ok(result) => json!({"id": id, "ok": true, "result": result}),
            Err(f) => {
                json!({"id": id, "ok": false, "error": {"code": f.code.code(), "message": f.message, "detail": f.detail}})
            }
        };
        frame.to_string()
    }

    fn dispatch(&self, frame: Value) -> Result<Value, Failure> {
        let Value::Object(mut frame) = frame else {
            return Err(Failure::schema("frame must be a JSON object", json!({})));
        };
        if !frame.get("id").is_some_and(Value::is_string) {
            return Err(Failure::schema(
                "frame id must be a string",
                json!({"field": "id"}),
            ));
        }
        let method = match frame.remove("method") {
            Some(Value::String(m)) => m,
            _ => {
                return Err(Failure::schema(
                    "frame method must be a string",
                    json!({"field": "method"}),
                ))
            }
        };
        let p = match frame.remove("params") {
            None | Some(Value::Null) => Value::Object(Map::new()),
            Some(p @ Value::Object(_)) => p,
            Some(_) => {
                return Err(Failure::schema(
                    "params must be an object",
                    json!({"field": "params"}),
                ))
            }
        };
        match method.as_str() {
            "session.create" => self.create(params(&method, p)?),
            "tools.list" => self.list(params(&method, p)?),
            "tools.invoke" => self.invoke(params(&method, p)?),
            "session.finalize" => self.finalize(params(&method, p)?),
            other => Err(Failure::schema(
                format!("unknown method {other}"),
                json!({"method": other}),
            )),
        }
    }

    fn resolve_bundle(&self, p: &CreateParams) -> Result<Arc<Bundle>, Failure> {
        let bundle = match &p.bundle {
            None => Arc::clone(&self.default),
            Some(path) => {
                let dir = PathBuf::from(path);
                let mut cache = lock(&self.bundles);
                match cache.get(&dir) {
                    Some(b) => Arc::clone(b),
                    None => {
                        let b = Arc::new(load_bundle(&dir).map_err(|e| {
                            Failure::schema(
                                format!("cannot load bundle {path}: {e}"),
                                json!({"bundle": path}),
                            )
                        })?);
                        cache.insert(dir, Arc::clone(&b));
                        b
                    }
                }
            }
        };
        if let Some(d) = &p.world_digest {
            if p.bundle.is_none() {
                if self.default.world.digest() == d {
                    return Ok(Arc::clone(&self.default));
                }
                let cache = lock(&self.bundles);
                return cache
                    .values()
                    .find(|b| b.world.digest() == d)
                    .cloned()
                    .ok_or_else(|| {
                        Failure::schema(
                            format!("no loaded world has digest {d}"),
                            json!({"world_digest": d}),
                        )
                    });
            }
            if bundle.world.digest() != d {
                return Err(Failure::schema(
                    "bundle world does not match world_digest",
                    json!({"world_digest": d, "bundle_digest": bundle.world.digest()}),
                ));
            }
        }
        Ok(bundle)
    }

    fn create(&self, p: CreateParams) -> Result<Value, Failure> {
        let bundle = self.resolve_bundle(&p)?;
        let task = match &p.task_id {
            None => None,
            Some(id) => Some(bundle.task(id).cloned().ok_or_else(|| {
                Failure::schema(format!("unknown task {id}"), json!({"task_id": id}))
            })?),
        };
        let id = match p.session_id {
            Some(id) if id.is_empty() => {
                return Err(Failure::schema("session_id must be nonempty", json!({})))
            }
            Some(id) => id,
            None => format!("sess-{:06}", self.next_id.fetch_add(1, Ordering::Relaxed)),
        };
        let mut traj = Trajectory::new(
            task.as_ref().map_or("", |t| t.id.as_str()),
            p.rollout_idx,
            p.seed,
        );
        let system_prompt = match &task {
            Some(t) => {
                let text = bundle
                    .system_prompts
                    .get(&t.system_prompt_ref)
                    .cloned()
                    .unwrap_or_default();
                traj.turns.push(Turn::System(text.clone()));
                traj.turns.push(Turn::User(t.prompt.clone()));
                Some(text)
            }
            None => None,
        };
        let task_info = task.as_ref().map(|t| {
            json!({
                "id": t.id,
                "category": t.category,
                "prompt": t.prompt,
                "system_prompt_ref": t.system_prompt_ref,
                "system_prompt": system_prompt,
                "max_turns": t.max_turns,
            })
        });
        let slot = Slot {
            live: Some(Live {
                session: fork_session_with_id(&bundle.world, id.clone()),
                traj,
                call_ids: HashSet::new(),
            }),
            bundle: Arc::clone(&bundle),
            task,
            finalized: None,
        };
        {
            let mut sessions = lock(&self.sessions);
            if sessions.contains_key(&id) {
                return Err(Failure::schema(
                    format!("session {id} already exists"),
                    json!({"session_id": id}),
                ));
            }
            sessions.insert(id.clone(), Arc::new(Mutex::new(slot)));
        }
        Ok(json!({
            "session_id": id,
            "world_digest": bundle.world.digest(),
            "protocol_version": PROTOCOL_VERSION,
            "task": task_info,
        }))
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, Failure> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| Failure::unknown_session(id))
    }

    fn list(&self, p: SessionParams) -> Result<Value, Failure> {
        let slot = self.slot(&p.session_id)?;
        let slot = lock(&slot);
        Ok(json!({"tools": slot.bundle.catalog.tools}))
    }

    fn invoke(&self, call: ToolCall) -> Result<Value, Failure> {
        let slot = self.slot(&call.session_id)?;
        let mut slot = lock(&slot);
        let max_turns = slot.task.as_ref().map(|t| t.max_turns);
        let bundle = Arc::clone(&slot.bundle);
        let catalog = &bundle.catalog;
        let Some(live) = slot.live.as_mut() else {
            return Err(Failure::new(
                ToolStatus::SessionFinalized,
                format!("session {} is finalized", call.session_id),
                json!({"session_id": call.session_id, "call_id": call.call_id}),
            ));
        };
        if call.call_id.is_empty() || live.call_ids.contains(&call.call_id) {
            return Err(Failure::schema(
                format!(
                    "call_id `{}` is empty or already used in this session",
                    call.call_id
                ),
                json!({"call_id": call.call_id, "field": "call_id"}),
            ));
        }
        if max_turns.is_some_and(|m| live.traj.turn_count >= m) {
            return Err(Failure::schema(
                "turn budget exhausted",
                json!({"call_id": call.call_id, "reason": "turn-limit", "max_turns": max_turns}),
            ));
        }
        let result = invoke_tool(catalog, &mut live.session, &call);
        if result.status == ToolStatus::Internal {
            // Not recorded: an internal failure says nothing about the agent.
            return Err(to_failure(&result));
        }
        live.call_ids.insert(call.call_id.clone());
        live.traj.turns.push(Turn::Agent(AgentContent::Call(call)));
        live.traj.turns.push(Turn::Tool(result.clone()));
        live.traj.turn_count += 1;
        if result.is_ok() {
            Ok(serde_json::to_value(&result).expect("result serializes"))
        } else {
            Err(to_failure(&result))
        }
    }

    fn finalize(&self, p: FinalizeParams) -> Result<Value, Failure> {
        let slot = self.slot(&p.session_id)?;
        let mut slot = lock(&slot);
        if let Some(done) = &slot.finalized {
            return Ok(done.clone());
        }
        let mut live = slot.live.take().expect("unfinalized session is live");
        let max = slot.task.as_ref().map_or(usize::MAX, |t| t.max_turns);
        // Matches the in-process loop, which never lets a response through past the budget.
        let truncated = live.traj.turn_count >= max;
        if !truncated {
            live.traj
                .turns
                .push(Turn::Agent(AgentContent::Message(p.final_response.clone())));
            live.traj.final_response = p.final_response;
            live.traj.turn_count += 1;
        }
        let report = match &slot.task {
            None => Value::Null,
            Some(task) => match evaluate(&task.id, &task.rubric, &live.traj, &live.session, None) {
                Ok(r) => {
                    let reward = r.r_f64();
                    let mut v = serde_json::to_value(&r).expect("report serializes");
                    v["r"] = json!(reward);
                    v
                }
                Err(e) => {
                    slot.live = Some(live);
                    return Err(Failure::new(
                        ToolStatus::Internal,
                        format!("judge unavailable: {e}"),
                        json!({"criterion_id": e.criterion_id, "partial": e.partial}),
                    ));
                }
            },
        };
        let done = json!({
            "session_id": p.session_id,
            "report": report,
            "session_digest": live.session.digest(),
            "world_digest": slot.bundle.world.digest(),
            "turn_count": live.traj.turn_count,
            "truncated": truncated,
            "trajectory": live.traj,
        });
        slot.finalized = Some(done.clone());
        Ok(done)
    }
}

fn to_failure(r: &ToolResult) -> Failure {
    let message = r
        .payload
        .get("message")
        .and_then(Value::as_str)
        .unwrap_or("tool call failed")
        .to_string();
    let mut detail = match r.payload.get("detail") {
        Some(Value::Object(m)) => m.clone(),
        _ => Map::new(),
    };
    detail.insert("call_id".into(), json!(r.call_id));
    Failure::new(r.status, message, Value::Object(detail))
}

#[cfg(test)]
mod tests;
