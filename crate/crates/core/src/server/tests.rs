use serde_json::{json, Value};

use super::*;
use crate::bundle::pack_bundle;
use crate::rollout::{run_episode, AgentKind};
use crate::suite::{builtin_prompts, shipped_tasks_dir, suite_world};

fn server() -> (tempfile::TempDir, Server) {
    let dir = tempfile::tempdir().unwrap();
    pack_bundle(
        &suite_world(),
        &shipped_tasks_dir(),
        &builtin_prompts(),
        dir.path(),
    )
    .unwrap();
    let s = Server::open(dir.path()).unwrap();
    (dir, s)
}

fn send(s: &Server, method: &str, params: Value) -> Value {
    let line = json!({"id": "t", "method": method, "params": params}).to_string();
    serde_json::from_str(&s.handle_line(&line)).unwrap()
}

fn ok(resp: Value) -> Value {
    assert_eq!(resp["ok"], true, "{resp}");
    resp["result"].clone()
}

fn code(resp: &Value) -> &str {
    assert_eq!(resp["ok"], false, "{resp}");
    resp["error"]["code"].as_str().unwrap()
}

fn create(s: &Server, params: Value) -> String {
    ok(send(s, "session.create", params))["session_id"]
        .as_str()
        .unwrap()
        .to_string()
}

fn invoke(s: &Server, sid: &str, call_id: &str, tool: &str, arguments: Value) -> Value {
    send(
        s,
        "tools.invoke",
        json!({"session_id": sid, "call_id": call_id, "tool": tool, "arguments": arguments}),
    )
}

#[test]
fn list_is_full_and_stable() {
    let (_d, s) = server();
    let sid = create(&s, json!({}));
    let a = ok(send(&s, "tools.list", json!({"session_id": sid})));
    let b = ok(send(&s, "tools.list", json!({"session_id": sid})));
    assert_eq!(a, b);
    let names: Vec<&str> = a["tools"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert_eq!(names.len(), 23);
    for n in [
        "searchOrders",
        "searchProducts",
        "searchBuilds",
        "updateTicketStatus",
        "processReturn",
        "validateBuildCompatibility",
    ] {
        assert!(names.contains(&n), "{n}");
    }
    assert_eq!(
        code(&send(&s, "tools.list", json!({"session_id": "nope"}))),
        "unknown-session"
    );
}

#[test]
fn bad_frames_get_structured_errors() {
    let (_d, s) = server();
    for line in [
        "not json",
        "[1,2]",
        r#"{"method":"tools.list"}"#,
        r#"{"id":"x"}"#,
        r#"{"id":"x","method":"tools.list","params":3}"#,
    ] {
        let r: Value = serde_json::from_str(&s.handle_line(line)).unwrap();
        assert_eq!(code(&r), "schema-violation", "{line}");
    }
    assert_eq!(
        code(&send(&s, "session.explode", json!({}))),
        "schema-violation"
    );
    assert_eq!(
        code(&send(
            &s,
            "session.create",
            json!({"task_id": "no-such-task"})
        )),
        "schema-violation"
    );
    assert_eq!(
        code(&send(&s, "session.create", json!({"colour": 1}))),
        "schema-violation"
    );
    assert_eq!(
        code(&send(&s, "session.create", json!({"world_digest": "00"}))),
        "schema-violation"
    );
    let r = invoke(&s, "nope", "c1", "getOrder", json!({}));
    assert_eq!(code(&r), "unknown-session");
}

#[test]
fn tool_errors_carry_the_call_id() {
    let (_d, s) = server();
    let sid = create(&s, json!({}));
    let r = invoke(&s, &sid, "c1", "frobnicate", json!({}));
    assert_eq!(code(&r), "unknown-tool");
    assert_eq!(r["error"]["detail"]["call_id"], "c1");
    let r = invoke(&s, &sid, "c2", "getOrder", json!({}));
    assert_eq!(code(&r), "schema-violation");
    assert!(r["error"]["message"].as_str().unwrap().contains("order_id"));
    let r = invoke(&s, &sid, "c3", "getOrder", json!({"order_id": "ORD-99999"}));
    assert_eq!(code(&r), "domain-error");
    let r = invoke(&s, &sid, "c4", "searchOrders", json!({"limit": 50}));
    let results = ok(r)["payload"]["results"].as_array().unwrap().len();
    assert_eq!(results, 10);
}

#[test]
fn duplicate_call_id_is_refused_and_not_recorded() {
    let (_d, s) = server();
    let sid = create(&s, json!({"task_id": "ir-order-total"}));
    ok(invoke(
        &s,
        &sid,
        "c1",
        "getOrder",
        json!({"order_id": "ORD-00001"}),
    ));
    let r = invoke(&s, &sid, "c1", "getOrder", json!({"order_id": "ORD-00001"}));
    assert_eq!(code(&r), "schema-violation");
    let done = ok(send(
        &s,
        "session.finalize",
        json!({"session_id": sid, "final_response": "?"}),
    ));
    assert_eq!(done["turn_count"], 2);
}

#[test]
fn sessions_are_isolated() {
    let (_d, s) = server();
    let (a, b) = (create(&s, json!({})), create(&s, json!({})));
    assert_ne!(a, b);
    let before = ok(invoke(
        &s,
        &b,
        "c1",
        "getTicket",
        json!({"ticket_id": "TKT-00001"}),
    ))["payload"]["ticket"]["status"]
        .clone();
    let want = if before == "closed" { "open" } else { "closed" };
    ok(invoke(
        &s,
        &a,
        "c1",
        "updateTicketStatus",
        json!({"ticket_id": "TKT-00001", "status": want}),
    ));
    let mine = ok(invoke(
        &s,
        &a,
        "c2",
        "getTicket",
        json!({"ticket_id": "TKT-00001"}),
    ));
    assert_eq!(mine["payload"]["ticket"]["status"], want);
    let theirs = ok(invoke(
        &s,
        &b,
        "c2",
        "getTicket",
        json!({"ticket_id": "TKT-00001"}),
    ));
    assert_eq!(theirs["payload"]["ticket"]["status"], before);
}

#[test]
fn finalize_is_idempotent_and_closes_the_session() {
    let (_d, s) = server();
    let sid = create(&s, json!({"task_id": "ir-order-total"}));
    let first = ok(send(
        &s,
        "session.finalize",
        json!({"session_id": sid, "final_response": "no idea"}),
    ));
    assert_eq!(first["report"]["pass"], false);
    let again = ok(send(
        &s,
        "session.finalize",
        json!({"session_id": sid, "final_response": "different"}),
    ));
    assert_eq!(first, again);
    let r = invoke(&s, &sid, "c1", "getOrder", json!({"order_id": "ORD-00001"}));
    assert_eq!(code(&r), "session-finalized");
}

#[test]
fn explicit_session_ids_must_be_fresh() {
    let (_d, s) = server();
    let sid = create(
        &s,
        json!({"session_id": "ir-order-total/0", "task_id": "ir-order-total"}),
    );
    assert_eq!(sid, "ir-order-total/0");
    assert_eq!(
        code(&send(&s, "session.create", json!({"session_id": sid}))),
        "schema-violation"
    );
}

/// Replaying an in-process oracle episode through the wire gives the same report.
#[test]
fn wire_rewards_match_in_process_rewards() {
    let (_d, s) = server();
    let env = s.bundle().environment();
    for task in &s.bundle().tasks {
        for agent in [AgentKind::Oracle, AgentKind::Greedy, AgentKind::Random] {
            let ep = run_episode(&env, task, &agent, 0, 3, None).unwrap();
            let sid = create(
                &s,
                json!({"task_id": task.id, "session_id": format!("{}/{agent}", task.id)}),
            );
            for (call, result) in ep.trajectory.tool_exchanges() {
                let r = invoke(
                    &s,
                    &sid,
                    &call.call_id,
                    &call.tool,
                    Value::Object(call.arguments.clone()),
                );
                let result = result.unwrap();
                match r["ok"].as_bool().unwrap() {
                    true => assert_eq!(r["result"]["payload"], result.payload, "{}", task.id),
                    false => assert_eq!(code(&r), result.status.code(), "{}", task.id),
                }
            }
            let done = ok(send(
                &s,
                "session.finalize",
                json!({"session_id": sid, "final_response": ep.trajectory.final_response}),
            ));
            let wire: crate::rubric::RewardReport =
                serde_json::from_value(done["report"].clone()).unwrap();
            assert_eq!(wire, ep.report, "{} {agent:?}", task.id);
            assert_eq!(done["session_digest"], ep.session_digest, "{}", task.id);
            assert_eq!(done["turn_count"], ep.trajectory.turn_count);
        }
    }
}
