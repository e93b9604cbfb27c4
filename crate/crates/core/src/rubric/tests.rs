use std::sync::Arc;

use serde_json::json;

use super::*;
use crate::gen::{generate_world, GenProfile};
use crate::rollout::{AgentContent, Trajectory, Turn};
use crate::tools::{invoke_tool, order_items, Catalog, ToolCall};
use crate::world::{fork_session, EntityId, EntityKind, WorldView};

fn crit(id: &str, check: serde_json::Value) -> RubricCriterion {
    serde_json::from_value(json!({"id": id, "kind": "correctness", "check": check})).unwrap()
}

fn traj(response: &str) -> Trajectory {
    let mut t = Trajectory::new("t", 0, 0);
    t.final_response = response.to_string();
    t
}

#[test]
fn state_assert_after_ticket_update() {
    let w = Arc::new(generate_world(42, &GenProfile::mini()).unwrap());
    let mut s = fork_session(&w);
    let call = ToolCall::new(
        s.id(),
        "c0",
        "updateTicketStatus",
        json!({"ticket_id": "TKT-00003", "status": "resolved"}),
    );
    let res = invoke_tool(Catalog::builtin(), &mut s, &call);
    let mut t = traj("Ticket resolved.");
    t.turns.push(Turn::Agent(AgentContent::Call(call)));
    t.turns.push(Turn::Tool(res));
    let c = crit(
        "st",
        json!({"type": "entity-state-assert",
        "params": {"kind": "support_ticket", "id": "TKT-00003", "attribute": "status", "equals": "resolved"}}),
    );
    assert!(check_criterion(&c, &t, &s, None).unwrap().satisfied);
    assert!(!check_criterion(&c, &t, w.as_ref(), None).unwrap().satisfied);
    let called = crit(
        "called",
        json!({"type": "tool-was-called",
        "params": {"tool": "updateTicketStatus", "arguments": {"status": "resolved"}, "succeeded": true}}),
    );
    assert!(check_criterion(&called, &t, &s, None).unwrap().satisfied);
}

#[test]
fn absent_fact_is_unsatisfied() {
    let w = generate_world(42, &GenProfile::mini()).unwrap();
    let c = crit(
        "carrier",
        json!({"type": "response-contains-fact", "params": {"fact": "FedEx"}}),
    );
    let o = check_criterion(&c, &traj("It shipped with   the post office."), &w, None).unwrap();
    assert!(!o.satisfied);
    let o = check_criterion(&c, &traj("shipped via FEDEX  ground"), &w, None).unwrap();
    assert!(o.satisfied, "{}", o.evidence);
}

#[test]
fn numeric_total_matches_summed_line_items() {
    let w = generate_world(42, &GenProfile::mini()).unwrap();
    for order in w.entities_of(EntityKind::Order) {
        let cents: i64 = order_items(order)
            .iter()
            .map(|(_, q, u)| q * u)
            .sum::<i64>()
            - order.int_attr("discount_cents").unwrap();
        let dollars = cents as f64 / 100.0;
        let c = crit(
            "total",
            json!({"type": "numeric-equals",
            "params": {"expected": dollars, "after": "total"}}),
        );
        let resp = format!(
            "Order {} total: ${}.{:02}",
            order.id.local,
            cents / 100,
            cents % 100
        );
        assert!(
            check_criterion(&c, &traj(&resp), &w, None)
                .unwrap()
                .satisfied,
            "{resp}"
        );
        let c = crit(
            "stored",
            json!({"type": "numeric-equals",
            "params": {"expected": cents as f64, "entity": {"kind": "order", "id": order.id.local, "attribute": "total_cents"}}}),
        );
        assert!(check_criterion(&c, &traj(""), &w, None).unwrap().satisfied);
    }
}

#[test]
fn pattern_forbid_and_ordering() {
    let w = generate_world(1, &GenProfile::mini()).unwrap();
    let c = crit(
        "no-email",
        json!({"type": "pattern-match", "params": {"pattern": "[\\w.]+@[\\w.]+", "forbid": true}}),
    );
    assert!(
        check_criterion(&c, &traj("We will email you."), &w, None)
            .unwrap()
            .satisfied
    );
    assert!(
        !check_criterion(&c, &traj("Sent to a.b@example.com"), &w, None)
            .unwrap()
            .satisfied
    );

    let mut t = traj("");
    for (i, tool) in ["getCompanyPolicy", "processReturn"].iter().enumerate() {
        let id = format!("c{i}");
        t.turns.push(Turn::Agent(AgentContent::Call(ToolCall::new(
            "s",
            id.as_str(),
            tool,
            json!({}),
        ))));
        t.turns
            .push(Turn::Tool(crate::tools::ToolResult::ok(&id, json!({}))));
    }
    let before = crit(
        "policy-first",
        json!({"type": "tool-was-called",
        "params": {"tool": "getCompanyPolicy", "before": "processReturn"}}),
    );
    assert!(check_criterion(&before, &t, &w, None).unwrap().satisfied);
    let reversed = crit(
        "return-first",
        json!({"type": "tool-was-called",
        "params": {"tool": "processReturn", "before": "getCompanyPolicy"}}),
    );
    assert!(!check_criterion(&reversed, &t, &w, None).unwrap().satisfied);
    let never = crit(
        "no-cancel",
        json!({"type": "tool-was-called",
        "params": {"tool": "cancelOrder", "min_count": 0, "max_count": 0}}),
    );
    assert!(check_criterion(&never, &t, &w, None).unwrap().satisfied);
}

struct Always(bool);

impl Judge for Always {
    fn judge(&self, r: &JudgeRequest) -> Result<JudgeVerdict, JudgeError> {
        assert_eq!(r.state[0]["record"]["id"], "CUS-00001");
        Ok(JudgeVerdict {
            satisfied: self.0,
            rationale: "judged".into(),
        })
    }
}

#[test]
fn judge_unavailable_propagates_with_partial_verdicts() {
    let w = generate_world(42, &GenProfile::mini()).unwrap();
    let rubric = vec![
        crit(
            "fact",
            json!({"type": "response-contains-fact", "params": {"fact": "hello"}}),
        ),
        crit(
            "tone",
            json!({"type": "external-judge",
            "params": {"criterion": "polite", "entities": [{"kind": "customer", "id": "CUS-00001"}]}}),
        ),
    ];
    let err = evaluate("t", &rubric, &traj("hello"), &w, None).unwrap_err();
    assert_eq!(err.criterion_id, "tone");
    assert_eq!(err.partial.len(), 1);
    assert!(err.partial[0].satisfied);
    let ok = evaluate("t", &rubric, &traj("hello"), &w, Some(&Always(true))).unwrap();
    assert!(ok.pass);
    let no = evaluate("t", &rubric, &traj("hello"), &w, Some(&Always(false))).unwrap();
    assert_eq!((no.r_num, no.r_den), (1, 2));
}

#[test]
fn missing_entity_is_unsatisfied_not_fault() {
    let w = generate_world(42, &GenProfile::mini()).unwrap();
    assert!(w
        .get(&EntityId::new(EntityKind::Order, "ORD-77777"))
        .is_none());
    let c = crit(
        "x",
        json!({"type": "entity-state-assert",
        "params": {"kind": "order", "id": "ORD-77777", "attribute": "status", "equals": "returned"}}),
    );
    assert!(!check_criterion(&c, &traj(""), &w, None).unwrap().satisfied);
}
