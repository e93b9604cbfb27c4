use std::sync::Arc;

use serde_json::{json, Value};

use super::*;
use crate::gen::{generate_world, GenProfile};
use crate::world::{check_integrity, fork_session, EntityId, EntityKind, WorldState, WorldView};

fn world() -> Arc<WorldState> {
    Arc::new(generate_world(42, &GenProfile::mini()).unwrap())
}

fn call(s: &mut EpisodeSession, tool: &str, args: Value) -> ToolResult {
    invoke_tool(
        Catalog::builtin(),
        s,
        &ToolCall::new(s.id().to_string().as_str(), "c", tool, args),
    )
}

fn results(r: &ToolResult) -> &Vec<Value> {
    r.payload["results"].as_array().unwrap()
}

#[test]
fn search_caps_at_ten_without_truncation_marker() {
    let w = world();
    let mut s = fork_session(&w);
    let r = call(&mut s, "searchOrders", json!({"limit": 50}));
    assert!(r.is_ok());
    assert_eq!(results(&r).len(), 10);
    assert_eq!(
        r.payload.as_object().unwrap().keys().collect::<Vec<_>>(),
        ["results"]
    );
    let r = call(&mut s, "searchOrders", json!({"offset": 20}));
    assert_eq!(results(&r).len(), 10);
    let r = call(&mut s, "searchOrders", json!({"offset": 25}));
    assert_eq!(results(&r).len(), 5);
}

#[test]
fn orders_sorted_by_date_desc_then_id() {
    let w = world();
    let mut s = fork_session(&w);
    let mut all = Vec::new();
    for offset in [0, 10, 20, 30] {
        all.extend(results(&call(&mut s, "searchOrders", json!({"offset": offset}))).clone());
    }
    assert_eq!(all.len(), 30);
    for pair in all.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (da, db) = (
            a["order_date"].as_str().unwrap(),
            b["order_date"].as_str().unwrap(),
        );
        assert!(da > db || (da == db && a["id"].as_str() < b["id"].as_str()));
    }
}

#[test]
fn unknown_tool_and_schema_violation() {
    let w = world();
    let mut s = fork_session(&w);
    let r = call(&mut s, "frobnicate", json!({}));
    assert_eq!(r.status, ToolStatus::UnknownTool);
    let r = call(&mut s, "getOrder", json!({"order": "ORD-00001"}));
    assert_eq!(r.status, ToolStatus::SchemaViolation);
    let names: Vec<&str> = r.payload["detail"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["argument"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["order", "order_id"]);
}

#[test]
fn ticket_update_visible_only_in_own_session() {
    let w = world();
    let mut a = fork_session(&w);
    let mut b = fork_session(&w);
    let before = call(&mut b, "getTicket", json!({"ticket_id": "TKT-00001"})).payload["ticket"]
        ["status"]
        .clone();
    let r = call(
        &mut a,
        "updateTicketStatus",
        json!({"ticket_id": "TKT-00001", "status": "escalated"}),
    );
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(a.version(), 1);
    let seen_a = call(&mut a, "getTicket", json!({"ticket_id": "TKT-00001"}));
    assert_eq!(seen_a.payload["ticket"]["status"], "escalated");
    let seen_b = call(&mut b, "getTicket", json!({"ticket_id": "TKT-00001"}));
    assert_eq!(seen_b.payload["ticket"]["status"], before);
}

#[test]
fn read_tools_never_change_digest() {
    let w = world();
    let mut s = fork_session(&w);
    let d0 = s.digest();
    for (tool, args) in [
        ("getCustomer", json!({"customer_id": "CUS-00001"})),
        ("getInventory", json!({"product_id": "PRD-00001"})),
        (
            "checkReturnEligibility",
            json!({"order_id": "ORD-00001", "product_id": "PRD-00010"}),
        ),
        (
            "validateBuildCompatibility",
            json!({"build_id": "BLD-00001"}),
        ),
        ("searchProducts", json!({"in_stock": true})),
    ] {
        let def = Catalog::builtin().get(tool).unwrap();
        assert!(!def.mutates);
        call(&mut s, tool, args);
    }
    assert_eq!(s.digest(), d0);
    assert_eq!(s.version(), 0);
}

#[test]
fn mutating_flag_matches_behavior() {
    let c = Catalog::builtin();
    let writes: Vec<&str> = c
        .tools
        .iter()
        .filter(|t| t.mutates)
        .map(|t| t.name.as_str())
        .collect();
    assert_eq!(
        writes,
        [
            "processReturn",
            "applyPromotion",
            "cancelOrder",
            "updateTicketStatus",
            "addTicketNote",
            "sendCustomerMessage"
        ]
    );
}

/// Every delivered order item gets the answer implied by its dates; eligible
/// ones are returnable and afterwards report `already-returned`.
#[test]
fn return_flow_follows_window() {
    let w = world();
    let mut checked = 0;
    for order in w.entities_of(EntityKind::Order) {
        if order.str_attr("status") != Some("delivered") {
            continue;
        }
        let pid = order_items(order)[0].0.to_string();
        let mut s = fork_session(&w);
        let args = json!({"order_id": order.id.local, "product_id": pid});
        let elig = call(&mut s, "checkReturnEligibility", args.clone());
        let mut ret_args = args.clone();
        ret_args["reason"] = json!("changed my mind");
        let r = call(&mut s, "processReturn", ret_args.clone());
        if elig.payload["eligible"] == true {
            assert!(r.is_ok(), "{r:?}");
            assert!(r.payload["refund_cents"].as_i64().unwrap() > 0);
            let again = call(&mut s, "processReturn", ret_args);
            assert_eq!(again.reason(), Some("already-returned"));
            assert!(check_integrity(&s).is_empty());
        } else {
            assert_eq!(r.status, ToolStatus::DomainError);
            assert_eq!(r.reason(), elig.payload["reason"].as_str());
            assert_eq!(s.version(), 0);
        }
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn cancel_restocks_and_refunds() {
    let w = world();
    let order = w
        .entities_of(EntityKind::Order)
        .into_iter()
        .find(|o| o.str_attr("status") == Some("pending"))
        .expect("mini world has a pending order");
    let (pid, qty, _) = order_items(order)[0];
    let stock = |s: &EpisodeSession| -> i64 {
        s.entities_of(EntityKind::InventoryLevel)
            .into_iter()
            .filter(|l| l.str_attr("product_id") == Some(pid))
            .map(|l| l.int_attr("quantity").unwrap())
            .sum()
    };
    let mut s = fork_session(&w);
    let before = stock(&s);
    let r = call(
        &mut s,
        "cancelOrder",
        json!({"order_id": order.id.local, "reason": "duplicate"}),
    );
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(
        r.payload["refund_cents"],
        order.attr("total_cents").unwrap().clone()
    );
    let have_level = before > 0 || stock(&s) > 0;
    if have_level {
        let total_qty: i64 = order_items(order)
            .iter()
            .filter(|(p, _, _)| *p == pid)
            .map(|x| x.1)
            .sum();
        assert_eq!(stock(&s), before + total_qty);
        assert!(qty > 0);
    }
    let again = call(
        &mut s,
        "cancelOrder",
        json!({"order_id": order.id.local, "reason": "x"}),
    );
    assert_eq!(again.reason(), Some("order-not-cancellable"));
}

#[test]
fn not_found_is_domain_error() {
    let w = world();
    let mut s = fork_session(&w);
    let r = call(&mut s, "getOrder", json!({"order_id": "ORD-99999"}));
    assert_eq!(r.reason(), Some("not-found"));
}

#[test]
fn messages_and_notes_append() {
    let w = world();
    let mut s = fork_session(&w);
    let r = call(
        &mut s,
        "sendCustomerMessage",
        json!({"customer_id": "CUS-00002", "subject": "Refund", "body": "Your refund is on its way."}),
    );
    assert!(r.is_ok());
    let c = s
        .get(&EntityId::new(EntityKind::Customer, "CUS-00002"))
        .unwrap();
    let log = c.attr("contact_log").unwrap().as_array().unwrap();
    assert!(log
        .last()
        .unwrap()
        .as_str()
        .unwrap()
        .ends_with("| Refund | Your refund is on its way."));
    let r = call(
        &mut s,
        "addTicketNote",
        json!({"ticket_id": "TKT-00002", "note": "called customer"}),
    );
    assert!(r.is_ok());
    assert_eq!(s.version(), 2);
}

#[test]
fn current_returns_policy_ignores_superseded() {
    let w = world();
    let mut s = fork_session(&w);
    let r = call(&mut s, "getCompanyPolicy", json!({"topic": "returns"}));
    assert_eq!(r.payload["policy"]["return_window_days"], 30);
}
