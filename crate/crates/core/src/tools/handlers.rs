//! Non-search tool behavior and the name → handler table.
//!
//! Read handlers see the session through `&dyn WorldView`. Write handlers
//! also only read; they return the mutation batch, which the caller applies
//! as one transaction.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use serde_json::{json, Value};

use super::search::{self, Page};
use super::support::{
    current_policy, fetch, now_string, order_items, record, refuse, str_list, Args, Refusal,
};
use crate::clock;
use crate::gen::DEFAULT_RETURN_WINDOW_DAYS;
use crate::world::{Entity, EntityId, EntityKind, Mutation, WorldView};

pub type Outcome = Result<Value, Refusal>;
pub type WriteOutcome = Result<(Value, Vec<Mutation>), Refusal>;

type ReadFn = fn(&dyn WorldView, Args<'_>) -> Outcome;
type SearchFn = fn(&dyn WorldView, Args<'_>, &Page) -> Value;
type WriteFn = fn(&dyn WorldView, Args<'_>) -> WriteOutcome;

pub enum Handler {
    Search(SearchFn),
    Read(ReadFn),
    Write(WriteFn),
}

pub fn handler(name: &str) -> Option<Handler> {
    use Handler::*;
    Some(match name {
        "searchOrders" => Search(|v, a, p| search::search_orders(v, a, p)),
        "searchProducts" => Search(|v, a, p| search::search_products(v, a, p)),
        "searchBuilds" => Search(|v, a, p| search::search_builds(v, a, p)),
        "searchCustomers" => Search(|v, a, p| search::search_customers(v, a, p)),
        "searchTickets" => Search(|v, a, p| search::search_tickets(v, a, p)),
        "searchKnowledgeBase" => Search(|v, a, p| search::search_knowledge_base(v, a, p)),
        "searchPromotions" => Search(|v, a, p| search::search_promotions(v, a, p)),
        "getCustomer" => Read(get_customer),
        "getOrder" => Read(get_order),
        "getProduct" => Read(get_product),
        "getTicket" => Read(get_ticket),
        "getShipment" => Read(get_shipment),
        "getInventory" => Read(get_inventory),
        "getCompanyPolicy" => Read(get_company_policy),
        "validateBuildCompatibility" => Read(validate_build_compatibility),
        "checkWarrantyStatus" => Read(check_warranty_status),
        "checkReturnEligibility" => Read(check_return_eligibility),
        "processReturn" => Write(process_return),
        "applyPromotion" => Write(apply_promotion),
        "cancelOrder" => Write(cancel_order),
        "updateTicketStatus" => Write(update_ticket_status),
        "addTicketNote" => Write(add_ticket_note),
        "sendCustomerMessage" => Write(send_customer_message),
        _ => return None,
    })
}

pub fn has_handler(name: &str) -> bool {
    handler(name).is_some()
}

fn get_customer(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let c = fetch(view, EntityKind::Customer, a.req("customer_id"))?;
    let tier = c
        .str_attr("loyalty_tier_id")
        .and_then(|t| view.get(&EntityId::new(EntityKind::LoyaltyTier, t)))
        .map(record);
    Ok(json!({"customer": record(c), "loyalty_tier": tier}))
}

fn get_order(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let o = fetch(view, EntityKind::Order, a.req("order_id"))?;
    Ok(json!({"order": record(o)}))
}

fn get_product(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let p = fetch(view, EntityKind::Product, a.req("product_id"))?;
    let warranty = p
        .str_attr("warranty_policy_id")
        .and_then(|w| view.get(&EntityId::new(EntityKind::WarrantyPolicy, w)))
        .map(record);
    Ok(json!({"product": record(p), "warranty_policy": warranty}))
}

fn get_ticket(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let t = fetch(view, EntityKind::SupportTicket, a.req("ticket_id"))?;
    let sla = t
        .str_attr("sla_id")
        .and_then(|s| view.get(&EntityId::new(EntityKind::Sla, s)))
        .map(record);
    Ok(json!({"ticket": record(t), "sla": sla}))
}

fn shipment_for<'v>(view: &'v dyn WorldView, order: &str) -> Option<&'v Entity> {
    view.entities_of(EntityKind::ShippingRecord)
        .into_iter()
        .find(|s| s.str_attr("order_id") == Some(order))
}

fn get_shipment(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let order = fetch(view, EntityKind::Order, a.req("order_id"))?;
    let s = shipment_for(view, &order.id.local).ok_or_else(|| {
        refuse(
            "not-found",
            format!("order {} has not shipped", order.id.local),
        )
    })?;
    Ok(json!({"shipment": record(s)}))
}

fn get_inventory(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let p = fetch(view, EntityKind::Product, a.req("product_id"))?;
    let levels: Vec<&Entity> = view
        .entities_of(EntityKind::InventoryLevel)
        .into_iter()
        .filter(|l| l.str_attr("product_id") == Some(p.id.local.as_str()))
        .collect();
    let total: i64 = levels.iter().filter_map(|l| l.int_attr("quantity")).sum();
    Ok(json!({
        "product_id": p.id.local,
        "levels": levels.into_iter().map(record).collect::<Vec<_>>(),
        "total_quantity": total,
    }))
}

fn get_company_policy(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let topic = a.req("topic");
    let p = current_policy(view, topic)
        .ok_or_else(|| refuse("not-found", format!("no policy in effect for {topic}")))?;
    Ok(json!({"policy": record(p)}))
}

fn validate_build_compatibility(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let ids: Vec<String> = match (a.str("build_id"), a.list("product_ids")) {
        (Some(b), _) => {
            let build = fetch(view, EntityKind::Build, b)?;
            str_list(build, "product_ids")
                .into_iter()
                .map(String::from)
                .collect()
        }
        (None, Some(list)) => list.into_iter().map(String::from).collect(),
        (None, None) => {
            return Err(refuse(
                "missing-input",
                "give either build_id or product_ids",
            ))
        }
    };
    let products = ids
        .iter()
        .map(|id| fetch(view, EntityKind::Product, id))
        .collect::<Result<Vec<_>, _>>()?;
    let set: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut issues = Vec::new();

    for rule in view.entities_of(EntityKind::CompatibilityRule) {
        let (Some(pa), Some(pb)) = (rule.str_attr("product_a"), rule.str_attr("product_b")) else {
            continue;
        };
        if rule.bool_attr("compatible") == Some(false) && set.contains(pa) && set.contains(pb) {
            issues.push(json!({
                "type": "incompatible-pair",
                "products": [pa, pb],
                "message": rule.str_attr("reason").unwrap_or("listed as incompatible"),
                "rule_id": rule.id.local,
            }));
        }
    }

    let of_cat = |c: &str| -> Vec<&&Entity> {
        products
            .iter()
            .filter(|p| p.str_attr("category") == Some(c))
            .collect()
    };
    for cpu in of_cat("cpu") {
        for board in of_cat("motherboard") {
            if let (Some(s1), Some(s2)) = (cpu.str_attr("socket"), board.str_attr("socket")) {
                if s1 != s2 {
                    issues.push(json!({
                        "type": "socket-mismatch",
                        "products": [cpu.id.local, board.id.local],
                        "message": format!("CPU socket {s1} does not match motherboard socket {s2}"),
                    }));
                }
            }
        }
    }

    let watts = |p: &&Entity| p.int_attr("power_watts").unwrap_or(0);
    let psus = of_cat("psu");
    let psu_watts: i64 = psus.iter().map(|p| watts(p)).sum();
    let draw: i64 = products
        .iter()
        .filter(|p| p.str_attr("category") != Some("psu"))
        .map(watts)
        .sum();
    // Sustained draw above 80% of the PSU rating counts as insufficient.
    if !psus.is_empty() && draw * 5 > psu_watts * 4 {
        issues.push(json!({
            "type": "insufficient-psu",
            "products": psus.iter().map(|p| p.id.local.clone()).collect::<Vec<_>>(),
            "message": format!("estimated draw {draw} W exceeds 80% of the {psu_watts} W power supply"),
        }));
    }
    Ok(json!({
        "compatible": issues.is_empty(),
        "issues": issues,
        "total_draw_watts": draw,
        "psu_watts": if psus.is_empty() { Value::Null } else { json!(psu_watts) },
    }))
}

fn order_with_product<'v>(
    view: &'v dyn WorldView,
    a: Args<'_>,
) -> Result<(&'v Entity, String), Refusal> {
    let order = fetch(view, EntityKind::Order, a.req("order_id"))?;
    let pid = a.req("product_id");
    if !order_items(order).iter().any(|(p, _, _)| *p == pid) {
        return Err(refuse(
            "product-not-in-order",
            format!("order {} does not contain product {pid}", order.id.local),
        ));
    }
    Ok((order, pid.to_string()))
}

fn check_warranty_status(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let (order, pid) = order_with_product(view, a)?;
    let product = fetch(view, EntityKind::Product, &pid)?;
    let wid = product.str_attr("warranty_policy_id").unwrap_or("");
    let plan = fetch(view, EntityKind::WarrantyPolicy, wid)?;
    let months = plan.int_attr("duration_months").unwrap_or(0).max(0) as u32;
    let start = order.str_attr("order_date").and_then(clock::parse_date);
    let expires = start.map(|d| clock::add_months(d, months));
    let (covered, reason) = match order.str_attr("status") {
        Some("cancelled") => (false, "order-cancelled"),
        _ if str_list(order, "returned_product_ids").contains(&pid.as_str()) => {
            (false, "item-returned")
        }
        _ => match expires {
            Some(e) if clock::today() <= e => (true, "in-warranty"),
            Some(_) => (false, "warranty-expired"),
            None => (false, "order-date-unknown"),
        },
    };
    Ok(json!({
        "order_id": order.id.local,
        "product_id": pid,
        "covered": covered,
        "reason": reason,
        "expires_on": expires.map(clock::fmt_date),
        "warranty_policy_id": wid,
        "policy_name": plan.str_attr("name"),
    }))
}

pub struct Eligibility {
    pub eligible: bool,
    pub reason: &'static str,
    pub window_days: i64,
    pub delivered: Option<NaiveDate>,
    pub deadline: Option<NaiveDate>,
}

impl Eligibility {
    fn to_json(&self, order: &str, product: &str) -> Value {
        json!({
            "order_id": order,
            "product_id": product,
            "eligible": self.eligible,
            "reason": self.reason,
            "window_days": self.window_days,
            "delivered_date": self.delivered.map(clock::fmt_date),
            "deadline": self.deadline.map(clock::fmt_date),
        })
    }
}

/// Return window = current returns policy days + the customer's tier bonus,
/// counted from the shipment's delivered date.
pub fn return_eligibility(view: &dyn WorldView, order: &Entity, pid: &str) -> Eligibility {
    let base = current_policy(view, "returns")
        .and_then(|p| p.int_attr("return_window_days"))
        .unwrap_or(DEFAULT_RETURN_WINDOW_DAYS);
    let bonus = order
        .str_attr("customer_id")
        .and_then(|c| view.get(&EntityId::new(EntityKind::Customer, c)))
        .and_then(|c| c.str_attr("loyalty_tier_id"))
        .and_then(|t| view.get(&EntityId::new(EntityKind::LoyaltyTier, t)))
        .and_then(|t| t.int_attr("return_window_bonus_days"))
        .unwrap_or(0);
    let window_days = base + bonus;
    let delivered = shipment_for(view, &order.id.local)
        .and_then(|s| s.str_attr("delivered_date"))
        .and_then(clock::parse_date);
    let deadline = delivered.map(|d| d + Duration::days(window_days));
    let status = order.str_attr("status").unwrap_or("");
    let reason = if status == "cancelled" {
        "order-cancelled"
    } else if str_list(order, "returned_product_ids").contains(&pid) {
        "already-returned"
    } else if status != "delivered" && status != "returned" {
        "not-delivered"
    } else {
        match deadline {
            None => "delivery-date-unknown",
            Some(d) if clock::today() > d => "window-expired",
            Some(_) => "within-window",
        }
    };
    Eligibility {
        eligible: reason == "within-window",
        reason,
        window_days,
        delivered,
        deadline,
    }
}

fn check_return_eligibility(view: &dyn WorldView, a: Args<'_>) -> Outcome {
    let (order, pid) = order_with_product(view, a)?;
    Ok(return_eligibility(view, order, &pid).to_json(&order.id.local, &pid))
}

fn restock(view: &dyn WorldView, product: &str, qty: i64, now: &str, out: &mut Vec<Mutation>) {
    if let Some(level) = view
        .entities_of(EntityKind::InventoryLevel)
        .into_iter()
        .find(|l| l.str_attr("product_id") == Some(product))
    {
        let have = level.int_attr("quantity").unwrap_or(0);
        out.push(Mutation::set(level.id.clone(), "quantity", have + qty));
        out.push(Mutation::set(level.id.clone(), "updated_at", now));
    }
}

fn process_return(view: &dyn WorldView, a: Args<'_>) -> WriteOutcome {
    let (order, pid) = order_with_product(view, a)?;
    let e = return_eligibility(view, order, &pid);
    if !e.eligible {
        let msg = match (e.reason, e.deadline) {
            ("window-expired", Some(d)) => format!(
                "return window of {} days closed on {}",
                e.window_days,
                clock::fmt_date(d)
            ),
            (r, _) => format!("return refused: {r}"),
        };
        return Err(refuse(e.reason, msg));
    }
    let items = order_items(order);
    let (qty, line): (i64, i64) = items
        .iter()
        .filter(|(p, _, _)| *p == pid)
        .fold((0, 0), |(q, l), (_, iq, unit)| (q + iq, l + iq * unit));
    let subtotal = order.int_attr("subtotal_cents").unwrap_or(0);
    let discount = order.int_attr("discount_cents").unwrap_or(0);
    let share = if subtotal > 0 {
        discount * line / subtotal
    } else {
        0
    };
    let refund = line - share;

    let mut returned: Vec<String> = str_list(order, "returned_product_ids")
        .into_iter()
        .map(String::from)
        .collect();
    returned.push(pid.clone());
    let status = "returned";
    let now = now_string();
    let id = order.id.clone();
    let mut batch = vec![
        Mutation::set(id.clone(), "returned_product_ids", json!(returned)),
        Mutation::set(
            id.clone(),
            "refunded_cents",
            order.int_attr("refunded_cents").unwrap_or(0) + refund,
        ),
        Mutation::set(id.clone(), "status", status),
        Mutation::set(id.clone(), "updated_at", now.as_str()),
    ];
    restock(view, &pid, qty, &now, &mut batch);
    Ok((
        json!({
            "order_id": id.local,
            "product_id": pid,
            "quantity": qty,
            "refund_cents": refund,
            "order_status": status,
        }),
        batch,
    ))
}

fn apply_promotion(view: &dyn WorldView, a: Args<'_>) -> WriteOutcome {
    let order = fetch(view, EntityKind::Order, a.req("order_id"))?;
    let status = order.str_attr("status").unwrap_or("");
    if status != "pending" && status != "processing" {
        return Err(refuse(
            "order-not-modifiable",
            format!(
                "order {} is {status}; promotions apply only before shipping",
                order.id.local
            ),
        ));
    }
    if order.str_attr("promotion_id").is_some() {
        return Err(refuse(
            "promotion-already-applied",
            "order already carries a promotion",
        ));
    }
    let code = a.req("code").trim();
    let promo = view
        .entities_of(EntityKind::Promotion)
        .into_iter()
        .find(|p| {
            p.str_attr("code")
                .is_some_and(|c| c.eq_ignore_ascii_case(code))
        })
        .ok_or_else(|| refuse("unknown-code", format!("no promotion with code {code}")))?;
    let today = clock::fmt_date(clock::today());
    let active = promo
        .str_attr("start_date")
        .is_some_and(|s| s <= today.as_str())
        && promo
            .str_attr("end_date")
            .is_some_and(|e| today.as_str() <= e);
    if !active {
        return Err(refuse(
            "promotion-inactive",
            format!(
                "promotion {code} ran {} to {}",
                promo.str_attr("start_date").unwrap_or("?"),
                promo.str_attr("end_date").unwrap_or("?")
            ),
        ));
    }
    let subtotal = order.int_attr("subtotal_cents").unwrap_or(0);
    let min = promo.int_attr("min_subtotal_cents").unwrap_or(0);
    if subtotal < min {
        return Err(refuse(
            "below-minimum",
            format!("subtotal {subtotal} cents is below the {min} cent minimum"),
        ));
    }
    let base = match promo.str_attr("category") {
        None => subtotal,
        Some(cat) => {
            let eligible: i64 = order_items(order)
                .iter()
                .filter(|(p, _, _)| {
                    view.get(&EntityId::new(EntityKind::Product, *p))
                        .and_then(|e| e.str_attr("category"))
                        == Some(cat)
                })
                .map(|(_, q, u)| q * u)
                .sum();
            if eligible == 0 {
                return Err(refuse(
                    "no-eligible-items",
                    format!("order has no {cat} items"),
                ));
            }
            eligible
        }
    };
    let discount = base * promo.int_attr("discount_percent").unwrap_or(0) / 100;
    let total = subtotal - discount;
    let id = order.id.clone();
    let batch = vec![
        Mutation::set(id.clone(), "promotion_id", promo.id.local.as_str()),
        Mutation::set(id.clone(), "discount_cents", discount),
        Mutation::set(id.clone(), "total_cents", total),
        Mutation::set(id.clone(), "updated_at", now_string()),
    ];
    Ok((
        json!({"order_id": id.local, "promotion_id": promo.id.local,
               "discount_cents": discount, "total_cents": total}),
        batch,
    ))
}

fn cancel_order(view: &dyn WorldView, a: Args<'_>) -> WriteOutcome {
    let order = fetch(view, EntityKind::Order, a.req("order_id"))?;
    let status = order.str_attr("status").unwrap_or("");
    if status != "pending" && status != "processing" {
        return Err(refuse(
            "order-not-cancellable",
            format!(
                "order {} is {status}; only pending or processing orders can be cancelled",
                order.id.local
            ),
        ));
    }
    let total = order.int_attr("total_cents").unwrap_or(0);
    let now = now_string();
    let id = order.id.clone();
    let mut batch = vec![
        Mutation::set(id.clone(), "status", "cancelled"),
        Mutation::set(id.clone(), "refunded_cents", total),
        Mutation::set(id.clone(), "updated_at", now.as_str()),
    ];
    for (p, q, _) in order_items(order) {
        restock(view, p, q, &now, &mut batch);
    }
    Ok((
        json!({"order_id": id.local, "status": "cancelled", "refund_cents": total}),
        batch,
    ))
}

fn update_ticket_status(view: &dyn WorldView, a: Args<'_>) -> WriteOutcome {
    let t = fetch(view, EntityKind::SupportTicket, a.req("ticket_id"))?;
    let prev = t.str_attr("status").unwrap_or("").to_string();
    let next = a.req("status");
    if prev == "closed" && next != "closed" {
        return Err(refuse(
            "ticket-closed",
            format!("ticket {} is closed", t.id.local),
        ));
    }
    let batch = vec![
        Mutation::set(t.id.clone(), "status", next),
        Mutation::set(t.id.clone(), "updated_at", now_string()),
    ];
    Ok((
        json!({"ticket_id": t.id.local, "previous_status": prev, "status": next}),
        batch,
    ))
}

fn add_ticket_note(view: &dyn WorldView, a: Args<'_>) -> WriteOutcome {
    let t = fetch(view, EntityKind::SupportTicket, a.req("ticket_id"))?;
    let mut notes: Vec<String> = str_list(t, "notes").into_iter().map(String::from).collect();
    notes.push(a.req("note").to_string());
    let count = notes.len();
    let batch = vec![
        Mutation::set(t.id.clone(), "notes", json!(notes)),
        Mutation::set(t.id.clone(), "updated_at", now_string()),
    ];
    Ok((json!({"ticket_id": t.id.local, "note_count": count}), batch))
}

fn send_customer_message(view: &dyn WorldView, a: Args<'_>) -> WriteOutcome {
    let c = fetch(view, EntityKind::Customer, a.req("customer_id"))?;
    let mut log: Vec<String> = str_list(c, "contact_log")
        .into_iter()
        .map(String::from)
        .collect();
    log.push(format!(
        "{} | {} | {}",
        now_string(),
        a.req("subject"),
        a.req("body")
    ));
    let size = log.len();
    let batch = vec![Mutation::set(c.id.clone(), "contact_log", json!(log))];
    Ok((
        json!({"customer_id": c.id.local, "delivered": true, "contact_log_size": size}),
        batch,
    ))
}
