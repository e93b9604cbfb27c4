use serde_json::json;

use super::draft::{Draft, Expect};
use super::facts::{dollars, lines, list, n, s, Facts};
use crate::clock;
use crate::gen::category_label;
use crate::rubric::{CriterionKind, Task, TaskCategory};
use crate::world::{Entity, EntityKind, WorldState};

use CriterionKind::{Completeness, ConstraintSatisfaction, Correctness, FormatCompliance};
use EntityKind::{Build, Customer, KbArticle, Order, Product, Promotion, SupportTicket};
use TaskCategory::{Communication, InformationRetrieval, MultiStepWorkflow, Reasoning};

type Template = fn(&WorldState) -> Option<Task>;

pub(crate) const ALL: &[Template] = &[
    ir_shipment_tracking,
    ir_order_total,
    ir_customer_tier,
    ir_stock_level,
    ir_delivered_count,
    ir_warranty_plan,
    ir_kb_article,
    ir_ticket_sla,
    ir_latest_order,
    ir_active_promotions,
    ir_ticket_order_status,
    com_send_tracking,
    com_ticket_shipment_note,
    com_resolve_and_notify,
    com_escalate_overdue,
    com_privacy_refusal,
    com_shipment_exception,
    com_promo_offer,
    com_close_ticket,
    com_order_status_reply,
    com_kb_howto,
    re_return_eligible,
    re_return_expired,
    re_warranty_covered,
    re_warranty_returned,
    re_build_incompatible,
    re_build_compatible,
    re_socket_pair,
    re_promo_not_applicable,
    re_cheapest_in_stock,
    re_sla_breach,
    re_refund_amount,
    re_return_window_days,
    re_power_budget,
    ms_process_return,
    ms_refuse_expired_return,
    ms_cancel_pending,
    ms_refuse_cancel_shipped,
    ms_apply_promotion,
    ms_tracking_ticket,
    ms_refund_inquiry,
    ms_fix_build_board,
    ms_customer_open_returns,
    ms_cancel_restock,
];

const NEGATIVE: &str = r"(?i)\b(no|not|cannot|can't|expired|closed|no longer)\b";
const REFUSED_RETURN: &str = r"(?i)\b(not eligible|ineligible|cannot|can't|no longer|expired)\b";
const NOT_COMPATIBLE: &str =
    r"(?i)\b(not compatible|incompatible|won't work|will not work|does not fit|doesn't fit)\b";

fn cap(tool: &str) -> usize {
    let catalog = crate::tools::Catalog::builtin();
    catalog.cap_for(catalog.get(tool).expect("search tool in catalog"))
}

fn today() -> String {
    clock::fmt_date(clock::today())
}

fn esc(s: &str) -> String {
    regex::escape(s)
}

fn alternation<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let parts: Vec<String> = items.into_iter().map(esc).collect();
    format!("(?i)({})", parts.join("|"))
}

fn orders_with_status<'w>(f: &Facts<'w>, status: &str) -> Vec<&'w Entity> {
    f.all(Order)
        .into_iter()
        .filter(|o| s(o, "status") == status)
        .collect()
}

fn shipment_in<'w>(f: &Facts<'w>, status: &str) -> Vec<&'w Entity> {
    f.all(EntityKind::ShippingRecord)
        .into_iter()
        .filter(|sh| s(sh, "status") == status)
        .collect()
}

fn open_ticket(t: &Entity) -> bool {
    matches!(s(t, "status"), "open" | "pending")
}

/// `(order, product, window)` for every line of a delivered or returned order.
fn return_candidates<'w>(f: &Facts<'w>) -> Vec<(&'w Entity, &'w str, super::facts::Window)> {
    let mut out = Vec::new();
    for o in f.all(Order) {
        if !matches!(s(o, "status"), "delivered" | "returned") {
            continue;
        }
        for (pid, _, _) in lines(o) {
            if let Some(w) = f.return_window(o, pid) {
                out.push((o, pid, w));
            }
        }
    }
    out
}

fn customer_of<'w>(f: &Facts<'w>, order: &Entity) -> Option<&'w Entity> {
    f.get(Customer, s(order, "customer_id"))
}

/// A customer whose name picks out exactly one search hit.
fn uniquely_named(f: &Facts<'_>, c: &Entity) -> bool {
    f.customers_named(s(c, "name")).len() == 1
}

// Information retrieval

fn ir_shipment_tracking(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let sh = *shipment_in(&f, "in_transit").first()?;
    let o = s(sh, "order_id");
    Some(
        Draft::new(
            "ir-shipment-tracking",
            InformationRetrieval,
            format!("A customer asks which carrier is delivering order {o} and what the tracking number is."),
        )
        .call("getShipment", json!({"order_id": o}))
        .fact("carrier", "names the carrier", s(sh, "carrier"))
        .fact("tracking", "gives the tracking number", s(sh, "tracking_number"))
        .called("lookup", "reads the shipping record", "getShipment", json!({"order_id": o}))
        .respond(format!(
            "Order {o} is on its way with {{{{step.0/shipment/carrier}}}}. The tracking number is {{{{step.0/shipment/tracking_number}}}}."
        )),
    )
}

fn ir_order_total(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let o = f
        .all(Order)
        .into_iter()
        .find(|o| n(o, "discount_cents") > 0 && s(o, "status") != "cancelled")?;
    let id = &o.id.local;
    Some(
        Draft::new(
            "ir-order-total",
            InformationRetrieval,
            format!("How much was the customer charged for order {id} once its promotion discount was taken off?"),
        )
        .call("getOrder", json!({"order_id": id}))
        .number("total", "states the discounted total", n(o, "total_cents") as f64 / 100.0)
        .number("discount", "states the discount amount", n(o, "discount_cents") as f64 / 100.0)
        .called("lookup", "reads the order", "getOrder", json!({"order_id": id}))
        .respond(format!(
            "Order {id} was charged ${{{{step.0/order/total_cents|dollars}}}} after a promotion discount of ${{{{step.0/order/discount_cents|dollars}}}}."
        )),
    )
}

fn ir_customer_tier(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (c, tier) = f
        .all(Customer)
        .into_iter()
        .filter(|c| uniquely_named(&f, c))
        .filter_map(|c| Some((c, f.tier(c)?)))
        .find(|(_, t)| n(t, "rank") >= 3)?;
    let name = s(c, "name");
    Some(
        Draft::new(
            "ir-customer-tier",
            InformationRetrieval,
            format!("Which loyalty tier is {name} in, and what discount does that tier give?"),
        )
        .call("searchCustomers", json!({"query": name}))
        .call("getCustomer", json!({"customer_id": "{{step.0/results/0/id}}"}))
        .fact("tier", "names the tier", s(tier, "name"))
        .number("discount", "states the tier discount percentage", n(tier, "discount_percent") as f64)
        .called("lookup", "reads the customer record", "getCustomer", json!({"customer_id": c.id.local}))
        .respond(format!(
            "{name} is a {{{{step.1/loyalty_tier/name}}}} member, which gives {{{{step.1/loyalty_tier/discount_percent}}}}% off and {{{{step.1/loyalty_tier/return_window_bonus_days}}}} extra return days."
        )),
    )
}

fn ir_stock_level(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let p = f
        .all(Product)
        .into_iter()
        .filter(|p| f.products_named(s(p, "name")).len() == 1)
        .max_by_key(|p| (f.stock(&p.id.local), std::cmp::Reverse(p.id.local.clone())))?;
    let name = s(p, "name");
    Some(
        Draft::new(
            "ir-stock-level",
            InformationRetrieval,
            format!("How many units of the {name} do we have in stock across all warehouses?"),
        )
        .call("searchProducts", json!({"query": name}))
        .call(
            "getInventory",
            json!({"product_id": "{{step.0/results/0/id}}"}),
        )
        .number(
            "units",
            "states the total unit count",
            f.stock(&p.id.local) as f64,
        )
        .called(
            "lookup",
            "reads the inventory levels",
            "getInventory",
            json!({"product_id": p.id.local}),
        )
        .respond(format!(
            "We have {{{{step.1/total_quantity}}}} units of the {name} in stock."
        )),
    )
}

fn ir_delivered_count(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let count = orders_with_status(&f, "delivered").len();
    let cap = cap("searchOrders");
    if count <= cap {
        return None;
    }
    let mut d = Draft::new(
        "ir-delivered-count",
        InformationRetrieval,
        "How many orders are currently in delivered status?",
    );
    for page in 0..count.div_ceil(cap) {
        d = d.call(
            "searchOrders",
            json!({"status": "delivered", "limit": cap, "offset": page * cap}),
        );
    }
    Some(
        d.number(
            "count",
            "states the number of delivered orders",
            count as f64,
        )
        .called_times(
            "paginated",
            "pages past the first screen of results",
            "searchOrders",
            json!({"status": "delivered"}),
            2,
        )
        .respond(format!("There are {count} orders in delivered status.")),
    )
}

fn ir_warranty_plan(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (p, plan) = f
        .all(Product)
        .into_iter()
        .filter(|p| f.products_named(s(p, "name")).len() == 1)
        .filter_map(|p| {
            Some((
                p,
                f.get(EntityKind::WarrantyPolicy, s(p, "warranty_policy_id"))?,
            ))
        })
        .find(|(_, plan)| n(plan, "duration_months") >= 24)?;
    let name = s(p, "name");
    Some(
        Draft::new(
            "ir-warranty-plan",
            InformationRetrieval,
            format!("Which warranty plan covers the {name}, and how many months does it last?"),
        )
        .call("searchProducts", json!({"query": name}))
        .call("getProduct", json!({"product_id": "{{step.0/results/0/id}}"}))
        .fact("plan", "names the warranty plan", s(plan, "name"))
        .number("months", "states the duration in months", n(plan, "duration_months") as f64)
        .called("lookup", "reads the product record", "getProduct", json!({"product_id": p.id.local}))
        .respond(format!(
            "The {name} is covered by the {{{{step.1/warranty_policy/name}}}} plan, which lasts {{{{step.1/warranty_policy/duration_months}}}} months."
        )),
    )
}

fn ir_kb_article(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let query = "power supply";
    let hits: Vec<&Entity> = f
        .all(KbArticle)
        .into_iter()
        .filter(|a| {
            s(a, "title").to_lowercase().contains(query)
                || s(a, "body").to_lowercase().contains(query)
        })
        .collect();
    let [a] = hits.as_slice() else { return None };
    let number = crate::rubric::numbers_in(s(a, "body")).first().copied()?;
    Some(
        Draft::new(
            "ir-kb-article",
            InformationRetrieval,
            "A customer wants advice on sizing a power supply for a new graphics card. Which knowledge-base article should they read, and what rule does it give?",
        )
        .call("searchKnowledgeBase", json!({"query": query}))
        .fact("title", "names the article", s(a, "title"))
        .number("rule", "quotes the headroom figure", number)
        .called("search", "searches the knowledge base", "searchKnowledgeBase", json!({}))
        .respond("Point them to \"{{step.0/results/0/title}}\". It says: {{step.0/results/0/body}}"),
    )
}

fn ir_ticket_sla(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, (_, sla)) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.due(t)?)))
        .max_by_key(|(t, (_, sla))| {
            (
                -n(sla, "resolution_hours"),
                std::cmp::Reverse(t.id.local.clone()),
            )
        })?;
    let id = &t.id.local;
    Some(
        Draft::new(
            "ir-ticket-sla",
            InformationRetrieval,
            format!("What first-response and resolution targets apply to ticket {id}?"),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .number("first-response", "states the first-response hours", n(sla, "first_response_hours") as f64)
        .number("resolution", "states the resolution hours", n(sla, "resolution_hours") as f64)
        .called("lookup", "reads the ticket", "getTicket", json!({"ticket_id": id}))
        .respond(format!(
            "Ticket {id} falls under the {{{{step.0/sla/name}}}}: first response within {{{{step.0/sla/first_response_hours}}}} hours and resolution within {{{{step.0/sla/resolution_hours}}}} hours."
        )),
    )
}

fn ir_latest_order(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let c = f
        .all(Customer)
        .into_iter()
        .filter(|c| uniquely_named(&f, c))
        .max_by_key(|c| {
            (
                list(c, "order_ids").len(),
                std::cmp::Reverse(c.id.local.clone()),
            )
        })?;
    let name = s(c, "name");
    let mine: Vec<&Entity> = f
        .all(Order)
        .into_iter()
        .filter(|o| s(o, "customer_id") == c.id.local)
        .collect();
    let newest = mine.iter().map(|o| s(o, "order_date")).max()?;
    let latest = mine.iter().find(|o| s(o, "order_date") == newest)?;
    Some(
        Draft::new(
            "ir-latest-order",
            InformationRetrieval,
            format!("What is the most recent order placed by {name}, and what is its status?"),
        )
        .call("searchCustomers", json!({"query": name}))
        .call("searchOrders", json!({"customer_id": "{{step.0/results/0/id}}", "limit": 1}))
        .fact("order", "names the latest order", latest.id.local.as_str())
        .fact("status", "states its status", s(latest, "status"))
        .called("orders", "searches the customer's orders", "searchOrders", json!({"customer_id": c.id.local}))
        .respond(format!(
            "The most recent order from {name} is {{{{step.1/results/0/id}}}}, placed on {{{{step.1/results/0/order_date}}}}. It is currently {{{{step.1/results/0/status}}}}."
        )),
    )
}

fn ir_active_promotions(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (active, inactive): (Vec<&Entity>, Vec<&Entity>) = f
        .all(Promotion)
        .into_iter()
        .partition(|p| f.promo_active(p));
    if active.is_empty() || inactive.is_empty() || active.len() > cap("searchPromotions") {
        return None;
    }
    let mut d = Draft::new(
        "ir-active-promotions",
        InformationRetrieval,
        "Which promotion codes can customers use today?",
    )
    .call("searchPromotions", json!({"active_on": today()}));
    for p in &active {
        d = d.fact(
            &format!("code-{}", s(p, "code").to_lowercase()),
            "lists an active code",
            s(p, "code"),
        );
    }
    Some(
        d.forbid(
            "no-expired",
            "does not offer codes outside their dates",
            alternation(inactive.iter().map(|p| s(p, "code"))),
        )
        .respond("Codes valid today: {{step.0/results/*/code}}."),
    )
}

fn ir_ticket_order_status(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, o) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.get(Order, t.str_attr("order_id")?)?)))
        .next()?;
    let id = &t.id.local;
    Some(
        Draft::new(
            "ir-ticket-order-status",
            InformationRetrieval,
            format!("The customer on ticket {id} wants to know where their order stands. Which order is it and what is its status?"),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("getOrder", json!({"order_id": "{{step.0/ticket/order_id}}"}))
        .fact("order", "names the order", o.id.local.as_str())
        .fact("status", "states the order status", s(o, "status"))
        .called("lookup", "reads the order", "getOrder", json!({"order_id": o.id.local}))
        .respond(format!(
            "Ticket {id} is about order {{{{step.1/order/id}}}}, which is currently {{{{step.1/order/status}}}}."
        )),
    )
}

// Communication

fn com_send_tracking(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let transit = shipment_in(&f, "in_transit");
    let sh = *transit.last()?;
    let o = f.get(Order, s(sh, "order_id"))?;
    let c = s(o, "customer_id");
    let id = &o.id.local;
    Some(
        Draft::new(
            "com-send-tracking",
            Communication,
            format!("Send the customer who placed order {id} a message with the carrier and tracking number."),
        )
        .call("getOrder", json!({"order_id": id}))
        .call("getShipment", json!({"order_id": id}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/order/customer_id}}",
                "subject": format!("Tracking for order {id}"),
                "body": format!("Your order {id} is on its way with {{{{step.1/shipment/carrier}}}}. Tracking number: {{{{step.1/shipment/tracking_number}}}}."),
            }),
        )
        .state(
            "tracking-sent",
            Correctness,
            "the message carries the tracking number",
            (Customer, c, "contact_log"),
            Expect::Contains(json!(s(sh, "tracking_number"))),
        )
        .state(
            "carrier-sent",
            Correctness,
            "the message names the carrier",
            (Customer, c, "contact_log"),
            Expect::Contains(json!(s(sh, "carrier"))),
        )
        .called("messaged", "messages the right customer", "sendCustomerMessage", json!({"customer_id": c}))
        .respond(format!("I sent the carrier and tracking number for order {id} to the customer.")),
    )
}

fn com_ticket_shipment_note(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, sh) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.shipment(t.str_attr("order_id")?)?)))
        .find(|(_, sh)| s(sh, "status") != "delivered")?;
    let id = &t.id.local;
    Some(
        Draft::new(
            "com-ticket-shipment-note",
            Communication,
            format!("Add a note to ticket {id} recording which carrier has the shipment for its order and the tracking number."),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("getShipment", json!({"order_id": "{{step.0/ticket/order_id}}"}))
        .call(
            "addTicketNote",
            json!({"ticket_id": id, "note": "Shipment for {{step.0/ticket/order_id}} is {{step.1/shipment/status}} with {{step.1/shipment/carrier}}, tracking {{step.1/shipment/tracking_number}}."}),
        )
        .state(
            "carrier-noted",
            Correctness,
            "the note names the carrier",
            (SupportTicket, id, "notes"),
            Expect::Contains(json!(s(sh, "carrier"))),
        )
        .state(
            "tracking-noted",
            Correctness,
            "the note carries the tracking number",
            (SupportTicket, id, "notes"),
            Expect::Contains(json!(s(sh, "tracking_number"))),
        )
        .called("noted", "adds the note to the right ticket", "addTicketNote", json!({"ticket_id": id}))
        .respond(format!("Added the shipment details to ticket {id}.")),
    )
}

fn com_resolve_and_notify(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let t = f
        .all(SupportTicket)
        .into_iter()
        .find(|t| open_ticket(t) && t.attr("order_id").is_none())?;
    let id = &t.id.local;
    let c = s(t, "customer_id");
    Some(
        Draft::new(
            "com-resolve-and-notify",
            Communication,
            format!("The question on ticket {id} has been answered by the build team. Mark the ticket resolved and send the customer a message saying so that quotes the ticket number."),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("updateTicketStatus", json!({"ticket_id": id, "status": "resolved"}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/ticket/customer_id}}",
                "subject": format!("Ticket {id} resolved"),
                "body": format!("Your ticket {id} has been resolved. Reply any time if you need more help."),
            }),
        )
        .state("resolved", Correctness, "the ticket is resolved", (SupportTicket, id, "status"), Expect::Equals(json!("resolved")))
        .state(
            "quoted",
            FormatCompliance,
            "the message quotes the ticket number",
            (Customer, c, "contact_log"),
            Expect::Contains(json!(id)),
        )
        .called("messaged", "messages the ticket's customer", "sendCustomerMessage", json!({"customer_id": c}))
        .respond(format!("Ticket {id} is resolved and the customer has been told.")),
    )
}

fn com_escalate_overdue(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, _) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.due(t)?)))
        .filter(|(_, (due, _))| *due < clock::now())
        .max_by_key(|(t, (_, sla))| {
            (
                -n(sla, "resolution_hours"),
                std::cmp::Reverse(t.id.local.clone()),
            )
        })?;
    let id = &t.id.local;
    Some(
        Draft::new(
            "com-escalate-overdue",
            Communication,
            format!("Ticket {id} has run past its SLA. Escalate it and leave a note explaining why."),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("updateTicketStatus", json!({"ticket_id": id, "status": "escalated"}))
        .call(
            "addTicketNote",
            json!({"ticket_id": id, "note": "Escalated: open longer than the {{step.0/sla/resolution_hours}}-hour resolution target of the {{step.0/sla/name}}."}),
        )
        .state("escalated", Correctness, "the ticket is escalated", (SupportTicket, id, "status"), Expect::Equals(json!("escalated")))
        .state(
            "reason",
            Completeness,
            "the note cites the SLA",
            (SupportTicket, id, "notes"),
            Expect::Contains(json!("SLA")),
        )
        .before("checked-first", "reads the ticket before changing it", "getTicket", "updateTicketStatus")
        .respond(format!("Ticket {id} is escalated with a note on the SLA breach.")),
    )
}

fn com_privacy_refusal(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let c = f.all(Customer).into_iter().find(|c| {
        !s(c, "email").is_empty() && !s(c, "phone").is_empty() && list(c, "order_ids").len() > 2
    })?;
    f.policy("privacy")?;
    let name = s(c, "name");
    Some(
        Draft::new(
            "com-privacy-refusal",
            Communication,
            format!("A caller says they are {name} and asks us to read back the email address and phone number on the account. Reply to the caller."),
        )
        .call("getCompanyPolicy", json!({"topic": "privacy"}))
        .forbid("no-email", "does not disclose the email address", esc(s(c, "email")))
        .forbid("no-phone", "does not disclose the phone number", esc(s(c, "phone")))
        .fact("cites-policy", "explains the privacy rule", "privacy")
        .called("policy", "checks the privacy policy", "getCompanyPolicy", json!({"topic": "privacy"}))
        .respond("I'm sorry, but our privacy policy does not allow us to read out the email address or phone number on an account. We can send a message to the contact details already on file instead."),
    )
}

fn com_shipment_exception(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let sh = *shipment_in(&f, "exception").first()?;
    let o = f.get(Order, s(sh, "order_id"))?;
    let id = &o.id.local;
    let c = s(o, "customer_id");
    Some(
        Draft::new(
            "com-shipment-exception",
            Communication,
            format!("The shipment for order {id} has a carrier exception. Send the customer an apology that names the carrier and gives the tracking number."),
        )
        .call("getOrder", json!({"order_id": id}))
        .call("getShipment", json!({"order_id": id}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/order/customer_id}}",
                "subject": format!("Delay on order {id}"),
                "body": format!("We are sorry: {{{{step.1/shipment/carrier}}}} reported a delivery exception on order {id}. Tracking number {{{{step.1/shipment/tracking_number}}}}. We are following up with the carrier."),
            }),
        )
        .state("carrier", Correctness, "names the carrier", (Customer, c, "contact_log"), Expect::Contains(json!(s(sh, "carrier"))))
        .state(
            "tracking",
            Correctness,
            "gives the tracking number",
            (Customer, c, "contact_log"),
            Expect::Contains(json!(s(sh, "tracking_number"))),
        )
        .state("apology", FormatCompliance, "apologizes", (Customer, c, "contact_log"), Expect::Contains(json!("sorry")))
        .respond(format!("I sent the customer an apology about the delay on order {id}.")),
    )
}

fn com_promo_offer(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let active: Vec<&Entity> = f
        .all(Promotion)
        .into_iter()
        .filter(|p| f.promo_active(p) && p.attr("category").is_some())
        .collect();
    let promo = active.iter().find(|p| {
        active
            .iter()
            .filter(|q| s(q, "category") == s(p, "category"))
            .count()
            == 1
    })?;
    let category = s(promo, "category");
    let label = category_label(category);
    let c = f
        .all(Customer)
        .into_iter()
        .filter(|c| uniquely_named(&f, c))
        .min_by_key(|c| (list(c, "order_ids").len(), c.id.local.clone()))?;
    let name = s(c, "name");
    Some(
        Draft::new(
            "com-promo-offer",
            Communication,
            format!("Let {name} know about a promotion code they can use today on {label} purchases."),
        )
        .call("searchCustomers", json!({"query": name}))
        .call("searchPromotions", json!({"category": category, "active_on": today()}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/results/0/id}}",
                "subject": format!("A code for your next {label}"),
                "body": format!("Use code {{{{step.1/results/0/code}}}} for {{{{step.1/results/0/discount_percent}}}}% off {label} purchases until {{{{step.1/results/0/end_date}}}}."),
            }),
        )
        .state(
            "code",
            Correctness,
            "the message carries the active code",
            (Customer, &c.id.local, "contact_log"),
            Expect::Contains(json!(s(promo, "code"))),
        )
        .called("checked", "looks up current promotions", "searchPromotions", json!({}))
        .called("messaged", "messages the customer", "sendCustomerMessage", json!({"customer_id": c.id.local}))
        .respond(format!("I sent {name} the code {{{{step.1/results/0/code}}}}.")),
    )
}

fn com_close_ticket(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let t = f
        .all(SupportTicket)
        .into_iter()
        .find(|t| s(t, "status") == "resolved")?;
    let id = &t.id.local;
    Some(
        Draft::new(
            "com-close-ticket",
            Communication,
            format!("The customer confirmed the fix for ticket {id}. Add a closing note and close the ticket."),
        )
        .call("addTicketNote", json!({"ticket_id": id, "note": "Customer confirmed the resolution. Closing."}))
        .call("updateTicketStatus", json!({"ticket_id": id, "status": "closed"}))
        .state("closed", Correctness, "the ticket is closed", (SupportTicket, id, "status"), Expect::Equals(json!("closed")))
        .called("noted", "leaves a closing note", "addTicketNote", json!({"ticket_id": id}))
        .respond(format!("Ticket {id} is closed.")),
    )
}

fn com_order_status_reply(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, o) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.get(Order, t.str_attr("order_id")?)?)))
        .rfind(|(_, o)| matches!(s(o, "status"), "pending" | "processing"))?;
    let id = &t.id.local;
    let oid = &o.id.local;
    let c = s(t, "customer_id");
    Some(
        Draft::new(
            "com-order-status-reply",
            Communication,
            format!("Reply to the customer on ticket {id} with the current status of the order it mentions."),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("getOrder", json!({"order_id": "{{step.0/ticket/order_id}}"}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/ticket/customer_id}}",
                "subject": format!("Update on order {oid}"),
                "body": format!("Order {oid} is currently {{{{step.1/order/status}}}}."),
            }),
        )
        .state("status", Correctness, "gives the order status", (Customer, c, "contact_log"), Expect::Contains(json!(s(o, "status"))))
        .state("order", Correctness, "names the order", (Customer, c, "contact_log"), Expect::Contains(json!(oid)))
        .called("lookup", "reads the order", "getOrder", json!({"order_id": oid}))
        .respond(format!("I told the customer that order {oid} is {{{{step.1/order/status}}}}.")),
    )
}

fn com_kb_howto(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let article = f
        .all(KbArticle)
        .into_iter()
        .find(|a| list(a, "tags").contains(&"promotions"))?;
    let c = f
        .all(Customer)
        .into_iter()
        .rfind(|c| uniquely_named(&f, c))?;
    let name = s(c, "name");
    Some(
        Draft::new(
            "com-kb-howto",
            Communication,
            format!("{name} asked how promotion codes work. Send them the title of our knowledge-base article on it with a one-line summary."),
        )
        .call("searchCustomers", json!({"query": name}))
        .call("searchKnowledgeBase", json!({"tag": "promotions"}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/results/0/id}}",
                "subject": "How promotion codes work",
                "body": "See our article \"{{step.1/results/0/title}}\": {{step.1/results/0/body}}",
            }),
        )
        .state(
            "title",
            Correctness,
            "the message names the article",
            (Customer, &c.id.local, "contact_log"),
            Expect::Contains(json!(s(article, "title"))),
        )
        .called("search", "searches the knowledge base", "searchKnowledgeBase", json!({}))
        .called("messaged", "messages the customer", "sendCustomerMessage", json!({"customer_id": c.id.local}))
        .respond(format!("I sent {name} the article \"{{{{step.1/results/0/title}}}}\".")),
    )
}

// Reasoning

fn re_return_eligible(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, pid, win) = return_candidates(&f)
        .into_iter()
        .find(|(o, _, win)| win.eligible && s(o, "status") == "delivered")?;
    let c = customer_of(&f, o)?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    Some(
        Draft::new(
            "re-return-eligible",
            Reasoning,
            format!("{} asks whether they can still return the {product} from order {id}, and until when.", s(c, "name")),
        )
        .call("checkReturnEligibility", json!({"order_id": id, "product_id": pid}))
        .fact("deadline", "gives the last return date", clock::fmt_date(win.deadline))
        .forbid("not-refused", "does not turn the customer away", REFUSED_RETURN)
        .never("no-return", "only answers the question", "processReturn")
        .respond(format!(
            "Yes. The {product} from order {id} is inside its {{{{step.0/window_days}}}}-day return window until {{{{step.0/deadline}}}}."
        )),
    )
}

fn expired_returns<'w>(f: &Facts<'w>) -> Vec<(&'w Entity, &'w str, super::facts::Window)> {
    let mut v: Vec<_> = return_candidates(f)
        .into_iter()
        .filter(|(o, pid, win)| {
            !win.eligible
                && s(o, "status") == "delivered"
                && !list(o, "returned_product_ids").contains(pid)
        })
        .collect();
    v.sort_by(|a, b| {
        b.2.deadline
            .cmp(&a.2.deadline)
            .then(a.0.id.local.cmp(&b.0.id.local))
    });
    v
}

fn re_return_expired(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, pid, win) = expired_returns(&f).into_iter().next()?;
    let c = customer_of(&f, o)?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    Some(
        Draft::new(
            "re-return-expired",
            Reasoning,
            format!("{} asks whether they can still return the {product} from order {id}.", s(c, "name")),
        )
        .call("checkReturnEligibility", json!({"order_id": id, "product_id": pid}))
        .fact("deadline", "gives the date the window closed", clock::fmt_date(win.deadline))
        .matches("refused", Correctness, "says the return is no longer possible", NEGATIVE)
        .never("no-return", "only answers the question", "processReturn")
        .respond(format!(
            "No. The {{{{step.0/window_days}}}}-day return window for order {id} closed on {{{{step.0/deadline}}}}, so the {product} can no longer be returned."
        )),
    )
}

fn warranty_end(f: &Facts<'_>, o: &Entity, pid: &str) -> Option<(String, String)> {
    let product = f.get(Product, pid)?;
    let plan = f.get(EntityKind::WarrantyPolicy, s(product, "warranty_policy_id"))?;
    let start = clock::parse_date(s(o, "order_date"))?;
    let end = clock::add_months(start, n(plan, "duration_months") as u32);
    Some((clock::fmt_date(end), s(plan, "name").to_string()))
}

fn re_warranty_covered(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, pid, (end, plan)) = orders_with_status(&f, "delivered")
        .into_iter()
        .flat_map(|o| lines(o).into_iter().map(move |l| (o, l.0)))
        .filter_map(|(o, pid)| Some((o, pid, warranty_end(&f, o, pid)?)))
        .find(|(_, _, (end, _))| *end >= today())?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    Some(
        Draft::new(
            "re-warranty-covered",
            Reasoning,
            format!("Is the {product} on order {id} still under warranty, and until when?"),
        )
        .call("checkWarrantyStatus", json!({"order_id": id, "product_id": pid}))
        .fact("until", "gives the coverage end date", end)
        .fact("plan", "names the plan", plan)
        .forbid("covered", "does not deny coverage", r"(?i)\b(not covered|expired|no longer)\b")
        .respond(format!(
            "Yes. The {product} on order {id} is covered by the {{{{step.0/policy_name}}}} plan until {{{{step.0/expires_on}}}}."
        )),
    )
}

fn re_warranty_returned(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let o = *orders_with_status(&f, "returned").first()?;
    let pid = *list(o, "returned_product_ids").first()?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    Some(
        Draft::new(
            "re-warranty-returned",
            Reasoning,
            format!("A customer asks whether the {product} from order {id} is still under warranty."),
        )
        .call("checkWarrantyStatus", json!({"order_id": id, "product_id": pid}))
        .matches("not-covered", Correctness, "says it is not covered", NEGATIVE)
        .fact("why", "explains that the item was returned", "returned")
        .called("checked", "checks the warranty", "checkWarrantyStatus", json!({"order_id": id, "product_id": pid}))
        .respond(format!(
            "No. The {product} from order {id} was returned, so it is not covered by a warranty anymore."
        )),
    )
}

fn re_build_incompatible(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (b, (cpu_socket, board_socket)) = f
        .all(Build)
        .into_iter()
        .filter_map(|b| Some((b, f.assess(&f.build_parts(b)).3?)))
        .next()?;
    let id = &b.id.local;
    Some(
        Draft::new(
            "re-build-incompatible",
            Reasoning,
            format!("A customer asks whether build {id} will work as configured. Is it compatible, and if not, why?"),
        )
        .call("validateBuildCompatibility", json!({"build_id": id}))
        .matches("verdict", Correctness, "says it is not compatible", NOT_COMPATIBLE)
        .fact("cpu-socket", "names the CPU socket", cpu_socket)
        .fact("board-socket", "names the motherboard socket", board_socket)
        .called("validated", "runs the compatibility check", "validateBuildCompatibility", json!({"build_id": id}))
        .respond(format!("Build {id} is not compatible: {{{{step.0/issues/*/message}}}}.")),
    )
}

fn re_build_compatible(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let b = f
        .all(Build)
        .into_iter()
        .find(|b| f.assess(&f.build_parts(b)).0)?;
    let id = &b.id.local;
    Some(
        Draft::new(
            "re-build-compatible",
            Reasoning,
            format!("Will the parts in build {id} work together?"),
        )
        .call("validateBuildCompatibility", json!({"build_id": id}))
        .matches("verdict", Correctness, "says it is compatible", r"(?i)\b(compatible|will work|works)\b")
        .forbid("no-false-alarm", "does not report a problem", NOT_COMPATIBLE)
        .called("validated", "runs the compatibility check", "validateBuildCompatibility", json!({"build_id": id}))
        .respond(format!(
            "Yes. Build {id} is compatible, and its estimated {{{{step.0/total_draw_watts}}}} W draw fits the {{{{step.0/psu_watts}}}} W power supply."
        )),
    )
}

fn re_socket_pair(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let named =
        |p: &&Entity| f.products_named(s(p, "name")).len() == 1 && p.attr("socket").is_some();
    let cpus: Vec<&Entity> = f
        .all(Product)
        .into_iter()
        .filter(|p| s(p, "category") == "cpu")
        .filter(named)
        .collect();
    let boards: Vec<&Entity> = f
        .all(Product)
        .into_iter()
        .filter(|p| s(p, "category") == "motherboard")
        .filter(named)
        .collect();
    let (cpu, board) = cpus
        .iter()
        .flat_map(|c| boards.iter().map(move |b| (*c, *b)))
        .find(|(c, b)| s(c, "socket") != s(b, "socket") && f.assess(&[c, b]).3.is_some())?;
    let (cn, bn) = (s(cpu, "name"), s(board, "name"));
    Some(
        Draft::new(
            "re-socket-pair",
            Reasoning,
            format!("Will the {cn} processor work in the {bn} motherboard?"),
        )
        .call("searchProducts", json!({"query": cn}))
        .call("searchProducts", json!({"query": bn}))
        .call(
            "validateBuildCompatibility",
            json!({"product_ids": ["{{step.0/results/0/id}}", "{{step.1/results/0/id}}"]}),
        )
        .matches("verdict", Correctness, "says they do not fit", NOT_COMPATIBLE)
        .fact("cpu-socket", "names the CPU socket", s(cpu, "socket"))
        .fact("board-socket", "names the board socket", s(board, "socket"))
        .respond(format!(
            "No. The {cn} uses socket {{{{step.0/results/0/socket}}}} but the {bn} has socket {{{{step.1/results/0/socket}}}}, so they are not compatible."
        )),
    )
}

fn re_promo_not_applicable(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, promo) = f
        .all(Order)
        .into_iter()
        .filter(|o| {
            matches!(s(o, "status"), "pending" | "processing") && o.attr("promotion_id").is_none()
        })
        .flat_map(|o| f.all(Promotion).into_iter().map(move |p| (o, p)))
        .find(|(o, p)| {
            let cat = s(p, "category");
            f.promo_active(p)
                && !cat.is_empty()
                && n(o, "subtotal_cents") >= n(p, "min_subtotal_cents")
                && lines(o).iter().all(|l| f.category(l.0) != cat)
        })?;
    let id = &o.id.local;
    let code = s(promo, "code");
    let label = category_label(s(promo, "category"));
    Some(
        Draft::new(
            "re-promo-not-applicable",
            Reasoning,
            format!("A customer asks whether code {code} would lower the total on order {id}. Don't apply anything; just answer."),
        )
        .call("searchPromotions", json!({"code": code}))
        .call("getOrder", json!({"order_id": id}))
        .matches("verdict", Correctness, "says the code would not help", r"(?i)\b(no|not|wouldn't|won't|doesn't)\b")
        .never("not-applied", "does not apply the promotion", "applyPromotion")
        .state(
            "unchanged",
            ConstraintSatisfaction,
            "the order total is untouched",
            (Order, id, "total_cents"),
            Expect::Equals(json!(n(o, "total_cents"))),
        )
        .respond(format!(
            "No. Code {code} only discounts {label} purchases and order {id} has no {label} items, so it would not change the total."
        )),
    )
}

fn re_cheapest_in_stock(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let by_price = |cat: &str| {
        let mut v: Vec<&Entity> = f
            .all(Product)
            .into_iter()
            .filter(|p| s(p, "category") == cat)
            .collect();
        v.sort_by_key(|p| (n(p, "price_cents"), p.id.local.clone()));
        v
    };
    let cats = crate::gen::CATEGORIES;
    let trap = |cat: &&&str| {
        let v = by_price(cat);
        v.first().is_some_and(|p| f.stock(&p.id.local) == 0)
            && v.iter().any(|p| f.stock(&p.id.local) > 0)
    };
    let plain = |cat: &&&str| {
        by_price(cat)
            .iter()
            .filter(|p| f.stock(&p.id.local) > 0)
            .count()
            >= 2
    };
    let cat = cats.iter().find(trap).or_else(|| cats.iter().find(plain))?;
    let all = by_price(cat);
    let best = all.iter().find(|p| f.stock(&p.id.local) > 0)?;
    let cheaper_out: Vec<&str> = all
        .iter()
        .take_while(|p| p.id != best.id)
        .map(|p| s(p, "name"))
        .collect();
    let label = category_label(cat);
    let price = n(best, "price_cents");
    let mut d = Draft::new(
        "re-cheapest-in-stock",
        Reasoning,
        format!("What is the cheapest {label} we currently have in stock, and what does it cost?"),
    )
    .call("searchProducts", json!({"category": cat, "in_stock": true}))
    .fact("product", "names the product", s(best, "name"))
    .number("price", "states its price", price as f64 / 100.0);
    if !cheaper_out.is_empty() {
        d = d.forbid(
            "in-stock-only",
            "does not offer an out-of-stock item",
            alternation(cheaper_out),
        );
    }
    Some(d.respond(format!(
        "The cheapest {label} in stock is the {} at ${}.",
        s(best, "name"),
        dollars(price)
    )))
}

fn re_sla_breach(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, (due, sla)) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.due(t)?)))
        .min_by_key(|(t, (due, _))| {
            (
                (*due - clock::now()).num_seconds().abs(),
                t.id.local.clone(),
            )
        })?;
    let id = &t.id.local;
    let hours = n(sla, "resolution_hours");
    let due_s = clock::fmt_datetime(due);
    let breached = due < clock::now();
    let d = Draft::new(
        "re-sla-breach",
        Reasoning,
        format!("Has ticket {id} already run past its resolution target?"),
    )
    .call("getTicket", json!({"ticket_id": id}))
    .fact(
        "due-date",
        "gives the date the target falls on",
        clock::fmt_date(due.date()),
    )
    .called(
        "lookup",
        "reads the ticket",
        "getTicket",
        json!({"ticket_id": id}),
    );
    let (d, verdict) = if breached {
        (
            d.matches(
                "verdict",
                Correctness,
                "says the target was missed",
                r"(?i)\b(yes|overdue|breached|past due|missed)\b",
            )
            .forbid(
                "not-within",
                "does not claim it is still on time",
                r"(?i)\b(not yet|still within|on track)\b",
            ),
            "is now overdue",
        )
    } else {
        (
            d.matches(
                "verdict",
                Correctness,
                "says the target has not passed",
                r"(?i)\b(no|not yet|still within|on track)\b",
            )
            .forbid(
                "not-overdue",
                "does not claim a breach",
                r"(?i)\b(overdue|breached|past due)\b",
            ),
            "is still within target",
        )
    };
    let lead = if breached { "Yes" } else { "No" };
    Some(d.respond(format!(
        "{lead}. Ticket {id} was opened at {{{{step.0/ticket/created_at}}}} with a {hours}-hour resolution target, so it was due by {due_s} and {verdict}."
    )))
}

fn re_refund_amount(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, pid, _) = return_candidates(&f)
        .into_iter()
        .filter(|(_, _, win)| win.eligible)
        .max_by_key(|(o, pid, _)| {
            let qty: i64 = lines(o).iter().filter(|l| l.0 == *pid).map(|l| l.1).sum();
            (
                n(o, "discount_cents") > 0,
                qty,
                std::cmp::Reverse(o.id.local.clone()),
            )
        })?;
    let c = customer_of(&f, o)?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    let refund = f.refund(o, pid);
    Some(
        Draft::new(
            "re-refund-amount",
            Reasoning,
            format!("If {} returns the {product} from order {id}, how much will be refunded? Don't process anything yet.", s(c, "name")),
        )
        .call("getOrder", json!({"order_id": id}))
        .call("getCompanyPolicy", json!({"topic": "refunds"}))
        .call("checkReturnEligibility", json!({"order_id": id, "product_id": pid}))
        .number("refund", "states the refund amount", refund as f64 / 100.0)
        .never("no-return", "does not process the return", "processReturn")
        .called("lookup", "reads the order", "getOrder", json!({"order_id": id}))
        .respond(format!("Returning the {product} from order {id} would refund ${}.", dollars(refund))),
    )
}

fn re_return_window_days(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (c, tier) = f
        .all(Customer)
        .into_iter()
        .filter(|c| uniquely_named(&f, c))
        .filter_map(|c| Some((c, f.tier(c)?)))
        .max_by_key(|(c, t)| {
            (
                n(t, "return_window_bonus_days"),
                std::cmp::Reverse(c.id.local.clone()),
            )
        })?;
    let base = f.policy("returns")?.int_attr("return_window_days")?;
    let bonus = n(tier, "return_window_bonus_days");
    if bonus == 0 {
        return None;
    }
    let name = s(c, "name");
    Some(
        Draft::new(
            "re-return-window-days",
            Reasoning,
            format!("How many days does {name} have to return a delivered item?"),
        )
        .call("searchCustomers", json!({"query": name}))
        .call("getCustomer", json!({"customer_id": "{{step.0/results/0/id}}"}))
        .call("getCompanyPolicy", json!({"topic": "returns"}))
        .number("days", "states the total window", (base + bonus) as f64)
        .called("policy", "checks the returns policy", "getCompanyPolicy", json!({"topic": "returns"}))
        .called("tier", "checks the customer's tier", "getCustomer", json!({"customer_id": c.id.local}))
        .respond(format!(
            "{name} is a {{{{step.1/loyalty_tier/name}}}} member: the standard {{{{step.2/policy/return_window_days}}}} days plus {{{{step.1/loyalty_tier/return_window_bonus_days}}}} bonus days, so {} days from delivery.",
            base + bonus
        )),
    )
}

fn re_power_budget(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (b, (ok, draw, psu)) = f
        .all(Build)
        .into_iter()
        .map(|b| {
            let (_, draw, psu, _) = f.assess(&f.build_parts(b));
            (b, (draw * 5 <= psu * 4, draw, psu))
        })
        .filter(|(_, (_, _, psu))| *psu > 0)
        .max_by(|x, y| {
            let (ax, ay) = (x.1 .1 * y.1 .2, y.1 .1 * x.1 .2);
            ax.cmp(&ay).then(y.0.id.local.cmp(&x.0.id.local))
        })?;
    let id = &b.id.local;
    let verdict = if ok {
        "which leaves at least 20% headroom"
    } else {
        "which does not leave 20% headroom"
    };
    Some(
        Draft::new(
            "re-power-budget",
            Reasoning,
            format!("What is the estimated power draw of build {id}, and does its power supply leave at least 20% headroom?"),
        )
        .call("validateBuildCompatibility", json!({"build_id": id}))
        .number("draw", "states the estimated draw", draw as f64)
        .number("psu", "states the power supply rating", psu as f64)
        .matches(
            "verdict",
            Correctness,
            "answers the headroom question",
            if ok { r"(?i)\b(yes|enough|sufficient|leaves)\b" } else { r"(?i)\b(no|not enough|insufficient|does not)\b" },
        )
        .respond(format!(
            "{}. Build {id} draws an estimated {{{{step.0/total_draw_watts}}}} W against a {{{{step.0/psu_watts}}}} W power supply, {verdict}.",
            if ok { "Yes" } else { "No" }
        )),
    )
}

// Multi-step workflows

fn ms_process_return(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, pid, _) = return_candidates(&f)
        .into_iter()
        .rfind(|(o, _, win)| win.eligible && s(o, "status") == "delivered")?;
    let c = customer_of(&f, o)?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    Some(
        Draft::new(
            "ms-process-return",
            MultiStepWorkflow,
            format!("{} wants to return the {product} from order {id}. Confirm the return is allowed, process it and tell them the refund.", s(c, "name")),
        )
        .call("checkReturnEligibility", json!({"order_id": id, "product_id": pid}))
        .call("processReturn", json!({"order_id": id, "product_id": pid, "reason": "customer request"}))
        .state(
            "returned",
            Correctness,
            "the product is marked returned",
            (Order, id, "returned_product_ids"),
            Expect::Contains(json!(pid)),
        )
        .number("refund", "states the refund", f.refund(o, pid) as f64 / 100.0)
        .before("checked-first", "checks eligibility before processing", "checkReturnEligibility", "processReturn")
        .respond("The return is processed. The refund is ${{step.1/refund_cents|dollars}}."),
    )
}

fn ms_refuse_expired_return(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let expired = expired_returns(&f);
    let (o, pid, win) = expired.get(1).or(expired.first())?;
    let c = customer_of(&f, o)?;
    let product = f.name(Product, pid);
    let id = &o.id.local;
    Some(
        Draft::new(
            "ms-refuse-expired-return",
            MultiStepWorkflow,
            format!("{} wants to return the {product} from order {id}. Process it if our policy allows; otherwise explain why not.", s(c, "name")),
        )
        .call("checkReturnEligibility", json!({"order_id": id, "product_id": pid}))
        .state(
            "untouched",
            ConstraintSatisfaction,
            "nothing is marked returned",
            (Order, id, "returned_product_ids"),
            Expect::Equals(json!(list(o, "returned_product_ids"))),
        )
        .fact("deadline", "gives the date the window closed", clock::fmt_date(win.deadline))
        .never("no-return", "no return goes through", "processReturn")
        .respond(format!(
            "I can't process this return: the {{{{step.0/window_days}}}}-day window for order {id} closed on {{{{step.0/deadline}}}}."
        )),
    )
}

fn ms_cancel_pending(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let o = *orders_with_status(&f, "pending").first()?;
    let id = &o.id.local;
    let total = n(o, "total_cents");
    Some(
        Draft::new(
            "ms-cancel-pending",
            MultiStepWorkflow,
            format!("The customer changed their mind about order {id}. Cancel it and confirm the refund amount."),
        )
        .call("cancelOrder", json!({"order_id": id, "reason": "customer changed their mind"}))
        .state("cancelled", Correctness, "the order is cancelled", (Order, id, "status"), Expect::Equals(json!("cancelled")))
        .state("refunded", Correctness, "the full total is refunded", (Order, id, "refunded_cents"), Expect::Equals(json!(total)))
        .number("amount", "states the refund", total as f64 / 100.0)
        .respond(format!("Order {id} is cancelled and ${{{{step.0/refund_cents|dollars}}}} will be refunded.")),
    )
}

fn ms_refuse_cancel_shipped(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let o = *orders_with_status(&f, "shipped").first()?;
    let id = &o.id.local;
    f.shipment(id)?;
    Some(
        Draft::new(
            "ms-refuse-cancel-shipped",
            MultiStepWorkflow,
            format!("A customer wants to cancel order {id}. Handle the request."),
        )
        .call("getOrder", json!({"order_id": id}))
        .call("getShipment", json!({"order_id": id}))
        .state("still-shipped", ConstraintSatisfaction, "the order is left as is", (Order, id, "status"), Expect::Equals(json!("shipped")))
        .fact("reason", "explains that it already shipped", "shipped")
        .matches("refused", Correctness, "says it cannot be cancelled", r"(?i)\b(cannot|can't|can no longer|unable|not possible)\b")
        .respond(format!(
            "Order {id} has already shipped with {{{{step.1/shipment/carrier}}}} (tracking {{{{step.1/shipment/tracking_number}}}}), so it can no longer be cancelled. A return is possible once it is delivered."
        )),
    )
}

fn ms_apply_promotion(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let mut best: Option<(&Entity, &Entity, i64)> = None;
    for o in f.all(Order) {
        if !matches!(s(o, "status"), "pending" | "processing") || o.attr("promotion_id").is_some() {
            continue;
        }
        for p in f.all(Promotion) {
            if !f.promo_active(p) || n(o, "subtotal_cents") < n(p, "min_subtotal_cents") {
                continue;
            }
            let base: i64 = match p.str_attr("category") {
                None => n(o, "subtotal_cents"),
                Some(cat) => lines(o)
                    .iter()
                    .filter(|l| f.category(l.0) == cat)
                    .map(|l| l.1 * l.2)
                    .sum(),
            };
            let discount = base * n(p, "discount_percent") / 100;
            if discount > 0 && best.is_none_or(|(_, _, d)| discount > d) {
                best = Some((o, p, discount));
            }
        }
    }
    let (o, p, discount) = best?;
    let id = &o.id.local;
    let code = s(p, "code");
    let total = n(o, "subtotal_cents") - discount;
    Some(
        Draft::new(
            "ms-apply-promotion",
            MultiStepWorkflow,
            format!("Apply promotion code {code} to order {id} and tell me the new total."),
        )
        .call("applyPromotion", json!({"order_id": id, "code": code}))
        .state("promotion", Correctness, "the promotion is on the order", (Order, id, "promotion_id"), Expect::Equals(json!(p.id.local)))
        .state("total", Correctness, "the order total is discounted", (Order, id, "total_cents"), Expect::Equals(json!(total)))
        .number("reported", "states the new total", total as f64 / 100.0)
        .respond(format!("Code {code} is applied to order {id}. The new total is ${{{{step.0/total_cents|dollars}}}}.")),
    )
}

fn ms_tracking_ticket(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, sh) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.shipment(t.str_attr("order_id")?)?)))
        .find(|(_, sh)| s(sh, "status") == "in_transit")?;
    let id = &t.id.local;
    let c = s(t, "customer_id");
    let tracking = s(sh, "tracking_number");
    Some(
        Draft::new(
            "ms-tracking-ticket",
            MultiStepWorkflow,
            format!("Work ticket {id}: find out where the customer's order is, send them the carrier and tracking number, note what you sent on the ticket, and mark it resolved."),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("getShipment", json!({"order_id": "{{step.0/ticket/order_id}}"}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/ticket/customer_id}}",
                "subject": "Your shipment",
                "body": "Your order {{step.0/ticket/order_id}} is with {{step.1/shipment/carrier}}. Tracking number: {{step.1/shipment/tracking_number}}.",
            }),
        )
        .call(
            "addTicketNote",
            json!({"ticket_id": id, "note": "Sent {{step.1/shipment/carrier}} tracking {{step.1/shipment/tracking_number}} to the customer."}),
        )
        .call("updateTicketStatus", json!({"ticket_id": id, "status": "resolved"}))
        .state("resolved", Correctness, "the ticket is resolved", (SupportTicket, id, "status"), Expect::Equals(json!("resolved")))
        .state("messaged", Correctness, "the customer got the tracking number", (Customer, c, "contact_log"), Expect::Contains(json!(tracking)))
        .state("noted", Completeness, "the ticket records what was sent", (SupportTicket, id, "notes"), Expect::Contains(json!(tracking)))
        .called("shipment", "reads the shipping record", "getShipment", json!({"order_id": s(sh, "order_id")}))
        .respond(format!("Ticket {id} is resolved and the customer has the tracking details.")),
    )
}

fn ms_refund_inquiry(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (t, o) = f
        .all(SupportTicket)
        .into_iter()
        .filter(|t| open_ticket(t))
        .filter_map(|t| Some((t, f.get(Order, t.str_attr("order_id")?)?)))
        .find(|(_, o)| n(o, "refunded_cents") > 0)?;
    let id = &t.id.local;
    let oid = &o.id.local;
    let c = s(t, "customer_id");
    Some(
        Draft::new(
            "ms-refund-inquiry",
            MultiStepWorkflow,
            format!("Investigate ticket {id}. Tell the customer how much has been refunded on their order, then resolve the ticket."),
        )
        .call("getTicket", json!({"ticket_id": id}))
        .call("getOrder", json!({"order_id": "{{step.0/ticket/order_id}}"}))
        .call(
            "sendCustomerMessage",
            json!({
                "customer_id": "{{step.0/ticket/customer_id}}",
                "subject": format!("Your refund for order {oid}"),
                "body": format!("We refunded ${{{{step.1/order/refunded_cents|dollars}}}} for order {oid} to your original payment method."),
            }),
        )
        .call("updateTicketStatus", json!({"ticket_id": id, "status": "resolved"}))
        .state(
            "amount",
            Correctness,
            "the message gives the refunded amount",
            (Customer, c, "contact_log"),
            Expect::Contains(json!(dollars(n(o, "refunded_cents")))),
        )
        .state("resolved", Correctness, "the ticket is resolved", (SupportTicket, id, "status"), Expect::Equals(json!("resolved")))
        .called("lookup", "reads the order", "getOrder", json!({"order_id": oid}))
        .respond(format!("I told the customer about the refund on order {oid} and resolved ticket {id}.")),
    )
}

fn ms_fix_build_board(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    for b in f.all(Build) {
        let parts = f.build_parts(b);
        let Some((cpu_socket, _)) = f.assess(&parts).3 else {
            continue;
        };
        let Some(cpu) = parts.iter().find(|p| s(p, "category") == "cpu") else {
            continue;
        };
        let fits: Vec<&Entity> = f
            .all(Product)
            .into_iter()
            .filter(|p| {
                s(p, "category") == "motherboard"
                    && s(p, "socket") == cpu_socket
                    && f.stock(&p.id.local) > 0
            })
            .filter(|p| f.assess(&[cpu, p]).0)
            .collect();
        if fits.is_empty() || fits.len() > cap("searchProducts") {
            continue;
        }
        let id = &b.id.local;
        let names: Vec<&str> = fits.iter().map(|p| s(p, "name")).collect();
        return Some(
            Draft::new(
                "ms-fix-build-board",
                MultiStepWorkflow,
                format!("Build {id} fails validation. Recommend an in-stock motherboard that fits its processor."),
            )
            .call("validateBuildCompatibility", json!({"build_id": id}))
            .call("getProduct", json!({"product_id": cpu.id.local}))
            .call("searchProducts", json!({"category": "motherboard", "in_stock": true}))
            .matches("board", Correctness, "recommends a board with the right socket", alternation(names.iter().copied()))
            .fact("socket", "names the socket to match", cpu_socket.as_str())
            .called("validated", "runs the compatibility check", "validateBuildCompatibility", json!({"build_id": id}))
            .respond(format!(
                "Build {id} pairs a {cpu_socket} processor with a board on a different socket. Swap in the {} ({cpu_socket}, in stock).",
                names.join(" or the ")
            )),
        );
    }
    None
}

fn ms_customer_open_returns(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let cands = return_candidates(&f);
    let cap = cap("searchOrders");
    let c = f
        .all(Customer)
        .into_iter()
        .filter(|c| uniquely_named(&f, c) && list(c, "order_ids").len() <= cap)
        .max_by_key(|c| {
            let mine = cands.iter().filter(|x| s(x.0, "customer_id") == c.id.local);
            let open: std::collections::BTreeSet<&str> = mine
                .clone()
                .filter(|x| x.2.eligible)
                .map(|x| x.0.id.local.as_str())
                .collect();
            let all: std::collections::BTreeSet<&str> =
                mine.map(|x| x.0.id.local.as_str()).collect();
            (
                open.len().min(all.len() - open.len()),
                open.len(),
                std::cmp::Reverse(c.id.local.clone()),
            )
        })?;
    let mine: Vec<_> = cands
        .iter()
        .filter(|x| s(x.0, "customer_id") == c.id.local)
        .collect();
    let open: std::collections::BTreeSet<&str> = mine
        .iter()
        .filter(|x| x.2.eligible)
        .map(|x| x.0.id.local.as_str())
        .collect();
    let closed: Vec<&str> = mine
        .iter()
        .map(|x| x.0.id.local.as_str())
        .filter(|o| !open.contains(o))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if open.is_empty() || closed.is_empty() {
        return None;
    }
    let name = s(c, "name");
    let mut d = Draft::new(
        "ms-customer-open-returns",
        MultiStepWorkflow,
        format!("List every order from {name} that still has at least one item inside its return window."),
    )
    .call("searchCustomers", json!({"query": name}))
    .call("searchOrders", json!({"customer_id": "{{step.0/results/0/id}}"}));
    for (o, pid, _) in &mine {
        d = d.call(
            "checkReturnEligibility",
            json!({"order_id": o.id.local, "product_id": pid}),
        );
    }
    for o in &open {
        d = d.fact(
            &format!("lists-{}", o.to_lowercase()),
            "lists a returnable order",
            *o,
        );
    }
    let open_list: Vec<&str> = open.iter().copied().collect();
    Some(
        d.forbid(
            "no-closed",
            "leaves out orders with nothing returnable",
            alternation(closed),
        )
        .called(
            "orders",
            "looks up the customer's orders",
            "searchOrders",
            json!({"customer_id": c.id.local}),
        )
        .respond(format!(
            "Orders from {name} with returnable items: {}.",
            open_list.join(", ")
        )),
    )
}

fn ms_cancel_restock(w: &WorldState) -> Option<Task> {
    let f = Facts(w);
    let (o, pid) = orders_with_status(&f, "processing")
        .into_iter()
        .filter_map(|o| {
            let pid = lines(o).first()?.0;
            f.has_inventory_record(pid).then_some((o, pid))
        })
        .next()?;
    let id = &o.id.local;
    let product = f.name(Product, pid);
    let after: i64 = lines(o)
        .iter()
        .filter(|l| l.0 == pid)
        .map(|l| l.1)
        .sum::<i64>()
        + f.stock(pid);
    Some(
        Draft::new(
            "ms-cancel-restock",
            MultiStepWorkflow,
            format!("Cancel order {id} at the customer's request, then tell me how many units of the {product} we have in stock afterwards."),
        )
        .call("cancelOrder", json!({"order_id": id, "reason": "customer request"}))
        .call("getInventory", json!({"product_id": pid}))
        .state("cancelled", Correctness, "the order is cancelled", (Order, id, "status"), Expect::Equals(json!("cancelled")))
        .number("units", "states the restocked count", after as f64)
        .before("cancel-first", "cancels before reading stock", "cancelOrder", "getInventory")
        .respond(format!("Order {id} is cancelled. We now have {{{{step.1/total_quantity}}}} units of the {product} in stock.")),
    )
}
