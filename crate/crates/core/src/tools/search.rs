//! Search tools. Each filters one kind, sorts by its declared key and returns
//! one page. Payloads carry only `results`: no totals, no has-more flag.

use std::cmp::Ordering;

use serde_json::{json, Value};

use super::support::{cmp_attr, order_items, record, str_list, text_matches, Args};
use crate::world::{Entity, EntityKind, WorldView};

pub struct Page {
    pub limit: usize,
    pub offset: usize,
}

impl Page {
    /// Caller limit clamped to `cap`; absent limit means `cap`.
    pub fn from_args(args: Args<'_>, cap: usize) -> Page {
        let limit = args
            .int("limit")
            .map_or(cap, |l| (l.max(1) as usize).min(cap));
        let offset = args.int("offset").map_or(0, |o| o.max(0) as usize);
        Page { limit, offset }
    }
}

fn page(mut hits: Vec<&Entity>, cmp: impl Fn(&Entity, &Entity) -> Ordering, p: &Page) -> Value {
    hits.sort_by(|a, b| cmp(a, b).then_with(|| a.id.local.cmp(&b.id.local)));
    let results: Vec<Value> = hits
        .into_iter()
        .skip(p.offset)
        .take(p.limit)
        .map(record)
        .collect();
    json!({ "results": results })
}

fn eq_filter(e: &Entity, args: Args<'_>, field: &str, arg: &str) -> bool {
    args.str(arg)
        .is_none_or(|want| e.str_attr(field) == Some(want))
}

fn desc<'a>(field: &'a str) -> impl Fn(&Entity, &Entity) -> Ordering + 'a {
    move |a, b| cmp_attr(b, a, field)
}

fn asc<'a>(field: &'a str) -> impl Fn(&Entity, &Entity) -> Ordering + 'a {
    move |a, b| cmp_attr(a, b, field)
}

pub fn search_orders<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::Order)
        .into_iter()
        .filter(|e| eq_filter(e, args, "customer_id", "customer_id"))
        .filter(|e| eq_filter(e, args, "status", "status"))
        .filter(|e| {
            args.str("product_id")
                .is_none_or(|pid| order_items(e).iter().any(|(p, _, _)| *p == pid))
        })
        .filter(|e| {
            let d = e.str_attr("order_date").unwrap_or("");
            args.str("date_from").is_none_or(|f| d >= f)
                && args.str("date_to").is_none_or(|t| d <= t)
        })
        .collect();
    page(hits, desc("order_date"), p)
}

fn total_stock<V: WorldView + ?Sized>(view: &V, product: &str) -> i64 {
    view.entities_of(EntityKind::InventoryLevel)
        .into_iter()
        .filter(|l| l.str_attr("product_id") == Some(product))
        .filter_map(|l| l.int_attr("quantity"))
        .sum()
}

pub fn search_products<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::Product)
        .into_iter()
        .filter(|e| {
            args.str("query").is_none_or(|q| {
                let f = |n| e.str_attr(n).unwrap_or("");
                text_matches(q, &[f("name"), f("brand"), f("sku"), f("description")])
            })
        })
        .filter(|e| eq_filter(e, args, "category", "category"))
        .filter(|e| {
            let price = e.int_attr("price_cents").unwrap_or(0);
            args.int("min_price_cents").is_none_or(|m| price >= m)
                && args.int("max_price_cents").is_none_or(|m| price <= m)
        })
        .filter(|e| {
            args.bool("in_stock")
                .is_none_or(|want| (total_stock(view, &e.id.local) > 0) == want)
        })
        .collect();
    page(hits, asc("name"), p)
}

pub fn search_builds<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::Build)
        .into_iter()
        .filter(|e| eq_filter(e, args, "customer_id", "customer_id"))
        .filter(|e| eq_filter(e, args, "status", "status"))
        .filter(|e| {
            args.str("product_id")
                .is_none_or(|pid| str_list(e, "product_ids").contains(&pid))
        })
        .collect();
    page(hits, desc("created_at"), p)
}

pub fn search_customers<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::Customer)
        .into_iter()
        .filter(|e| {
            args.str("query").is_none_or(|q| {
                let f = |n| e.str_attr(n).unwrap_or("");
                text_matches(q, &[f("name"), f("email")])
            })
        })
        .filter(|e| eq_filter(e, args, "loyalty_tier_id", "loyalty_tier_id"))
        .collect();
    page(hits, asc("name"), p)
}

pub fn search_tickets<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::SupportTicket)
        .into_iter()
        .filter(|e| eq_filter(e, args, "customer_id", "customer_id"))
        .filter(|e| eq_filter(e, args, "order_id", "order_id"))
        .filter(|e| eq_filter(e, args, "status", "status"))
        .filter(|e| eq_filter(e, args, "priority", "priority"))
        .collect();
    page(hits, desc("created_at"), p)
}

pub fn search_knowledge_base<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::KbArticle)
        .into_iter()
        .filter(|e| {
            args.str("query").is_none_or(|q| {
                let mut fields = vec![
                    e.str_attr("title").unwrap_or(""),
                    e.str_attr("body").unwrap_or(""),
                ];
                fields.extend(str_list(e, "tags"));
                text_matches(q, &fields)
            })
        })
        .filter(|e| {
            args.str("tag")
                .is_none_or(|t| str_list(e, "tags").contains(&t))
        })
        .collect();
    page(hits, asc("title"), p)
}

pub fn search_promotions<V: WorldView + ?Sized>(view: &V, args: Args<'_>, p: &Page) -> Value {
    let hits = view
        .entities_of(EntityKind::Promotion)
        .into_iter()
        .filter(|e| {
            args.str("code").is_none_or(|c| {
                e.str_attr("code")
                    .is_some_and(|have| have.eq_ignore_ascii_case(c.trim()))
            })
        })
        .filter(|e| eq_filter(e, args, "category", "category"))
        .filter(|e| {
            args.str("active_on").is_none_or(|d| {
                e.str_attr("start_date").is_some_and(|s| s <= d)
                    && e.str_attr("end_date").is_some_and(|x| d <= x)
            })
        })
        .collect();
    page(hits, desc("start_date"), p)
}
