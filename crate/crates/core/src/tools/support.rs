//! Helpers shared by the tool handlers.

use std::cmp::Ordering;

use serde_json::{Map, Value};

use crate::clock;
use crate::world::{Entity, EntityId, EntityKind, WorldView};

/// A refusal that reaches the agent as a `domain-error` result.
#[derive(Debug, Clone, PartialEq)]
pub struct Refusal {
    pub reason: &'static str,
    pub message: String,
}

pub fn refuse(reason: &'static str, message: impl Into<String>) -> Refusal {
    Refusal {
        reason,
        message: message.into(),
    }
}

/// Validated argument map. Accessors treat `null` as absent.
#[derive(Clone, Copy)]
pub struct Args<'a>(pub &'a Map<String, Value>);

impl<'a> Args<'a> {
    fn value(&self, k: &str) -> Option<&'a Value> {
        self.0.get(k).filter(|v| !v.is_null())
    }

    pub fn str(&self, k: &str) -> Option<&'a str> {
        self.value(k).and_then(Value::as_str)
    }

    /// Required string; validation guarantees presence.
    pub fn req(&self, k: &str) -> &'a str {
        self.str(k).unwrap_or("")
    }

    pub fn int(&self, k: &str) -> Option<i64> {
        self.value(k).and_then(Value::as_i64)
    }

    pub fn bool(&self, k: &str) -> Option<bool> {
        self.value(k).and_then(Value::as_bool)
    }

    pub fn list(&self, k: &str) -> Option<Vec<&'a str>> {
        self.value(k)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).collect())
    }
}

/// Entity as shown to agents: `id` plus its attributes, keys sorted.
pub fn record(e: &Entity) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(e.id.local.clone()));
    for (k, v) in &e.attributes {
        m.insert(k.clone(), v.clone());
    }
    Value::Object(m)
}

pub fn fetch<'v, V: WorldView + ?Sized>(
    view: &'v V,
    kind: EntityKind,
    local: &str,
) -> Result<&'v Entity, Refusal> {
    view.get(&EntityId::new(kind, local)).ok_or_else(|| {
        refuse(
            "not-found",
            format!("no {} with id {local}", kind.name().replace('_', " ")),
        )
    })
}

/// Lowercased with runs of whitespace collapsed to one space.
pub fn normalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn text_matches(query: &str, fields: &[&str]) -> bool {
    let q = normalize(query);
    q.is_empty() || fields.iter().any(|f| normalize(f).contains(&q))
}

pub fn str_list<'e>(e: &'e Entity, name: &str) -> Vec<&'e str> {
    e.attr(name)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default()
}

pub fn cmp_attr(a: &Entity, b: &Entity, name: &str) -> Ordering {
    let key = |e: &Entity| e.str_attr(name).unwrap_or("").to_string();
    key(a).cmp(&key(b))
}

/// Policy in effect today for `topic`: latest `effective_date` not after today,
/// lowest id on ties.
pub fn current_policy<'v, V: WorldView + ?Sized>(view: &'v V, topic: &str) -> Option<&'v Entity> {
    let today = clock::fmt_date(clock::today());
    view.entities_of(EntityKind::CompanyPolicy)
        .into_iter()
        .filter(|p| p.str_attr("topic") == Some(topic))
        .filter(|p| {
            p.str_attr("effective_date")
                .is_some_and(|d| d <= today.as_str())
        })
        .fold(None, |best: Option<&Entity>, p| match best {
            Some(b) if b.str_attr("effective_date") >= p.str_attr("effective_date") => Some(b),
            _ => Some(p),
        })
}

/// Line items of an order as `(product_id, quantity, unit_price_cents)`.
pub fn order_items(order: &Entity) -> Vec<(&str, i64, i64)> {
    order
        .attr("items")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|it| {
                    Some((
                        it.get("product_id")?.as_str()?,
                        it.get("quantity")?.as_i64()?,
                        it.get("unit_price_cents")?.as_i64()?,
                    ))
                })
                .collect()
        })
        .unwrap_or_default()
}

pub fn now_string() -> String {
    clock::fmt_datetime(clock::now())
}
