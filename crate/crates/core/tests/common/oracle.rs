//! Brute-force search oracle over exported entity files.
//!
//! Reads `entities/<kind>.json` as plain JSON, filters with its own reading of
//! each search tool's parameters, sorts by the declared key with id as the tie
//! breaker, then slices. Shares no code with the tool handlers.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};

pub const SEARCH_TOOLS: [&str; 7] = [
    "searchOrders",
    "searchProducts",
    "searchBuilds",
    "searchCustomers",
    "searchTickets",
    "searchKnowledgeBase",
    "searchPromotions",
];

pub const CAP: usize = 10;

/// Raw records by kind name, each `{id, ...attributes}`.
pub struct Snapshot {
    pub kinds: BTreeMap<String, Vec<Map<String, Value>>>,
}

impl Snapshot {
    pub fn read(world_dir: &Path) -> Snapshot {
        let mut kinds = BTreeMap::new();
        for entry in std::fs::read_dir(world_dir.join("entities")).unwrap() {
            let path = entry.unwrap().path();
            let kind = path.file_stem().unwrap().to_string_lossy().to_string();
            let raw: Vec<Value> = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
            let records = raw
                .into_iter()
                .map(|r| {
                    let mut m = Map::new();
                    m.insert("id".into(), r["id"].clone());
                    for (k, v) in r["attributes"].as_object().unwrap() {
                        m.insert(k.clone(), v.clone());
                    }
                    m
                })
                .collect();
            kinds.insert(kind, records);
        }
        Snapshot { kinds }
    }

    pub fn of(&self, kind: &str) -> &[Map<String, Value>] {
        self.kinds.get(kind).map(Vec::as_slice).unwrap_or(&[])
    }

    fn stock(&self, product: &str) -> i64 {
        self.of("inventory_level")
            .iter()
            .filter(|l| s(l, "product_id") == product)
            .map(|l| l["quantity"].as_i64().unwrap_or(0))
            .sum()
    }
}

fn s<'a>(m: &'a Map<String, Value>, k: &str) -> &'a str {
    m.get(k).and_then(Value::as_str).unwrap_or("")
}

fn list<'a>(m: &'a Map<String, Value>, k: &str) -> Vec<&'a str> {
    m.get(k)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default()
}

fn arg<'a>(q: &'a Map<String, Value>, k: &str) -> Option<&'a Value> {
    q.get(k).filter(|v| !v.is_null())
}

fn arg_str<'a>(q: &'a Map<String, Value>, k: &str) -> Option<&'a str> {
    arg(q, k).and_then(Value::as_str)
}

fn folded(text: &str) -> String {
    let mut out = String::new();
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

fn text_hit(query: &str, fields: &[&str]) -> bool {
    let q = folded(query);
    q.is_empty() || fields.iter().any(|f| folded(f).contains(&q))
}

fn eq(m: &Map<String, Value>, q: &Map<String, Value>, field: &str) -> bool {
    arg_str(q, field).is_none_or(|want| m.get(field).and_then(Value::as_str) == Some(want))
}

/// Kind searched, sort field, and whether the sort is descending.
fn shape(tool: &str) -> (&'static str, &'static str, bool) {
    match tool {
        "searchOrders" => ("order", "order_date", true),
        "searchProducts" => ("product", "name", false),
        "searchBuilds" => ("build", "created_at", true),
        "searchCustomers" => ("customer", "name", false),
        "searchTickets" => ("support_ticket", "created_at", true),
        "searchKnowledgeBase" => ("kb_article", "title", false),
        "searchPromotions" => ("promotion", "start_date", true),
        other => panic!("not a search tool: {other}"),
    }
}

fn matches(snap: &Snapshot, tool: &str, m: &Map<String, Value>, q: &Map<String, Value>) -> bool {
    match tool {
        "searchOrders" => {
            let date = s(m, "order_date");
            eq(m, q, "customer_id")
                && eq(m, q, "status")
                && arg_str(q, "product_id").is_none_or(|p| {
                    m["items"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .any(|it| it["product_id"] == p)
                })
                && arg_str(q, "date_from").is_none_or(|f| date >= f)
                && arg_str(q, "date_to").is_none_or(|t| date <= t)
        }
        "searchProducts" => {
            let price = m["price_cents"].as_i64().unwrap_or(0);
            arg_str(q, "query").is_none_or(|t| {
                text_hit(
                    t,
                    &[
                        s(m, "name"),
                        s(m, "brand"),
                        s(m, "sku"),
                        s(m, "description"),
                    ],
                )
            }) && eq(m, q, "category")
                && arg(q, "min_price_cents").is_none_or(|v| price >= v.as_i64().unwrap())
                && arg(q, "max_price_cents").is_none_or(|v| price <= v.as_i64().unwrap())
                && arg(q, "in_stock")
                    .is_none_or(|v| (snap.stock(s(m, "id")) > 0) == v.as_bool().unwrap())
        }
        "searchBuilds" => {
            eq(m, q, "customer_id")
                && eq(m, q, "status")
                && arg_str(q, "product_id").is_none_or(|p| list(m, "product_ids").contains(&p))
        }
        "searchCustomers" => {
            arg_str(q, "query").is_none_or(|t| text_hit(t, &[s(m, "name"), s(m, "email")]))
                && eq(m, q, "loyalty_tier_id")
        }
        "searchTickets" => {
            eq(m, q, "customer_id")
                && eq(m, q, "order_id")
                && eq(m, q, "status")
                && eq(m, q, "priority")
        }
        "searchKnowledgeBase" => {
            let mut fields = vec![s(m, "title"), s(m, "body")];
            fields.extend(list(m, "tags"));
            arg_str(q, "query").is_none_or(|t| text_hit(t, &fields))
                && arg_str(q, "tag").is_none_or(|t| list(m, "tags").contains(&t))
        }
        "searchPromotions" => {
            arg_str(q, "code").is_none_or(|c| {
                s(m, "code").to_lowercase() == c.trim().to_lowercase() && m.contains_key("code")
            }) && eq(m, q, "category")
                && arg_str(q, "active_on").is_none_or(|d| {
                    m.contains_key("start_date")
                        && m.contains_key("end_date")
                        && s(m, "start_date") <= d
                        && d <= s(m, "end_date")
                })
        }
        other => panic!("not a search tool: {other}"),
    }
}

/// Every matching record in result order.
pub fn full_result(snap: &Snapshot, tool: &str, q: &Map<String, Value>) -> Vec<Map<String, Value>> {
    let (kind, key, descending) = shape(tool);
    let mut hits: Vec<Map<String, Value>> = snap
        .of(kind)
        .iter()
        .filter(|m| matches(snap, tool, m, q))
        .cloned()
        .collect();
    hits.sort_by(|a, b| {
        let primary = s(a, key).cmp(s(b, key));
        let primary = if descending {
            primary.reverse()
        } else {
            primary
        };
        primary.then_with(|| s(a, "id").cmp(s(b, "id")))
    });
    hits
}

/// One page as the tool should return it.
pub fn expected_page(
    snap: &Snapshot,
    tool: &str,
    q: &Map<String, Value>,
) -> Vec<Map<String, Value>> {
    let limit = arg(q, "limit").map_or(CAP, |v| (v.as_i64().unwrap() as usize).min(CAP));
    let offset = arg(q, "offset").map_or(0, |v| v.as_i64().unwrap() as usize);
    full_result(snap, tool, q)
        .into_iter()
        .skip(offset)
        .take(limit)
        .collect()
}

fn sample_value<'a, R: Rng>(
    rng: &mut R,
    records: &'a [Map<String, Value>],
    field: &str,
) -> Option<&'a str> {
    records
        .choose(rng)
        .and_then(|m| m.get(field))
        .and_then(Value::as_str)
}

/// A substring of some field, mangled in case and spacing.
fn sample_text<R: Rng>(rng: &mut R, records: &[Map<String, Value>], fields: &[&str]) -> String {
    let field = fields.choose(rng).unwrap();
    let text = sample_value(rng, records, field)
        .unwrap_or("zzz")
        .to_string();
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() || rng.gen_bool(0.1) {
        return ["qqqq", "", "  ", "pro"][rng.gen_range(0..4)].to_string();
    }
    let a = rng.gen_range(0..chars.len());
    let b = rng.gen_range(a + 1..=chars.len().min(a + 12));
    let mut out: String = chars[a..b].iter().collect();
    if rng.gen_bool(0.3) {
        out = out.to_uppercase();
    }
    if rng.gen_bool(0.2) {
        out = format!("  {}  ", out.replace(' ', "   "));
    }
    out
}

fn random_date<R: Rng>(rng: &mut R) -> String {
    format!(
        "2025-{:02}-{:02}",
        rng.gen_range(1..=12),
        rng.gen_range(1..=28)
    )
}

/// Random schema-valid arguments for `tool`, biased toward values present in the data.
pub fn random_query<R: Rng>(rng: &mut R, snap: &Snapshot, tool: &str) -> Map<String, Value> {
    let (kind, _, _) = shape(tool);
    let recs = snap.of(kind);
    let mut q = Map::new();
    let maybe = |q: &mut Map<String, Value>, rng: &mut R, name: &str, v: Option<Value>| {
        if rng.gen_bool(0.35) {
            if let Some(v) = v {
                q.insert(name.to_string(), v);
            }
        }
    };
    let pick = |rng: &mut R, field: &str| sample_value(rng, recs, field).map(|v| json!(v));
    match tool {
        "searchOrders" => {
            let v = pick(rng, "customer_id");
            maybe(&mut q, rng, "customer_id", v);
            let v = pick(rng, "status");
            maybe(&mut q, rng, "status", v);
            let p = snap.of("product").choose(rng).map(|m| json!(s(m, "id")));
            maybe(&mut q, rng, "product_id", p);
            let v = Some(json!(random_date(rng)));
            maybe(&mut q, rng, "date_from", v);
            let v = Some(json!(random_date(rng)));
            maybe(&mut q, rng, "date_to", v);
        }
        "searchProducts" => {
            let v = Some(json!(sample_text(
                rng,
                recs,
                &["name", "brand", "sku", "description"]
            )));
            maybe(&mut q, rng, "query", v);
            let v = pick(rng, "category");
            maybe(&mut q, rng, "category", v);
            let v = Some(json!(rng.gen_range(0..60_000)));
            maybe(&mut q, rng, "min_price_cents", v);
            let v = Some(json!(rng.gen_range(0..200_000)));
            maybe(&mut q, rng, "max_price_cents", v);
            let v = Some(json!(rng.gen_bool(0.5)));
            maybe(&mut q, rng, "in_stock", v);
        }
        "searchBuilds" => {
            let v = pick(rng, "customer_id");
            maybe(&mut q, rng, "customer_id", v);
            let v = pick(rng, "status");
            maybe(&mut q, rng, "status", v);
            let p = snap.of("product").choose(rng).map(|m| json!(s(m, "id")));
            maybe(&mut q, rng, "product_id", p);
        }
        "searchCustomers" => {
            let v = Some(json!(sample_text(rng, recs, &["name", "email"])));
            maybe(&mut q, rng, "query", v);
            let v = pick(rng, "loyalty_tier_id");
            maybe(&mut q, rng, "loyalty_tier_id", v);
        }
        "searchTickets" => {
            for f in ["customer_id", "order_id", "status", "priority"] {
                let v = pick(rng, f);
                maybe(&mut q, rng, f, v);
            }
        }
        "searchKnowledgeBase" => {
            let v = Some(json!(sample_text(rng, recs, &["title", "body"])));
            maybe(&mut q, rng, "query", v);
            let tag = recs
                .choose(rng)
                .and_then(|m| list(m, "tags").choose(rng).map(|t| json!(t)));
            maybe(&mut q, rng, "tag", tag);
        }
        "searchPromotions" => {
            let code = pick(rng, "code").map(|c| {
                let c = c.as_str().unwrap().to_string();
                json!(if rng.gen_bool(0.5) {
                    format!(" {} ", c.to_lowercase())
                } else {
                    c
                })
            });
            maybe(&mut q, rng, "code", code);
            let v = Some(json!(
                ["cpu", "gpu", "memory", "storage"][rng.gen_range(0..4)]
            ));
            maybe(&mut q, rng, "category", v);
            let v = Some(json!(random_date(rng)));
            maybe(&mut q, rng, "active_on", v);
        }
        other => panic!("not a search tool: {other}"),
    }
    match rng.gen_range(0..4) {
        0 => {}
        1 => {
            q.insert("limit".into(), json!(rng.gen_range(1..=CAP)));
        }
        2 => {
            q.insert("limit".into(), json!(rng.gen_range(CAP + 1..=100)));
        }
        _ => {
            q.insert("limit".into(), json!(rng.gen_range(1..=25)));
        }
    }
    if rng.gen_bool(0.5) {
        q.insert("offset".into(), json!(rng.gen_range(0..=35)));
    }
    q
}

/// Compares one tool payload against the oracle page. Errors name the first difference.
pub fn check_page(
    snap: &Snapshot,
    tool: &str,
    q: &Map<String, Value>,
    payload: &Value,
) -> Result<(), String> {
    let obj = payload.as_object().ok_or("payload is not an object")?;
    if obj.len() != 1 || !obj.contains_key("results") {
        return Err(format!(
            "payload carries extra keys: {:?}",
            obj.keys().collect::<Vec<_>>()
        ));
    }
    let got = obj["results"].as_array().ok_or("results is not a list")?;
    if got.len() > CAP {
        return Err(format!("{} results exceed the cap", got.len()));
    }
    let want = expected_page(snap, tool, q);
    let got_ids: Vec<&str> = got
        .iter()
        .map(|r| r["id"].as_str().unwrap_or("?"))
        .collect();
    let want_ids: Vec<&str> = want.iter().map(|r| s(r, "id")).collect();
    if got_ids != want_ids {
        return Err(format!(
            "{tool} {q:?}: got {got_ids:?}, oracle {want_ids:?}"
        ));
    }
    for (g, w) in got.iter().zip(&want) {
        if g.as_object() != Some(w) {
            return Err(format!(
                "{tool}: record {} differs from the exported file",
                s(w, "id")
            ));
        }
    }
    Ok(())
}
