//! Deterministic world generation.
//!
//! Every entity draws from its own random stream keyed by
//! `(seed, kind, index, purpose)`, so results do not depend on generation
//! order or on how many worker threads run. Kinds that read other kinds
//! (orders read product prices, for example) only read values that are
//! themselves pure functions of the key.

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::profile::{GenProfile, NoiseConfig, ProfileError};
use crate::clock;
use crate::world::{Entity, EntityKind, Schema, WorldState};

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Body = 1,
    Plan = 2,
    Noise = 3,
    Core = 4,
}

fn stream(seed: u64, kind: EntityKind, index: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"supportsim-gen-v1");
    h.update(seed.to_le_bytes());
    h.update((kind.index() as u64).to_le_bytes());
    h.update((index as u64).to_le_bytes());
    h.update((purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn local_id(kind: EntityKind, index: usize) -> String {
    let prefix = &Schema::builtin().kind(kind).id_prefix;
    format!("{prefix}-{:05}", index + 1)
}

const FIRST: [&str; 30] = [
    "Ada",
    "Grace",
    "Alan",
    "Linus",
    "Margaret",
    "Dennis",
    "Barbara",
    "Ken",
    "Radia",
    "Edsger",
    "Frances",
    "John",
    "Katherine",
    "Tim",
    "Hedy",
    "Donald",
    "Sophie",
    "Niklaus",
    "Shafi",
    "Leslie",
    "Priya",
    "Mateo",
    "Yuki",
    "Omar",
    "Ingrid",
    "Kwame",
    "Lucia",
    "Tariq",
    "Mei",
    "Anders",
];
const LAST: [&str; 30] = [
    "Lovelace",
    "Hopper",
    "Turing",
    "Torvalds",
    "Hamilton",
    "Ritchie",
    "Liskov",
    "Thompson",
    "Perlman",
    "Dijkstra",
    "Allen",
    "Backus",
    "Johnson",
    "Berners",
    "Lamarr",
    "Knuth",
    "Wilson",
    "Wirth",
    "Goldwasser",
    "Lamport",
    "Patel",
    "Garcia",
    "Tanaka",
    "Haddad",
    "Larsen",
    "Mensah",
    "Romero",
    "Aziz",
    "Chen",
    "Nilsson",
];

pub const CATEGORIES: [&str; 8] = [
    "cpu",
    "gpu",
    "motherboard",
    "memory",
    "storage",
    "psu",
    "case",
    "cooler",
];

const SOCKETS: [&str; 3] = ["AM5", "LGA1700", "AM4"];
const WAREHOUSES: [&str; 3] = ["east", "west", "central"];
const CARRIERS: [&str; 4] = ["UPS", "FedEx", "USPS", "DHL"];
const PRIORITIES: [&str; 4] = ["low", "medium", "high", "urgent"];
const TOPICS: [&str; 6] = [
    "returns",
    "refunds",
    "shipping",
    "warranty",
    "privacy",
    "escalation",
];

/// Default return window when no returns policy states one.
pub const DEFAULT_RETURN_WINDOW_DAYS: i64 = 30;

struct CategoryStyle {
    brands: [&'static str; 2],
    series: [&'static str; 3],
    price_dollars: (i64, i64),
    watts: (i64, i64),
}

fn style(category: &str) -> CategoryStyle {
    match category {
        "cpu" => CategoryStyle {
            brands: ["Corvex", "Silicore"],
            series: ["Zenith", "Apex", "Core"],
            price_dollars: (120, 650),
            watts: (65, 170),
        },
        "gpu" => CategoryStyle {
            brands: ["Nebula", "Kestrel"],
            series: ["Storm", "Nova", "Pulse"],
            price_dollars: (250, 1600),
            watts: (120, 450),
        },
        "motherboard" => CategoryStyle {
            brands: ["Arborine", "Baseforge"],
            series: ["Forge", "Titan", "Prime"],
            price_dollars: (90, 400),
            watts: (40, 70),
        },
        "memory" => CategoryStyle {
            brands: ["Quicksilver", "Memora"],
            series: ["DDR5-6000 32GB", "DDR5-5600 16GB", "DDR4-3600 32GB"],
            price_dollars: (40, 200),
            watts: (5, 10),
        },
        "storage" => CategoryStyle {
            brands: ["Vaultline", "Flashpoint"],
            series: ["NVMe 1TB", "NVMe 2TB", "SATA 4TB"],
            price_dollars: (40, 250),
            watts: (5, 9),
        },
        "psu" => CategoryStyle {
            brands: ["Voltaic", "Ampere Works"],
            series: ["Bronze", "Gold", "Platinum"],
            price_dollars: (50, 250),
            watts: (0, 0),
        },
        "case" => CategoryStyle {
            brands: ["Shellcraft", "Airframe"],
            series: ["Mid Tower", "Mini ITX", "Full Tower"],
            price_dollars: (50, 200),
            watts: (0, 0),
        },
        _ => CategoryStyle {
            brands: ["Frostbyte", "Cryon"],
            series: ["Tower 120", "AIO 240", "AIO 360"],
            price_dollars: (25, 180),
            watts: (3, 15),
        },
    }
}

fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty choice list")
}

fn at(d: NaiveDate, h: u32, m: u32, s: u32) -> NaiveDateTime {
    d.and_time(NaiveTime::from_hms_opt(h, m, s).unwrap())
}

fn random_time(rng: &mut impl Rng, d: NaiveDate) -> NaiveDateTime {
    at(
        d,
        rng.gen_range(8..22),
        rng.gen_range(0..60),
        rng.gen_range(0..60),
    )
}

#[derive(Debug, Clone)]
struct ProductCore {
    category: &'static str,
    price_cents: i64,
    socket: Option<&'static str>,
}

fn product_core(seed: u64, i: usize) -> ProductCore {
    let mut rng = stream(seed, EntityKind::Product, i, Purpose::Plan);
    let category = CATEGORIES[i % CATEGORIES.len()];
    let st = style(category);
    let price_cents = rng.gen_range(st.price_dollars.0..=st.price_dollars.1) * 100 + 99;
    let socket = matches!(category, "cpu" | "motherboard").then(|| *pick(&mut rng, &SOCKETS));
    ProductCore {
        category,
        price_cents,
        socket,
    }
}

fn gen_product(seed: u64, i: usize, n_warranty: usize) -> Entity {
    let core = product_core(seed, i);
    let mut rng = stream(seed, EntityKind::Product, i, Purpose::Body);
    let st = style(core.category);
    let brand = *pick(&mut rng, &st.brands);
    let series = *pick(&mut rng, &st.series);
    let (name, watts) = if core.category == "psu" {
        let cap = *pick(&mut rng, &[550i64, 650, 750, 850, 1000, 1200]);
        (format!("{brand} {series} {cap}W"), cap)
    } else {
        let w = if st.watts.1 > 0 {
            rng.gen_range(st.watts.0..=st.watts.1) / 5 * 5
        } else {
            0
        };
        let model = rng.gen_range(1..=9) * 100 + i as i64 % 100;
        (format!("{brand} {series} {model}"), w.max(st.watts.0))
    };
    let abbrev = core.category.to_uppercase();
    let abbrev = &abbrev[..abbrev.len().min(3)];
    let mut e = Entity::new(EntityKind::Product, local_id(EntityKind::Product, i))
        .with("name", name.clone())
        .with(
            "sku",
            format!("{abbrev}-{:04}{:02X}", i + 1, rng.gen::<u8>()),
        )
        .with("category", core.category)
        .with("brand", brand)
        .with("price_cents", core.price_cents)
        .with("power_watts", watts)
        .with(
            "warranty_policy_id",
            local_id(EntityKind::WarrantyPolicy, i % n_warranty),
        )
        .with("rating", json!((rng.gen_range(30..=50) as f64) / 10.0))
        .with(
            "description",
            format!("{name}, a {} from {brand}.", category_label(core.category)),
        );
    if let Some(socket) = core.socket {
        e = e.with("socket", socket);
    }
    e
}

pub fn category_label(category: &str) -> &'static str {
    match category {
        "cpu" => "processor",
        "gpu" => "graphics card",
        "motherboard" => "motherboard",
        "memory" => "memory kit",
        "storage" => "storage drive",
        "psu" => "power supply",
        "case" => "PC case",
        _ => "CPU cooler",
    }
}

fn gen_loyalty_tier(i: usize) -> Entity {
    const NAMES: [&str; 4] = ["Bronze", "Silver", "Gold", "Platinum"];
    const DISCOUNT: [i64; 4] = [0, 5, 10, 15];
    const BONUS: [i64; 4] = [0, 7, 15, 30];
    let j = i % 4;
    let name = if i < 4 {
        NAMES[j].to_string()
    } else {
        format!("{} {}", NAMES[j], i / 4 + 1)
    };
    Entity::new(
        EntityKind::LoyaltyTier,
        local_id(EntityKind::LoyaltyTier, i),
    )
    .with("name", name)
    .with("rank", i as i64 + 1)
    .with("discount_percent", DISCOUNT[j])
    .with("return_window_bonus_days", BONUS[j])
}

fn gen_sla(i: usize) -> Entity {
    const FIRST_RESPONSE: [i64; 4] = [48, 24, 8, 2];
    const RESOLUTION: [i64; 4] = [120, 72, 24, 8];
    let j = i % 4;
    let name = format!("{} priority SLA", capitalize(PRIORITIES[j]));
    Entity::new(EntityKind::Sla, local_id(EntityKind::Sla, i))
        .with(
            "name",
            if i < 4 {
                name
            } else {
                format!("{name} {}", i / 4 + 1)
            },
        )
        .with("priority", PRIORITIES[j])
        .with("first_response_hours", FIRST_RESPONSE[j])
        .with("resolution_hours", RESOLUTION[j])
}

fn gen_warranty(i: usize) -> Entity {
    const TABLE: [(&str, i64, &str); 4] = [
        (
            "Standard 1-Year",
            12,
            "Parts and labor against manufacturing defects",
        ),
        (
            "Extended 2-Year",
            24,
            "Parts, labor and advance replacement",
        ),
        (
            "Premium 3-Year",
            36,
            "Parts, labor, advance replacement and accidental damage",
        ),
        (
            "Limited 90-Day",
            3,
            "Replacement of dead-on-arrival units only",
        ),
    ];
    let (name, months, coverage) = TABLE[i % TABLE.len()];
    let name = if i < TABLE.len() {
        name.to_string()
    } else {
        format!("{name} (plan {})", i + 1)
    };
    Entity::new(
        EntityKind::WarrantyPolicy,
        local_id(EntityKind::WarrantyPolicy, i),
    )
    .with("name", name)
    .with("duration_months", months)
    .with("coverage", coverage)
}

fn gen_company_policy(i: usize) -> Entity {
    let topic = TOPICS[i % TOPICS.len()];
    let current = i < TOPICS.len();
    let (title, body) = match topic {
        "returns" => (
            "Returns policy",
            "Delivered items may be returned within the return window, counted from the delivery date. \
             Loyalty tiers extend the window by their bonus days. Cancelled or already returned items are not eligible.",
        ),
        "refunds" => (
            "Refunds policy",
            "Approved returns are refunded to the original payment method at the unit price paid, \
             net of any order-level promotion discount share.",
        ),
        "shipping" => (
            "Shipping policy",
            "Orders ship within one business day. Tracking numbers are shared once a label is created.",
        ),
        "warranty" => (
            "Warranty policy",
            "Warranty coverage starts on the order date and lasts for the duration of the product's warranty plan.",
        ),
        "privacy" => (
            "Customer privacy policy",
            "Never disclose a customer's email address, phone number or payment details in replies or ticket notes.",
        ),
        _ => (
            "Escalation policy",
            "Tickets that exceed their SLA resolution time must be escalated and annotated with the reason.",
        ),
    };
    let mut e = Entity::new(
        EntityKind::CompanyPolicy,
        local_id(EntityKind::CompanyPolicy, i),
    )
    .with(
        "title",
        if current {
            title.to_string()
        } else {
            format!("{title} (superseded)")
        },
    )
    .with("topic", topic)
    .with("body", body)
    .with(
        "effective_date",
        if current {
            "2025-01-01".to_string()
        } else {
            clock::fmt_date(NaiveDate::from_ymd_opt(2023, 1, 1).unwrap() + Duration::days(i as i64))
        },
    );
    if topic == "returns" {
        e = e.with(
            "return_window_days",
            if current {
                DEFAULT_RETURN_WINDOW_DAYS
            } else {
                14
            },
        );
    }
    e
}

fn promotion_pct(seed: u64, i: usize) -> i64 {
    stream(seed, EntityKind::Promotion, i, Purpose::Plan).gen_range(1..=4) * 5
}

fn gen_promotion(seed: u64, i: usize) -> Entity {
    const WORDS: [&str; 8] = [
        "SPRING", "SUMMER", "FALL", "WINTER", "GAMER", "BUILD", "UPGRADE", "CYBER",
    ];
    let mut rng = stream(seed, EntityKind::Promotion, i, Purpose::Body);
    let word = WORDS[i % WORDS.len()];
    let pct = promotion_pct(seed, i);
    let start = clock::today() - Duration::days(rng.gen_range(0..120));
    let end = start + Duration::days(rng.gen_range(14..120));
    let mut e = Entity::new(EntityKind::Promotion, local_id(EntityKind::Promotion, i))
        .with("code", format!("{word}{:02}", i + 1))
        .with("discount_percent", pct)
        .with(
            "min_subtotal_cents",
            *pick(&mut rng, &[0i64, 10_000, 25_000, 50_000]),
        )
        .with("start_date", clock::fmt_date(start))
        .with("end_date", clock::fmt_date(end));
    let category = rng.gen_bool(0.6).then(|| *pick(&mut rng, &CATEGORIES));
    let description = match category {
        Some(c) => format!("{pct}% off {} purchases", category_label(c)),
        None => format!("{pct}% off any order"),
    };
    e = e.with("description", description);
    if let Some(c) = category {
        e = e.with("category", c);
    }
    e
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn order_customer(seed: u64, i: usize, n_customers: usize) -> usize {
    let mut rng = stream(seed, EntityKind::Order, i, Purpose::Plan);
    // One high-volume business account per world makes pagination matter.
    if rng.gen_bool(0.3) {
        0
    } else {
        rng.gen_range(0..n_customers)
    }
}

#[derive(Debug, Clone)]
struct OrderCore {
    customer: usize,
    status: &'static str,
    order_date: NaiveDate,
    shipped_date: Option<NaiveDate>,
    delivered_date: Option<NaiveDate>,
    in_transit_exception: bool,
}

fn order_core(seed: u64, i: usize, n_customers: usize, n_ship: usize) -> OrderCore {
    let customer = order_customer(seed, i, n_customers);
    let mut rng = stream(seed, EntityKind::Order, i, Purpose::Core);
    let today = clock::today();
    if i < n_ship {
        if rng.gen_bool(0.15) {
            let od = today - Duration::days(rng.gen_range(2..=5));
            OrderCore {
                customer,
                status: "shipped",
                order_date: od,
                shipped_date: Some(od + Duration::days(1)),
                delivered_date: None,
                in_transit_exception: rng.gen_bool(0.2),
            }
        } else {
            // A recent share keeps some deliveries inside the return window.
            let age = if rng.gen_bool(0.4) {
                rng.gen_range(8..=45)
            } else {
                rng.gen_range(46..=300)
            };
            let od = today - Duration::days(age);
            let shipped = od + Duration::days(1);
            let delivered = shipped + Duration::days(rng.gen_range(2..=6));
            OrderCore {
                customer,
                status: if rng.gen_bool(0.12) {
                    "returned"
                } else {
                    "delivered"
                },
                order_date: od,
                shipped_date: Some(shipped),
                delivered_date: Some(delivered),
                in_transit_exception: false,
            }
        }
    } else if rng.gen_bool(0.3) {
        OrderCore {
            customer,
            status: "cancelled",
            order_date: today - Duration::days(rng.gen_range(5..=200)),
            shipped_date: None,
            delivered_date: None,
            in_transit_exception: false,
        }
    } else {
        OrderCore {
            customer,
            status: if rng.gen_bool(0.5) {
                "pending"
            } else {
                "processing"
            },
            order_date: today - Duration::days(rng.gen_range(0..=3)),
            shipped_date: None,
            delivered_date: None,
            in_transit_exception: false,
        }
    }
}

struct Ctx<'a> {
    seed: u64,
    profile: &'a GenProfile,
    products: Vec<ProductCore>,
    orders: Vec<OrderCore>,
    customer_orders: Vec<Vec<usize>>,
}

impl Ctx<'_> {
    fn n(&self, kind: EntityKind) -> usize {
        self.profile.count(kind)
    }

    fn products_in(&self, category: &str) -> Vec<usize> {
        (0..self.products.len())
            .filter(|&i| self.products[i].category == category)
            .collect()
    }
}

fn gen_customer(ctx: &Ctx, i: usize) -> Entity {
    let mut rng = stream(ctx.seed, EntityKind::Customer, i, Purpose::Body);
    let first = *pick(&mut rng, &FIRST);
    let last = *pick(&mut rng, &LAST);
    let n_tiers = ctx.n(EntityKind::LoyaltyTier);
    let tier = if n_tiers == 4 {
        let r: f64 = rng.gen();
        match r {
            r if r < 0.5 => 0,
            r if r < 0.8 => 1,
            r if r < 0.95 => 2,
            _ => 3,
        }
    } else {
        rng.gen_range(0..n_tiers)
    };
    let signup = clock::today() - Duration::days(rng.gen_range(330..=1100));
    let name = if i == 0 {
        format!("{first} {last} (Northwind Labs)")
    } else {
        format!("{first} {last}")
    };
    Entity::new(EntityKind::Customer, local_id(EntityKind::Customer, i))
        .with("name", name)
        .with(
            "email",
            format!(
                "{}.{}{}@example.com",
                first.to_lowercase(),
                last.to_lowercase(),
                i + 1
            ),
        )
        .with(
            "phone",
            format!(
                "+1-555-{:03}-{:04}",
                rng.gen_range(100..1000),
                rng.gen_range(0..10000)
            ),
        )
        .with("loyalty_tier_id", local_id(EntityKind::LoyaltyTier, tier))
        .with("signup_date", clock::fmt_date(signup))
        .with(
            "order_ids",
            Value::Array(
                ctx.customer_orders[i]
                    .iter()
                    .map(|&o| Value::String(local_id(EntityKind::Order, o)))
                    .collect(),
            ),
        )
        .with("contact_log", json!([]))
}

fn gen_order(ctx: &Ctx, i: usize) -> Entity {
    let core = &ctx.orders[i];
    let mut rng = stream(ctx.seed, EntityKind::Order, i, Purpose::Body);
    let n_items = rng.gen_range(1..=3usize).min(ctx.products.len());
    let mut picks: Vec<usize> = (0..ctx.products.len()).collect();
    picks.shuffle(&mut rng);
    picks.truncate(n_items);
    picks.sort_unstable();
    let mut subtotal = 0i64;
    let items: Vec<Value> = picks
        .iter()
        .map(|&p| {
            let qty = if rng.gen_bool(0.8) { 1 } else { 2 };
            let unit = ctx.products[p].price_cents;
            subtotal += qty * unit;
            json!({
                "product_id": local_id(EntityKind::Product, p),
                "quantity": qty,
                "unit_price_cents": unit,
            })
        })
        .collect();
    let created = random_time(&mut rng, core.order_date);
    let updated = std::cmp::min(
        created + Duration::hours(rng.gen_range(1..=240)),
        clock::now(),
    );
    let updated = updated.max(created);
    let n_promos = ctx.n(EntityKind::Promotion);
    let promo = (n_promos > 0 && rng.gen_bool(0.15)).then(|| rng.gen_range(0..n_promos));
    let discount = match promo {
        Some(p) => subtotal * promotion_pct(ctx.seed, p) / 100,
        None => 0,
    };
    let (returned, refunded) = if core.status == "returned" {
        let first = &items[0];
        let line =
            first["quantity"].as_i64().unwrap() * first["unit_price_cents"].as_i64().unwrap();
        (
            json!([first["product_id"].clone()]),
            line - discount * line / subtotal,
        )
    } else {
        (json!([]), 0)
    };
    let mut e = Entity::new(EntityKind::Order, local_id(EntityKind::Order, i))
        .with("customer_id", local_id(EntityKind::Customer, core.customer))
        .with("items", Value::Array(items))
        .with("status", core.status)
        .with("order_date", clock::fmt_date(core.order_date))
        .with("created_at", clock::fmt_datetime(created))
        .with("updated_at", clock::fmt_datetime(updated))
        .with("subtotal_cents", subtotal)
        .with("discount_cents", discount)
        .with("total_cents", subtotal - discount)
        .with("returned_product_ids", returned)
        .with("refunded_cents", refunded)
        .with(
            "payment_method",
            *pick(&mut rng, &["card", "paypal", "bank_transfer"]),
        );
    if let Some(p) = promo {
        e = e.with("promotion_id", local_id(EntityKind::Promotion, p));
    }
    e
}

fn tracking_number(rng: &mut impl Rng, carrier: &str) -> String {
    let digits = |rng: &mut dyn rand::RngCore, n: usize| -> String {
        (0..n)
            .map(|_| char::from(b'0' + rng.gen_range(0..10u8)))
            .collect()
    };
    match carrier {
        "UPS" => format!("1Z{}", digits(rng, 16)),
        "FedEx" => digits(rng, 12),
        "USPS" => format!("94{}", digits(rng, 20)),
        _ => format!("JD{}", digits(rng, 10)),
    }
}

fn gen_shipping(ctx: &Ctx, i: usize) -> Entity {
    let core = &ctx.orders[i];
    let mut rng = stream(ctx.seed, EntityKind::ShippingRecord, i, Purpose::Body);
    let carrier = *pick(&mut rng, &CARRIERS);
    let shipped = core
        .shipped_date
        .expect("shipping records attach to shipped orders");
    let status = match (core.delivered_date, core.in_transit_exception) {
        (Some(_), _) => "delivered",
        (None, true) => "exception",
        (None, false) => "in_transit",
    };
    let created = at(shipped, 9, 0, 0);
    let updated = match core.delivered_date {
        Some(d) => at(d, 15, rng.gen_range(0..60), 0),
        None => std::cmp::min(
            created + Duration::hours(rng.gen_range(6..=30)),
            clock::now(),
        ),
    };
    let mut e = Entity::new(
        EntityKind::ShippingRecord,
        local_id(EntityKind::ShippingRecord, i),
    )
    .with("order_id", local_id(EntityKind::Order, i))
    .with("carrier", carrier)
    .with("tracking_number", tracking_number(&mut rng, carrier))
    .with("status", status)
    .with("shipped_date", clock::fmt_date(shipped))
    .with("created_at", clock::fmt_datetime(created))
    .with("updated_at", clock::fmt_datetime(updated));
    if let Some(d) = core.delivered_date {
        e = e.with("delivered_date", clock::fmt_date(d));
    }
    e
}

fn gen_ticket(ctx: &Ctx, i: usize) -> Entity {
    let mut rng = stream(ctx.seed, EntityKind::SupportTicket, i, Purpose::Body);
    let customer = rng.gen_range(0..ctx.n(EntityKind::Customer));
    let owned = &ctx.customer_orders[customer];
    let order = (!owned.is_empty() && rng.gen_bool(0.7)).then(|| *pick(&mut rng, owned));
    let (subject, description) = match order.map(|o| (o, ctx.orders[o].status)) {
        Some((o, "delivered")) => {
            let id = local_id(EntityKind::Order, o);
            if rng.gen_bool(0.5) {
                (
                    format!("Return request for order {id}"),
                    "I would like to return an item from this order.".to_string(),
                )
            } else {
                (
                    format!("Item from {id} arrived damaged"),
                    "One of the parts looks damaged, what are my options?".to_string(),
                )
            }
        }
        Some((o, "shipped")) => (
            format!("Where is my order {}?", local_id(EntityKind::Order, o)),
            "The tracking page has not updated in a while.".to_string(),
        ),
        Some((o, "cancelled")) => (
            format!(
                "Refund status for cancelled order {}",
                local_id(EntityKind::Order, o)
            ),
            "I cancelled this order, when will I see the refund?".to_string(),
        ),
        Some((o, "returned")) => (
            format!("Refund not received for {}", local_id(EntityKind::Order, o)),
            "I sent the item back but the refund has not arrived.".to_string(),
        ),
        Some((o, _)) => (
            format!(
                "Change shipping address for {}",
                local_id(EntityKind::Order, o)
            ),
            "I moved recently and need the order sent to my new address.".to_string(),
        ),
        None => {
            let (s, d) = *pick(
                &mut rng,
                &[
                    (
                        "Build compatibility question",
                        "Will these parts work together?",
                    ),
                    ("Warranty question", "How long is the warranty on my parts?"),
                    (
                        "Account email update",
                        "Please update the email address on my account.",
                    ),
                ],
            );
            (s.to_string(), d.to_string())
        }
    };
    let r: f64 = rng.gen();
    let status = match r {
        r if r < 0.35 => "open",
        r if r < 0.55 => "pending",
        r if r < 0.65 => "escalated",
        r if r < 0.85 => "resolved",
        _ => "closed",
    };
    let r: f64 = rng.gen();
    let priority_idx = match r {
        r if r < 0.3 => 0,
        r if r < 0.7 => 1,
        r if r < 0.9 => 2,
        _ => 3,
    };
    let n_sla = ctx.n(EntityKind::Sla);
    let sla = (0..n_sla).find(|s| s % 4 == priority_idx).unwrap_or(0);
    let created = clock::now()
        - Duration::hours(rng.gen_range(2..=45 * 24))
        - Duration::minutes(rng.gen_range(0..60));
    let updated = std::cmp::min(
        created + Duration::hours(rng.gen_range(0..=48)),
        clock::now(),
    );
    let mut e = Entity::new(
        EntityKind::SupportTicket,
        local_id(EntityKind::SupportTicket, i),
    )
    .with("customer_id", local_id(EntityKind::Customer, customer))
    .with("subject", subject)
    .with("description", description)
    .with("status", status)
    .with("priority", PRIORITIES[priority_idx])
    .with("sla_id", local_id(EntityKind::Sla, sla))
    .with("created_at", clock::fmt_datetime(created))
    .with("updated_at", clock::fmt_datetime(updated))
    .with("notes", json!([]));
    if let Some(o) = order {
        e = e.with("order_id", local_id(EntityKind::Order, o));
    }
    e
}

fn gen_build(ctx: &Ctx, i: usize) -> Entity {
    let mut rng = stream(ctx.seed, EntityKind::Build, i, Purpose::Body);
    let customer = rng.gen_range(0..ctx.n(EntityKind::Customer));
    let mut parts = Vec::new();
    for category in ["cpu", "motherboard", "gpu", "psu", "memory"] {
        let pool = ctx.products_in(category);
        if let Some(p) = pool.choose(&mut rng) {
            parts.push(*p);
        }
    }
    if parts.is_empty() {
        parts.push(rng.gen_range(0..ctx.products.len()));
    }
    let created = clock::now() - Duration::hours(rng.gen_range(24..=90 * 24));
    let purpose = *pick(
        &mut rng,
        &["Gaming rig", "Workstation", "Streaming PC", "Compact build"],
    );
    Entity::new(EntityKind::Build, local_id(EntityKind::Build, i))
        .with("name", format!("{purpose} #{}", i + 1))
        .with("customer_id", local_id(EntityKind::Customer, customer))
        .with(
            "product_ids",
            Value::Array(
                parts
                    .iter()
                    .map(|&p| Value::String(local_id(EntityKind::Product, p)))
                    .collect(),
            ),
        )
        .with(
            "status",
            *pick(&mut rng, &["draft", "validated", "ordered"]),
        )
        .with("created_at", clock::fmt_datetime(created))
        .with(
            "notes",
            *pick(
                &mut rng,
                &[
                    "Prefers quiet fans",
                    "Budget conscious",
                    "Wants headroom for upgrades",
                ],
            ),
        )
}

fn gen_compat(ctx: &Ctx, i: usize) -> Entity {
    let mut rng = stream(ctx.seed, EntityKind::CompatibilityRule, i, Purpose::Body);
    let pairs = [("cpu", "motherboard"), ("cooler", "case"), ("gpu", "case")];
    let (ca, cb) = pairs[i % pairs.len()];
    let (pa, pb) = match (
        ctx.products_in(ca).choose(&mut rng).copied(),
        ctx.products_in(cb).choose(&mut rng).copied(),
    ) {
        (Some(a), Some(b)) if a != b => (a, b),
        _ => {
            let a = rng.gen_range(0..ctx.products.len());
            let b = (a + 1 + rng.gen_range(0..ctx.products.len() - 1)) % ctx.products.len();
            (a, b)
        }
    };
    let (a, b) = (&ctx.products[pa], &ctx.products[pb]);
    let (compatible, reason) = match (a.socket, b.socket) {
        (Some(sa), Some(sb)) if sa == sb => (true, format!("Both parts use the {sa} socket")),
        (Some(sa), Some(sb)) => (
            false,
            format!("{sa} processor does not fit a {sb} motherboard"),
        ),
        _ => {
            if rng.gen_bool(0.5) {
                (true, "Verified fit by the hardware lab".to_string())
            } else {
                (
                    false,
                    format!(
                        "{} exceeds the clearance of the {}",
                        category_label(a.category),
                        category_label(b.category)
                    ),
                )
            }
        }
    };
    Entity::new(
        EntityKind::CompatibilityRule,
        local_id(EntityKind::CompatibilityRule, i),
    )
    .with("product_a", local_id(EntityKind::Product, pa))
    .with("product_b", local_id(EntityKind::Product, pb))
    .with("compatible", compatible)
    .with("reason", reason)
}

fn gen_kb(ctx: &Ctx, i: usize) -> Entity {
    const ARTICLES: [(&str, &[&str], &str, &str); 8] = [
        ("How to process a return", &["returns", "policy"], "storage", "Check the order was delivered, confirm the return window, then process the return for the specific product."),
        ("Tracking a shipment", &["shipping", "tracking"], "case", "Look up the shipping record for the order to find the carrier and tracking number."),
        ("Understanding warranty coverage", &["warranty"], "gpu", "Warranty starts on the order date and lasts for the plan duration in months."),
        ("Choosing a power supply for your GPU", &["psu", "gpu", "compatibility"], "psu", "Total system draw plus 20 percent headroom must not exceed the PSU rating."),
        ("CPU socket compatibility guide", &["cpu", "motherboard", "compatibility"], "cpu", "A processor only fits a motherboard with the same socket."),
        ("Applying promotion codes", &["promotions", "billing"], "memory", "Promotions apply to pending or processing orders within their date range and minimum subtotal."),
        ("Escalation procedure for urgent tickets", &["escalation", "sla"], "motherboard", "Escalate tickets past their SLA resolution time and leave a note with the reason."),
        ("Cooler and case clearance", &["cooler", "case", "compatibility"], "cooler", "Tall tower coolers may not fit compact cases; check the compatibility rules."),
    ];
    let mut rng = stream(ctx.seed, EntityKind::KbArticle, i, Purpose::Body);
    let (title, tags, category, body) = ARTICLES[i % ARTICLES.len()];
    let title = if i < ARTICLES.len() {
        title.to_string()
    } else {
        format!("{title} (rev {})", i / ARTICLES.len() + 1)
    };
    let pool = ctx.products_in(category);
    let related: Vec<Value> = pool
        .choose_multiple(&mut rng, 2)
        .map(|&p| Value::String(local_id(EntityKind::Product, p)))
        .collect();
    let updated = clock::now() - Duration::days(rng.gen_range(10..=400));
    Entity::new(EntityKind::KbArticle, local_id(EntityKind::KbArticle, i))
        .with("title", title)
        .with("body", body)
        .with("tags", json!(tags))
        .with("product_ids", Value::Array(related))
        .with("updated_at", clock::fmt_datetime(updated))
}

fn gen_inventory(ctx: &Ctx, i: usize) -> Entity {
    let mut rng = stream(ctx.seed, EntityKind::InventoryLevel, i, Purpose::Body);
    let n_p = ctx.products.len();
    let quantity = if rng.gen_bool(0.15) {
        0
    } else {
        rng.gen_range(1..=60)
    };
    let updated = clock::now() - Duration::hours(rng.gen_range(1..=24 * 14));
    Entity::new(
        EntityKind::InventoryLevel,
        local_id(EntityKind::InventoryLevel, i),
    )
    .with("product_id", local_id(EntityKind::Product, i % n_p))
    .with("warehouse", WAREHOUSES[(i / n_p) % WAREHOUSES.len()])
    .with("quantity", quantity as i64)
    .with("reorder_point", rng.gen_range(5..=10) as i64)
    .with("updated_at", clock::fmt_datetime(updated))
}

fn droppable(kind: EntityKind) -> &'static [&'static str] {
    match kind {
        EntityKind::Customer => &["email", "phone"],
        EntityKind::Product => &["rating", "description"],
        EntityKind::Order => &["payment_method"],
        EntityKind::Build => &["notes"],
        _ => &[],
    }
}

fn apply_noise(seed: u64, index: usize, noise: &NoiseConfig, mut e: Entity) -> Entity {
    let mut rng = stream(seed, e.kind(), index, Purpose::Noise);
    let incomplete = rng.gen_bool(noise.incomplete_record_rate);
    let conflict = rng.gen_bool(noise.conflicting_timestamp_rate);
    if incomplete {
        e.attributes.insert("incomplete".into(), Value::Bool(true));
        for field in droppable(e.kind()) {
            if rng.gen_bool(0.7) {
                e.attributes.remove(*field);
            }
        }
    }
    if conflict {
        if let Some(created) = e.str_attr("created_at").and_then(clock::parse_datetime) {
            if e.attributes.contains_key("updated_at") {
                let earlier = created - Duration::hours(rng.gen_range(1..=48));
                e.attributes.insert(
                    "updated_at".into(),
                    Value::String(clock::fmt_datetime(earlier)),
                );
            }
        }
    }
    e
}

/// Generates a world that is a pure function of `(seed, profile)`.
pub fn generate_world(seed: u64, profile: &GenProfile) -> Result<WorldState, ProfileError> {
    profile.validate()?;
    let n = |k| profile.count(k);
    let n_customers = n(EntityKind::Customer);
    let n_ship = n(EntityKind::ShippingRecord);

    let products: Vec<ProductCore> = (0..n(EntityKind::Product))
        .into_par_iter()
        .map(|i| product_core(seed, i))
        .collect();
    let orders: Vec<OrderCore> = (0..n(EntityKind::Order))
        .into_par_iter()
        .map(|i| order_core(seed, i, n_customers, n_ship))
        .collect();
    let mut customer_orders = vec![Vec::new(); n_customers];
    for (i, o) in orders.iter().enumerate() {
        customer_orders[o.customer].push(i);
    }
    let ctx = Ctx {
        seed,
        profile,
        products,
        orders,
        customer_orders,
    };

    let entities: Vec<Entity> = EntityKind::ALL
        .par_iter()
        .flat_map_iter(|&kind| {
            let ctx = &ctx;
            (0..n(kind)).map(move |i| {
                let e = match kind {
                    EntityKind::Build => gen_build(ctx, i),
                    EntityKind::CompanyPolicy => gen_company_policy(i),
                    EntityKind::CompatibilityRule => gen_compat(ctx, i),
                    EntityKind::Customer => gen_customer(ctx, i),
                    EntityKind::InventoryLevel => gen_inventory(ctx, i),
                    EntityKind::KbArticle => gen_kb(ctx, i),
                    EntityKind::LoyaltyTier => gen_loyalty_tier(i),
                    EntityKind::Order => gen_order(ctx, i),
                    EntityKind::Product => gen_product(seed, i, n(EntityKind::WarrantyPolicy)),
                    EntityKind::Promotion => gen_promotion(seed, i),
                    EntityKind::ShippingRecord => gen_shipping(ctx, i),
                    EntityKind::Sla => gen_sla(i),
                    EntityKind::SupportTicket => gen_ticket(ctx, i),
                    EntityKind::WarrantyPolicy => gen_warranty(i),
                };
                apply_noise(seed, i, &profile.noise, e)
            })
        })
        .collect();

    Ok(
        WorldState::from_entities(seed, profile.name.clone(), entities)
            .expect("generated ids are unique per kind"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{check_integrity, EntityId, WorldView};

    #[test]
    fn mini_world_is_valid_and_sized() {
        let p = GenProfile::mini();
        let w = generate_world(42, &p).unwrap();
        let v = check_integrity(&w);
        assert!(v.is_empty(), "{v:#?}");
        for kind in EntityKind::ALL {
            assert_eq!(w.count(kind), p.count(kind), "{kind}");
        }
        assert_eq!(w.count(EntityKind::Customer), 10);
        assert_eq!(w.count(EntityKind::Order), 30);
        assert_eq!(w.count(EntityKind::Product), 20);
    }

    #[test]
    fn same_seed_same_digest_different_seed_differs() {
        let p = GenProfile::mini();
        let a = generate_world(7, &p).unwrap();
        let b = generate_world(7, &p).unwrap();
        let c = generate_world(8, &p).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn orders_and_customers_link_both_ways() {
        let w = generate_world(3, &GenProfile::preset("standard").unwrap()).unwrap();
        for order in w.entities_of(EntityKind::Order) {
            let cid = EntityId::new(EntityKind::Customer, order.str_attr("customer_id").unwrap());
            let customer = w.get(&cid).unwrap();
            assert!(customer.references().contains(&order.id));
        }
        for customer in w.entities_of(EntityKind::Customer) {
            for oid in customer
                .references()
                .into_iter()
                .filter(|r| r.kind == EntityKind::Order)
            {
                let order = w.get(&oid).unwrap();
                assert!(order.references().contains(&customer.id));
            }
        }
    }

    #[test]
    fn shipping_attaches_to_shipped_orders() {
        let w = generate_world(11, &GenProfile::mini()).unwrap();
        for s in w.entities_of(EntityKind::ShippingRecord) {
            let oid = EntityId::new(EntityKind::Order, s.str_attr("order_id").unwrap());
            let status = w.get(&oid).unwrap().str_attr("status").unwrap().to_string();
            assert!(
                ["shipped", "delivered", "returned"].contains(&status.as_str()),
                "{status}"
            );
        }
    }

    #[test]
    fn zero_noise_means_no_flags() {
        let mut p = GenProfile::mini();
        p.noise = NoiseConfig {
            conflicting_timestamp_rate: 0.0,
            incomplete_record_rate: 0.0,
        };
        let w = generate_world(5, &p).unwrap();
        assert!(w.iter().all(|e| e.attr("incomplete").is_none()));
        for e in w.iter() {
            if let (Some(c), Some(u)) = (e.str_attr("created_at"), e.str_attr("updated_at")) {
                assert!(u >= c, "{}: {u} < {c}", e.id);
            }
        }
    }

    #[test]
    fn unsatisfiable_profile_errors() {
        let mut p = GenProfile::mini();
        p.counts.insert(EntityKind::Product, 0);
        assert!(generate_world(1, &p).is_err());
    }
}
