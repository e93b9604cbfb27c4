//! Direct reads of the world used to choose task entities and compute
//! expected answers. Kept apart from the tool handlers on purpose: the oracle
//! gets its answers through the tools, the rubric gets them from here.

use chrono::{Duration, NaiveDate, NaiveDateTime};

use crate::clock;
use crate::gen::DEFAULT_RETURN_WINDOW_DAYS;
use crate::world::{Entity, EntityId, EntityKind, WorldState, WorldView};

pub(crate) struct Facts<'w>(pub &'w WorldState);

pub(crate) fn dollars(cents: i64) -> String {
    format!("{}.{:02}", cents / 100, cents % 100)
}

pub(crate) fn s<'e>(e: &'e Entity, attr: &str) -> &'e str {
    e.str_attr(attr).unwrap_or("")
}

pub(crate) fn n(e: &Entity, attr: &str) -> i64 {
    e.int_attr(attr).unwrap_or(0)
}

pub(crate) fn list<'e>(e: &'e Entity, attr: &str) -> Vec<&'e str> {
    e.attr(attr)
        .and_then(|v| v.as_array())
        .map(|a| a.iter().filter_map(|x| x.as_str()).collect())
        .unwrap_or_default()
}

/// `(product_id, quantity, unit_price_cents)` per order line.
pub(crate) fn lines(order: &Entity) -> Vec<(&str, i64, i64)> {
    order
        .attr("items")
        .and_then(|v| v.as_array())
        .map(|a| {
            a.iter()
                .filter_map(|x| {
                    Some((
                        x.get("product_id")?.as_str()?,
                        x.get("quantity")?.as_i64()?,
                        x.get("unit_price_cents")?.as_i64()?,
                    ))
                })
                .collect()
        })
        .unwrap_or_default()
}

fn lower_words(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub(crate) struct Window {
    pub eligible: bool,
    pub deadline: NaiveDate,
}

impl<'w> Facts<'w> {
    pub fn all(&self, kind: EntityKind) -> Vec<&'w Entity> {
        self.0.entities_of(kind)
    }

    pub fn get(&self, kind: EntityKind, id: &str) -> Option<&'w Entity> {
        self.0.get(&EntityId::new(kind, id))
    }

    pub fn name(&self, kind: EntityKind, id: &str) -> String {
        self.get(kind, id)
            .map(|e| s(e, "name").to_string())
            .unwrap_or_default()
    }

    pub fn shipment(&self, order: &str) -> Option<&'w Entity> {
        self.all(EntityKind::ShippingRecord)
            .into_iter()
            .find(|e| s(e, "order_id") == order)
    }

    pub fn tier(&self, customer: &Entity) -> Option<&'w Entity> {
        self.get(EntityKind::LoyaltyTier, s(customer, "loyalty_tier_id"))
    }

    pub fn stock(&self, product: &str) -> i64 {
        self.all(EntityKind::InventoryLevel)
            .into_iter()
            .filter(|l| s(l, "product_id") == product)
            .map(|l| n(l, "quantity"))
            .sum()
    }

    pub fn has_inventory_record(&self, product: &str) -> bool {
        self.all(EntityKind::InventoryLevel)
            .into_iter()
            .any(|l| s(l, "product_id") == product)
    }

    pub fn category(&self, product: &str) -> &'w str {
        self.get(EntityKind::Product, product)
            .map_or("", |p| s(p, "category"))
    }

    /// The policy in force today for `topic`: latest effective date, lowest id on ties.
    pub fn policy(&self, topic: &str) -> Option<&'w Entity> {
        let today = clock::fmt_date(clock::today());
        let mut best: Option<&Entity> = None;
        for p in self.all(EntityKind::CompanyPolicy) {
            let eff = s(p, "effective_date");
            if s(p, "topic") != topic || eff.is_empty() || eff > today.as_str() {
                continue;
            }
            if best.is_none_or(|b| eff > s(b, "effective_date")) {
                best = Some(p);
            }
        }
        best
    }

    pub fn return_window(&self, order: &Entity, product: &str) -> Option<Window> {
        let customer = self.get(EntityKind::Customer, s(order, "customer_id"))?;
        let base = self
            .policy("returns")
            .and_then(|p| p.int_attr("return_window_days"))
            .unwrap_or(DEFAULT_RETURN_WINDOW_DAYS);
        let days = base
            + self
                .tier(customer)
                .map_or(0, |t| n(t, "return_window_bonus_days"));
        let delivered = self
            .shipment(&order.id.local)
            .and_then(|sh| sh.str_attr("delivered_date"))
            .and_then(clock::parse_date)?;
        let deadline = delivered + Duration::days(days);
        let status = s(order, "status");
        let open = (status == "delivered" || status == "returned")
            && !list(order, "returned_product_ids").contains(&product);
        Some(Window {
            eligible: open && clock::today() <= deadline,
            deadline,
        })
    }

    /// Refund for returning every unit of `product`, net of its discount share.
    pub fn refund(&self, order: &Entity, product: &str) -> i64 {
        let line: i64 = lines(order)
            .iter()
            .filter(|l| l.0 == product)
            .map(|l| l.1 * l.2)
            .sum();
        let subtotal = n(order, "subtotal_cents");
        if subtotal == 0 {
            return line;
        }
        line - n(order, "discount_cents") * line / subtotal
    }

    /// SLA resolution deadline of a ticket.
    pub fn due(&self, ticket: &Entity) -> Option<(NaiveDateTime, &'w Entity)> {
        let sla = self.get(EntityKind::Sla, s(ticket, "sla_id"))?;
        let created = clock::parse_datetime(s(ticket, "created_at"))?;
        Some((created + Duration::hours(n(sla, "resolution_hours")), sla))
    }

    /// Products whose name contains `query`, case-insensitively.
    pub fn products_named(&self, query: &str) -> Vec<&'w Entity> {
        let q = lower_words(query);
        self.all(EntityKind::Product)
            .into_iter()
            .filter(|p| lower_words(s(p, "name")).contains(&q))
            .collect()
    }

    pub fn customers_named(&self, query: &str) -> Vec<&'w Entity> {
        let q = lower_words(query);
        self.all(EntityKind::Customer)
            .into_iter()
            .filter(|c| {
                lower_words(s(c, "name")).contains(&q) || lower_words(s(c, "email")).contains(&q)
            })
            .collect()
    }

    pub fn promo_active(&self, promo: &Entity) -> bool {
        let today = clock::fmt_date(clock::today());
        let (start, end) = (s(promo, "start_date"), s(promo, "end_date"));
        !start.is_empty() && start <= today.as_str() && today.as_str() <= end
    }

    pub fn build_parts(&self, build: &Entity) -> Vec<&'w Entity> {
        list(build, "product_ids")
            .into_iter()
            .filter_map(|p| self.get(EntityKind::Product, p))
            .collect()
    }

    fn listed_incompatible(&self, a: &str, b: &str) -> bool {
        self.all(EntityKind::CompatibilityRule)
            .into_iter()
            .any(|r| {
                r.bool_attr("compatible") == Some(false)
                    && ((s(r, "product_a") == a && s(r, "product_b") == b)
                        || (s(r, "product_a") == b && s(r, "product_b") == a))
            })
    }

    /// `(compatible, draw_watts, psu_watts, socket_mismatch)` for a part list.
    pub fn assess(&self, parts: &[&Entity]) -> (bool, i64, i64, Option<(String, String)>) {
        let mut ok = true;
        for (i, a) in parts.iter().enumerate() {
            for b in &parts[i + 1..] {
                if self.listed_incompatible(&a.id.local, &b.id.local) {
                    ok = false;
                }
            }
        }
        let mut mismatch = None;
        for cpu in parts.iter().filter(|p| s(p, "category") == "cpu") {
            for board in parts.iter().filter(|p| s(p, "category") == "motherboard") {
                let (a, b) = (s(cpu, "socket"), s(board, "socket"));
                if !a.is_empty() && !b.is_empty() && a != b {
                    ok = false;
                    mismatch.get_or_insert((a.to_string(), b.to_string()));
                }
            }
        }
        let psu: i64 = parts
            .iter()
            .filter(|p| s(p, "category") == "psu")
            .map(|p| n(p, "power_watts"))
            .sum();
        let draw: i64 = parts
            .iter()
            .filter(|p| s(p, "category") != "psu")
            .map(|p| n(p, "power_watts"))
            .sum();
        if psu > 0 && draw * 5 > psu * 4 {
            ok = false;
        }
        (ok, draw, psu, mismatch)
    }
}
