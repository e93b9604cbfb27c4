use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The fourteen entity kinds of the simulated support backend.
///
/// Variants are declared in lexical order of their wire names so the derived
/// `Ord` matches the canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Build,
    CompanyPolicy,
    CompatibilityRule,
    Customer,
    InventoryLevel,
    KbArticle,
    LoyaltyTier,
    Order,
    Product,
    Promotion,
    ShippingRecord,
    Sla,
    SupportTicket,
    WarrantyPolicy,
}

impl EntityKind {
    pub const ALL: [EntityKind; 14] = [
        EntityKind::Build,
        EntityKind::CompanyPolicy,
        EntityKind::CompatibilityRule,
        EntityKind::Customer,
        EntityKind::InventoryLevel,
        EntityKind::KbArticle,
        EntityKind::LoyaltyTier,
        EntityKind::Order,
        EntityKind::Product,
        EntityKind::Promotion,
        EntityKind::ShippingRecord,
        EntityKind::Sla,
        EntityKind::SupportTicket,
        EntityKind::WarrantyPolicy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Build => "build",
            EntityKind::CompanyPolicy => "company_policy",
            EntityKind::CompatibilityRule => "compatibility_rule",
            EntityKind::Customer => "customer",
            EntityKind::InventoryLevel => "inventory_level",
            EntityKind::KbArticle => "kb_article",
            EntityKind::LoyaltyTier => "loyalty_tier",
            EntityKind::Order => "order",
            EntityKind::Product => "product",
            EntityKind::Promotion => "promotion",
            EntityKind::ShippingRecord => "shipping_record",
            EntityKind::Sla => "sla",
            EntityKind::SupportTicket => "support_ticket",
            EntityKind::WarrantyPolicy => "warranty_policy",
        }
    }

    /// Stable position in [`EntityKind::ALL`], used to key random streams.
    pub fn index(self) -> usize {
        EntityKind::ALL.iter().position(|k| *k == self).unwrap()
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown entity kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for EntityKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}
