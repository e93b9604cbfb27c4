use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::world::EntityKind;

/// Realistic messiness injected into generated records. Never breaks integrity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Fraction of timestamped records whose `updated_at` precedes `created_at`.
    pub conflicting_timestamp_rate: f64,
    /// Fraction of records flagged `incomplete` with optional fields dropped.
    pub incomplete_record_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            conflicting_timestamp_rate: 0.05,
            incomplete_record_rate: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenProfile {
    pub name: String,
    pub counts: BTreeMap<EntityKind, usize>,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown profile `{0}` (expected mini, standard or full)")]
    UnknownPreset(String),
    #[error("profile is missing a count for {0}")]
    MissingKind(EntityKind),
    #[error("unsatisfiable profile: {0}")]
    Unsatisfiable(String),
    #[error("noise rate {name} = {value} is outside [0, 1]")]
    NoiseOutOfRange { name: &'static str, value: f64 },
}

// Preset ratios are a repo choice; nothing upstream fixes a per-kind distribution.
const MINI: [(EntityKind, usize); 14] = [
    (EntityKind::Build, 4),
    (EntityKind::CompanyPolicy, 6),
    (EntityKind::CompatibilityRule, 4),
    (EntityKind::Customer, 10),
    (EntityKind::InventoryLevel, 20),
    (EntityKind::KbArticle, 6),
    (EntityKind::LoyaltyTier, 4),
    (EntityKind::Order, 30),
    (EntityKind::Product, 20),
    (EntityKind::Promotion, 5),
    (EntityKind::ShippingRecord, 20),
    (EntityKind::Sla, 4),
    (EntityKind::SupportTicket, 10),
    (EntityKind::WarrantyPolicy, 3),
];

const STANDARD: [(EntityKind, usize); 14] = [
    (EntityKind::Build, 20),
    (EntityKind::CompanyPolicy, 8),
    (EntityKind::CompatibilityRule, 12),
    (EntityKind::Customer, 50),
    (EntityKind::InventoryLevel, 40),
    (EntityKind::KbArticle, 15),
    (EntityKind::LoyaltyTier, 4),
    (EntityKind::Order, 160),
    (EntityKind::Product, 40),
    (EntityKind::Promotion, 8),
    (EntityKind::ShippingRecord, 100),
    (EntityKind::Sla, 4),
    (EntityKind::SupportTicket, 60),
    (EntityKind::WarrantyPolicy, 3),
];

const FULL: [(EntityKind, usize); 14] = [
    (EntityKind::Build, 120),
    (EntityKind::CompanyPolicy, 12),
    (EntityKind::CompatibilityRule, 80),
    (EntityKind::Customer, 300),
    (EntityKind::InventoryLevel, 300),
    (EntityKind::KbArticle, 60),
    (EntityKind::LoyaltyTier, 4),
    (EntityKind::Order, 1000),
    (EntityKind::Product, 150),
    (EntityKind::Promotion, 30),
    (EntityKind::ShippingRecord, 700),
    (EntityKind::Sla, 4),
    (EntityKind::SupportTicket, 400),
    (EntityKind::WarrantyPolicy, 6),
];

impl GenProfile {
    pub fn preset(name: &str) -> Result<GenProfile, ProfileError> {
        let table: &[(EntityKind, usize)] = match name {
            "mini" => &MINI,
            "standard" => &STANDARD,
            "full" => &FULL,
            other => return Err(ProfileError::UnknownPreset(other.to_string())),
        };
        Ok(GenProfile {
            name: name.to_string(),
            counts: table.iter().copied().collect(),
            noise: NoiseConfig::default(),
        })
    }

    pub fn mini() -> GenProfile {
        Self::preset("mini").unwrap()
    }

    pub fn count(&self, kind: EntityKind) -> usize {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        use EntityKind::*;
        for kind in EntityKind::ALL {
            if !self.counts.contains_key(&kind) {
                return Err(ProfileError::MissingKind(kind));
            }
        }
        for (name, value) in [
            (
                "conflicting_timestamp_rate",
                self.noise.conflicting_timestamp_rate,
            ),
            ("incomplete_record_rate", self.noise.incomplete_record_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProfileError::NoiseOutOfRange { name, value });
            }
        }
        let c = |k| self.count(k);
        let needs =
            |dependent: EntityKind, on: EntityKind, min: usize| -> Result<(), ProfileError> {
                if c(dependent) > 0 && c(on) < min {
                    Err(ProfileError::Unsatisfiable(format!(
                        "{} {dependent} requested but only {} {on} (need {min})",
                        c(dependent),
                        c(on)
                    )))
                } else {
                    Ok(())
                }
            };
        needs(Order, Customer, 1)?;
        needs(Order, Product, 1)?;
        needs(Customer, LoyaltyTier, 1)?;
        needs(Product, WarrantyPolicy, 1)?;
        needs(SupportTicket, Customer, 1)?;
        needs(SupportTicket, Sla, 1)?;
        needs(Build, Customer, 1)?;
        needs(Build, Product, 1)?;
        needs(ShippingRecord, Order, 1)?;
        needs(InventoryLevel, Product, 1)?;
        needs(CompatibilityRule, Product, 2)?;
        needs(KbArticle, Product, 1)?;
        if c(ShippingRecord) > c(Order) {
            return Err(ProfileError::Unsatisfiable(format!(
                "{} shipping records exceed {} orders (one record per order)",
                c(ShippingRecord),
                c(Order)
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_all_kinds_and_validate() {
        for name in ["mini", "standard", "full"] {
            let p = GenProfile::preset(name).unwrap();
            assert_eq!(p.counts.len(), 14);
            p.validate().unwrap();
        }
        assert!(GenProfile::preset("full").unwrap().total() >= 2500);
        let standard = GenProfile::preset("standard").unwrap().total();
        assert!((450..=600).contains(&standard), "{standard}");
    }

    #[test]
    fn orders_without_customers_is_unsatisfiable() {
        let mut p = GenProfile::mini();
        p.counts.insert(EntityKind::Customer, 0);
        assert!(matches!(p.validate(), Err(ProfileError::Unsatisfiable(_))));
    }

    #[test]
    fn missing_kind_and_bad_noise() {
        let mut p = GenProfile::mini();
        p.counts.remove(&EntityKind::Sla);
        assert_eq!(
            p.validate(),
            Err(ProfileError::MissingKind(EntityKind::Sla))
        );
        let mut p = GenProfile::mini();
        p.noise.incomplete_record_rate = 1.5;
        assert!(matches!(
            p.validate(),
            Err(ProfileError::NoiseOutOfRange { .. })
        ));
    }
}
