use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::entity::{Entity, EntityId};
use super::kind::EntityKind;
use super::WorldView;

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("duplicate entity {0}")]
    Duplicate(EntityId),
}

/// The generated world. Immutable once built and cheap to share behind an `Arc`.
#[derive(Debug, Clone)]
pub struct WorldState {
    seed: u64,
    profile: String,
    entities: BTreeMap<EntityKind, BTreeMap<String, Entity>>,
    digest: String,
}

impl WorldState {
    pub fn from_entities(
        seed: u64,
        profile: impl Into<String>,
        entities: impl IntoIterator<Item = Entity>,
    ) -> Result<Self, WorldError> {
        let mut by_kind: BTreeMap<EntityKind, BTreeMap<String, Entity>> = EntityKind::ALL
            .iter()
            .map(|k| (*k, BTreeMap::new()))
            .collect();
        for entity in entities {
            let slot = by_kind.get_mut(&entity.kind()).unwrap();
            if slot.contains_key(&entity.id.local) {
                return Err(WorldError::Duplicate(entity.id));
            }
            slot.insert(entity.id.local.clone(), entity);
        }
        let mut world = WorldState {
            seed,
            profile: profile.into(),
            entities: by_kind,
            digest: String::new(),
        };
        world.digest = digest_of(&world);
        Ok(world)
    }

    pub fn empty(seed: u64, profile: impl Into<String>) -> Self {
        Self::from_entities(seed, profile, std::iter::empty()).unwrap()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn profile(&self) -> &str {
        &self.profile
    }

    /// Digest computed once at construction.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn total_entities(&self) -> usize {
        self.entities.values().map(BTreeMap::len).sum()
    }

    pub fn counts(&self) -> BTreeMap<EntityKind, usize> {
        self.entities.iter().map(|(k, m)| (*k, m.len())).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values().flat_map(|m| m.values())
    }
}

impl WorldView for WorldState {
    fn get(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(&id.kind).and_then(|m| m.get(&id.local))
    }

    fn entities_of(&self, kind: EntityKind) -> Vec<&Entity> {
        self.entities
            .get(&kind)
            .map(|m| m.values().collect())
            .unwrap_or_default()
    }

    fn count(&self, kind: EntityKind) -> usize {
        self.entities.get(&kind).map_or(0, BTreeMap::len)
    }
}

/// Borrowing twin of `EntityRecord`; serializes to the same bytes without cloning attributes.
#[derive(Serialize)]
struct RecordRef<'a> {
    id: &'a str,
    kind: EntityKind,
    attributes: &'a BTreeMap<String, serde_json::Value>,
    references: Vec<EntityId>,
}

impl<'a> RecordRef<'a> {
    fn of(e: &'a Entity) -> Self {
        RecordRef {
            id: &e.id.local,
            kind: e.id.kind,
            attributes: &e.attributes,
            references: e.references(),
        }
    }
}

/// Canonical serialization of an entity slice: compact JSON array of records.
/// Callers must pass entities already sorted by (kind, local).
pub fn canonical_bytes<'a>(entities: impl IntoIterator<Item = &'a Entity>) -> Vec<u8> {
    let mut out = Vec::with_capacity(4096);
    out.push(b'[');
    for (i, e) in entities.into_iter().enumerate() {
        if i > 0 {
            out.push(b',');
        }
        serde_json::to_writer(&mut out, &RecordRef::of(e)).expect("record serializes");
    }
    out.push(b']');
    out
}

/// SHA-256 (hex) of the canonical serialization of everything visible in `view`.
pub fn digest_of<V: WorldView + ?Sized>(view: &V) -> String {
    let mut all = Vec::new();
    for kind in EntityKind::ALL {
        all.extend(view.entities_of(kind));
    }
    hex::encode(Sha256::digest(canonical_bytes(all)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_form_is_compact_and_sorted() {
        let e = Entity::new(EntityKind::Sla, "SLA-1")
            .with("resolution_hours", 48)
            .with("name", "Standard");
        let bytes = canonical_bytes([&e]);
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"[{"id":"SLA-1","kind":"sla","attributes":{"name":"Standard","resolution_hours":48},"references":[]}]"#
        );
    }

    #[test]
    fn digest_independent_of_insertion_order() {
        let a = Entity::new(EntityKind::Sla, "SLA-1").with("name", json!("a"));
        let b = Entity::new(EntityKind::Sla, "SLA-2").with("name", json!("b"));
        let w1 = WorldState::from_entities(1, "t", [a.clone(), b.clone()]).unwrap();
        let w2 = WorldState::from_entities(1, "t", [b, a]).unwrap();
        assert_eq!(w1.digest(), w2.digest());
    }

    #[test]
    fn duplicate_rejected() {
        let a = Entity::new(EntityKind::Sla, "SLA-1");
        assert!(WorldState::from_entities(1, "t", [a.clone(), a]).is_err());
    }
}
