//! Copy-on-write episode sessions over a shared base world.
//!
//! A session never touches its base. Writes land in an overlay map keyed by
//! entity id, where `None` is a tombstone. Batches are staged in a scratch
//! overlay and validated as a whole before they are merged, so a rejected
//! batch leaves no trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::entity::{Entity, EntityId};
use super::integrity::{check_entity, Violation};
use super::kind::EntityKind;
use super::store::WorldState;
use super::WorldView;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum MutationOp {
    /// `Value::Null` clears an optional attribute.
    SetAttribute {
        name: String,
        value: Value,
    },
    CreateEntity {
        attributes: BTreeMap<String, Value>,
    },
    DeleteEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    pub target: EntityId,
    #[serde(flatten)]
    pub op: MutationOp,
}

impl Mutation {
    pub fn set(target: EntityId, name: &str, value: impl Into<Value>) -> Self {
        Self {
            target,
            op: MutationOp::SetAttribute {
                name: name.to_string(),
                value: value.into(),
            },
        }
    }

    pub fn create(entity: Entity) -> Self {
        Self {
            target: entity.id,
            op: MutationOp::CreateEntity {
                attributes: entity.attributes,
            },
        }
    }

    pub fn delete(target: EntityId) -> Self {
        Self {
            target,
            op: MutationOp::DeleteEntity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MutationError {
    #[error("integrity violation: {}", join(.0))]
    IntegrityViolation(Vec<Violation>),
    #[error("unknown target {0}")]
    UnknownTarget(EntityId),
    #[error("schema violation: {}", join(.0))]
    SchemaViolation(Vec<Violation>),
    #[error("entity {0} already exists")]
    AlreadyExists(EntityId),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub struct EpisodeSession {
    id: String,
    base: Arc<WorldState>,
    overlay: BTreeMap<EntityId, Option<Entity>>,
    version: u64,
}

impl fmt::Debug for EpisodeSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EpisodeSession")
            .field("id", &self.id)
            .field("base", &self.base.digest())
            .field("overlay_len", &self.overlay.len())
            .field("version", &self.version)
            .finish()
    }
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

/// Forks a fresh session with a process-unique id.
pub fn fork_session(world: &Arc<WorldState>) -> EpisodeSession {
    let n = NEXT_SESSION.fetch_add(1, Ordering::Relaxed);
    fork_session_with_id(world, format!("sess-{n:08}"))
}

/// Forks with a caller-chosen id, for reproducible trajectories.
pub fn fork_session_with_id(world: &Arc<WorldState>, id: impl Into<String>) -> EpisodeSession {
    EpisodeSession {
        id: id.into(),
        base: Arc::clone(world),
        overlay: BTreeMap::new(),
        version: 0,
    }
}

impl EpisodeSession {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn base(&self) -> &Arc<WorldState> {
        &self.base
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn apply_mutation(&mut self, m: Mutation) -> Result<u64, MutationError> {
        self.apply_batch(vec![m])
    }

    /// Applies every mutation or none. On success the version advances by one.
    pub fn apply_batch(&mut self, batch: Vec<Mutation>) -> Result<u64, MutationError> {
        let mut staged = Staged {
            session: self,
            delta: BTreeMap::new(),
        };
        let mut touched = BTreeSet::new();
        let mut deleted = BTreeSet::new();
        for m in batch {
            let target = m.target.clone();
            match m.op {
                MutationOp::SetAttribute { name, value } => {
                    let mut entity = staged
                        .get(&target)
                        .cloned()
                        .ok_or_else(|| MutationError::UnknownTarget(target.clone()))?;
                    if value.is_null() {
                        entity.attributes.remove(&name);
                    } else {
                        entity.attributes.insert(name, value);
                    }
                    staged.delta.insert(target.clone(), Some(entity));
                    touched.insert(target);
                }
                MutationOp::CreateEntity { attributes } => {
                    if staged.get(&target).is_some() {
                        return Err(MutationError::AlreadyExists(target));
                    }
                    let entity = Entity {
                        id: target.clone(),
                        attributes,
                    };
                    staged.delta.insert(target.clone(), Some(entity));
                    deleted.remove(&target);
                    touched.insert(target);
                }
                MutationOp::DeleteEntity => {
                    if staged.get(&target).is_none() {
                        return Err(MutationError::UnknownTarget(target));
                    }
                    staged.delta.insert(target.clone(), None);
                    touched.remove(&target);
                    deleted.insert(target);
                }
            }
        }

        let mut schema_faults = Vec::new();
        let mut dangling = Vec::new();
        for id in &touched {
            let entity = staged.get(id).expect("touched entity is live");
            schema_faults.extend(check_entity(entity));
            for (field, target) in entity.links() {
                if !staged.contains(&target) {
                    dangling.push(Violation::DanglingReference {
                        from: id.clone(),
                        field,
                        target,
                    });
                }
            }
        }
        if !schema_faults.is_empty() {
            return Err(MutationError::SchemaViolation(schema_faults));
        }
        if !deleted.is_empty() {
            for kind in EntityKind::ALL {
                for entity in staged.entities_of(kind) {
                    // Paths are only built for entities that point at something deleted.
                    if touched.contains(&entity.id)
                        || !entity.references().iter().any(|r| deleted.contains(r))
                    {
                        continue;
                    }
                    for (field, target) in entity.links() {
                        if deleted.contains(&target) {
                            dangling.push(Violation::DanglingReference {
                                from: entity.id.clone(),
                                field,
                                target,
                            });
                        }
                    }
                }
            }
        }
        if !dangling.is_empty() {
            return Err(MutationError::IntegrityViolation(dangling));
        }

        let delta = staged.delta;
        self.overlay.extend(delta);
        self.version += 1;
        Ok(self.version)
    }

    /// Ids written by this session so far, including tombstones.
    pub fn touched(&self) -> impl Iterator<Item = &EntityId> {
        self.overlay.keys()
    }
}

fn lookup<'a>(
    base: &'a WorldState,
    overlay: &'a BTreeMap<EntityId, Option<Entity>>,
    id: &EntityId,
) -> Option<&'a Entity> {
    match overlay.get(id) {
        Some(slot) => slot.as_ref(),
        None => base.get(id),
    }
}

fn merged<'a>(
    base: Vec<&'a Entity>,
    layers: &[&'a BTreeMap<EntityId, Option<Entity>>],
    kind: EntityKind,
) -> Vec<&'a Entity> {
    let mut out: BTreeMap<&'a str, Option<&'a Entity>> = base
        .into_iter()
        .map(|e| (e.id.local.as_str(), Some(e)))
        .collect();
    let lo = EntityId::new(kind, "");
    for layer in layers {
        for (id, slot) in layer.range(lo.clone()..) {
            if id.kind != kind {
                break;
            }
            out.insert(id.local.as_str(), slot.as_ref());
        }
    }
    out.into_values().flatten().collect()
}

impl WorldView for EpisodeSession {
    fn get(&self, id: &EntityId) -> Option<&Entity> {
        lookup(&self.base, &self.overlay, id)
    }

    fn entities_of(&self, kind: EntityKind) -> Vec<&Entity> {
        if self.overlay.is_empty() {
            return self.base.entities_of(kind);
        }
        merged(self.base.entities_of(kind), &[&self.overlay], kind)
    }

    /// An untouched session shares the base digest, which is computed once.
    fn digest(&self) -> String {
        if self.overlay.is_empty() {
            return self.base.digest().to_string();
        }
        super::digest_of(self)
    }
}

struct Staged<'s> {
    session: &'s EpisodeSession,
    delta: BTreeMap<EntityId, Option<Entity>>,
}

impl WorldView for Staged<'_> {
    fn get(&self, id: &EntityId) -> Option<&Entity> {
        match self.delta.get(id) {
            Some(slot) => slot.as_ref(),
            None => self.session.get(id),
        }
    }

    fn entities_of(&self, kind: EntityKind) -> Vec<&Entity> {
        merged(
            self.session.base.entities_of(kind),
            &[&self.session.overlay, &self.delta],
            kind,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::check_integrity;
    use serde_json::json;

    fn tiny_world() -> Arc<WorldState> {
        let tier = Entity::new(EntityKind::LoyaltyTier, "TIER-1")
            .with("name", "Bronze")
            .with("rank", 1)
            .with("discount_percent", 0)
            .with("return_window_bonus_days", 0);
        let customer = Entity::new(EntityKind::Customer, "CUS-1")
            .with("name", "Ada Byron")
            .with("loyalty_tier_id", "TIER-1")
            .with("signup_date", "2024-01-02")
            .with("order_ids", json!([]));
        let sla = Entity::new(EntityKind::Sla, "SLA-1")
            .with("name", "Standard")
            .with("priority", "low")
            .with("first_response_hours", 24)
            .with("resolution_hours", 72);
        let ticket = Entity::new(EntityKind::SupportTicket, "TKT-1")
            .with("customer_id", "CUS-1")
            .with("subject", "Where is my order")
            .with("description", "It has not arrived")
            .with("status", "open")
            .with("priority", "low")
            .with("sla_id", "SLA-1")
            .with("created_at", "2025-01-01T10:00:00")
            .with("updated_at", "2025-01-01T10:00:00")
            .with("notes", json!([]));
        let w = WorldState::from_entities(0, "tiny", [tier, customer, sla, ticket]).unwrap();
        assert!(check_integrity(&w).is_empty(), "{:?}", check_integrity(&w));
        Arc::new(w)
    }

    fn tid() -> EntityId {
        EntityId::new(EntityKind::SupportTicket, "TKT-1")
    }

    #[test]
    fn sessions_are_isolated() {
        let w = tiny_world();
        let mut a = fork_session(&w);
        let b = fork_session(&w);
        assert_ne!(a.id(), b.id());
        assert_eq!(a.version(), 0);
        let v = a
            .apply_mutation(Mutation::set(tid(), "status", "resolved"))
            .unwrap();
        assert_eq!(v, 1);
        assert_eq!(a.get(&tid()).unwrap().str_attr("status"), Some("resolved"));
        assert_eq!(b.get(&tid()).unwrap().str_attr("status"), Some("open"));
        assert_eq!(w.get(&tid()).unwrap().str_attr("status"), Some("open"));
        assert_eq!(w.digest(), digest_of_world(&w));
    }

    fn digest_of_world(w: &WorldState) -> String {
        crate::world::digest_of(w)
    }

    #[test]
    fn empty_world_forks_empty() {
        let w = Arc::new(WorldState::empty(0, "empty"));
        let s = fork_session(&w);
        for kind in EntityKind::ALL {
            assert!(s.entities_of(kind).is_empty());
        }
    }

    #[test]
    fn delete_referenced_entity_is_rejected_atomically() {
        let w = tiny_world();
        let mut s = fork_session(&w);
        let before = s.digest();
        let err = s
            .apply_batch(vec![
                Mutation::set(tid(), "status", "closed"),
                Mutation::delete(EntityId::new(EntityKind::Customer, "CUS-1")),
            ])
            .unwrap_err();
        assert!(matches!(err, MutationError::IntegrityViolation(ref v) if v.len() == 1));
        assert_eq!(s.version(), 0);
        assert_eq!(s.digest(), before);
        assert_eq!(s.get(&tid()).unwrap().str_attr("status"), Some("open"));
    }

    #[test]
    fn delete_then_recreate_within_batch() {
        let w = tiny_world();
        let mut s = fork_session(&w);
        let t = s.get(&tid()).unwrap().clone();
        s.apply_batch(vec![Mutation::delete(tid()), Mutation::create(t.clone())])
            .unwrap();
        assert_eq!(s.get(&tid()), Some(&t));
        assert!(check_integrity(&s).is_empty());
    }

    #[test]
    fn schema_and_target_errors() {
        let w = tiny_world();
        let mut s = fork_session(&w);
        let err = s
            .apply_mutation(Mutation::set(tid(), "mood", "grumpy"))
            .unwrap_err();
        assert!(matches!(err, MutationError::SchemaViolation(_)));
        let err = s
            .apply_mutation(Mutation::set(tid(), "status", "vaporized"))
            .unwrap_err();
        assert!(matches!(err, MutationError::SchemaViolation(_)));
        let ghost = EntityId::new(EntityKind::SupportTicket, "TKT-404");
        let err = s
            .apply_mutation(Mutation::delete(ghost.clone()))
            .unwrap_err();
        assert_eq!(err, MutationError::UnknownTarget(ghost));
        assert_eq!(s.version(), 0);
    }

    #[test]
    fn create_with_dangling_reference_rejected_and_valid_create_accepted() {
        let w = tiny_world();
        let mut s = fork_session(&w);
        let mut t = s.get(&tid()).unwrap().clone();
        t.id.local = "TKT-2".into();
        t.attributes.insert("customer_id".into(), json!("CUS-404"));
        let err = s.apply_mutation(Mutation::create(t.clone())).unwrap_err();
        assert!(matches!(err, MutationError::IntegrityViolation(_)));
        t.attributes.insert("customer_id".into(), json!("CUS-1"));
        s.apply_mutation(Mutation::create(t)).unwrap();
        assert_eq!(s.count(EntityKind::SupportTicket), 2);
        assert!(check_integrity(&s).is_empty());
        let err = s
            .apply_mutation(Mutation::create(w.get(&tid()).unwrap().clone()))
            .unwrap_err();
        assert!(matches!(err, MutationError::AlreadyExists(_)));
    }
}
