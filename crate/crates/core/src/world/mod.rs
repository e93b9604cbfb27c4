//! Entity model, the immutable world store and forked episode sessions.

mod entity;
mod integrity;
mod kind;
pub mod schema;
mod session;
mod store;

pub use entity::{Entity, EntityId, EntityRecord};
pub use integrity::{check_entity, check_integrity, Violation};
pub use kind::{EntityKind, UnknownKind};
pub use schema::{FieldDef, FieldType, KindSchema, Schema};
pub use session::{
    fork_session, fork_session_with_id, EpisodeSession, Mutation, MutationError, MutationOp,
};
pub use store::{canonical_bytes, digest_of, WorldError, WorldState};

/// Read access shared by the base world and session overlays.
pub trait WorldView {
    fn get(&self, id: &EntityId) -> Option<&Entity>;

    /// Entities of one kind, sorted by local id.
    fn entities_of(&self, kind: EntityKind) -> Vec<&Entity>;

    fn count(&self, kind: EntityKind) -> usize {
        self.entities_of(kind).len()
    }

    fn contains(&self, id: &EntityId) -> bool {
        self.get(id).is_some()
    }

    /// Content hash over the canonical serialization of every visible entity.
    fn digest(&self) -> String
    where
        Self: Sized,
    {
        digest_of(self)
    }
}
