use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::kind::EntityKind;
use super::schema::Schema;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId {
    pub kind: EntityKind,
    #[serde(rename = "id")]
    pub local: String,
}

impl EntityId {
    pub fn new(kind: EntityKind, local: impl Into<String>) -> Self {
        Self {
            kind,
            local: local.into(),
        }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.local)
    }
}

/// One row of the world. Reference-typed attributes hold target local ids;
/// the typed outgoing links are derived from the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: EntityId,
    pub attributes: BTreeMap<String, Value>,
}

impl Entity {
    pub fn new(kind: EntityKind, local: impl Into<String>) -> Self {
        Self {
            id: EntityId::new(kind, local),
            attributes: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.attributes.insert(name.to_string(), value.into());
        self
    }

    pub fn kind(&self) -> EntityKind {
        self.id.kind
    }

    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attributes.get(name).filter(|v| !v.is_null())
    }

    pub fn str_attr(&self, name: &str) -> Option<&str> {
        self.attr(name).and_then(Value::as_str)
    }

    pub fn int_attr(&self, name: &str) -> Option<i64> {
        self.attr(name).and_then(Value::as_i64)
    }

    pub fn bool_attr(&self, name: &str) -> Option<bool> {
        self.attr(name).and_then(Value::as_bool)
    }

    /// Outgoing references as (attribute path, target) pairs.
    pub fn links(&self) -> Vec<(String, EntityId)> {
        let schema = Schema::builtin().kind(self.id.kind);
        let mut out = Vec::new();
        for (name, value) in &self.attributes {
            if let Some(def) = schema.fields.get(name) {
                def.ty.collect_refs(value, name, &mut out);
            }
        }
        out
    }

    pub fn references(&self) -> Vec<EntityId> {
        let schema = Schema::builtin().kind(self.id.kind);
        let mut out = Vec::new();
        for (name, value) in &self.attributes {
            if let Some(def) = schema.fields.get(name) {
                def.ty.visit_refs(value, &mut |id| out.push(id));
            }
        }
        out
    }

    pub fn to_record(&self) -> EntityRecord {
        EntityRecord {
            id: self.id.local.clone(),
            kind: self.id.kind,
            attributes: self.attributes.clone(),
            references: self.references(),
        }
    }

    /// The entity as a JSON object, as returned by tools.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self.to_record()).expect("entity record serializes")
    }
}

/// Serialized form: `{id, kind, attributes, references}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub kind: EntityKind,
    pub attributes: BTreeMap<String, Value>,
    #[serde(default)]
    pub references: Vec<EntityId>,
}

impl EntityRecord {
    pub fn into_entity(self) -> Entity {
        Entity {
            id: EntityId::new(self.kind, self.id),
            attributes: self.attributes,
        }
    }
}
