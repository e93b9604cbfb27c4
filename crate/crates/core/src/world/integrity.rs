use std::fmt;

use serde::Serialize;
use serde_json::Value;

use super::entity::{Entity, EntityId};
use super::kind::EntityKind;
use super::schema::Schema;
use super::WorldView;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Violation {
    DanglingReference {
        from: EntityId,
        field: String,
        target: EntityId,
    },
    Schema {
        entity: EntityId,
        field: String,
        problem: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingReference {
                from,
                field,
                target,
            } => {
                write!(f, "{from}.{field} -> {target}: dangling reference")
            }
            Violation::Schema {
                entity,
                field,
                problem,
            } => write!(f, "{entity}.{field}: {problem}"),
        }
    }
}

/// Schema conformance of a single entity, independent of any view.
pub fn check_entity(entity: &Entity) -> Vec<Violation> {
    let ks = Schema::builtin().kind(entity.kind());
    let mut problems = Vec::new();
    for (name, def) in &ks.fields {
        match entity.attributes.get(name) {
            None | Some(Value::Null) if def.required => {
                problems.push((name.clone(), "missing required field".to_string()))
            }
            None | Some(Value::Null) => {}
            Some(v) => def.ty.check(v, name, &mut problems),
        }
    }
    for name in entity.attributes.keys() {
        if !ks.fields.contains_key(name) {
            problems.push((name.clone(), "field not in schema".to_string()));
        }
    }
    problems
        .into_iter()
        .map(|(field, problem)| Violation::Schema {
            entity: entity.id.clone(),
            field,
            problem,
        })
        .collect()
}

/// Every dangling reference and schema violation visible in `view`.
pub fn check_integrity<V: WorldView + ?Sized>(view: &V) -> Vec<Violation> {
    let mut out = Vec::new();
    for kind in EntityKind::ALL {
        for entity in view.entities_of(kind) {
            out.extend(check_entity(entity));
            for (field, target) in entity.links() {
                if !view.contains(&target) {
                    out.push(Violation::DanglingReference {
                        from: entity.id.clone(),
                        field,
                        target,
                    });
                }
            }
        }
    }
    out
}
