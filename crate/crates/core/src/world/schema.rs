//! Closed per-kind attribute schema.
//!
//! The schema ships as `assets/schema.json` and is embedded at compile time.
//! Reference fields hold the local id of the target entity; the target kind
//! comes from the field type, which is how an entity's outgoing references are
//! derived.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use chrono::{NaiveDate, NaiveDateTime};
use serde_json::Value;

use super::kind::EntityKind;
use super::EntityId;

const SCHEMA_JSON: &str = include_str!("../../assets/schema.json");

#[derive(Debug, Clone, PartialEq)]
pub enum FieldType {
    String,
    Integer,
    Number,
    Boolean,
    Date,
    DateTime,
    Enum(Vec<String>),
    List(Box<FieldType>),
    Ref(EntityKind),
    Object(BTreeMap<String, FieldDef>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDef {
    pub ty: FieldType,
    pub required: bool,
}

#[derive(Debug, Clone)]
pub struct KindSchema {
    pub kind: EntityKind,
    pub id_prefix: String,
    pub fields: BTreeMap<String, FieldDef>,
}

#[derive(Debug, Clone)]
pub struct Schema {
    pub version: u32,
    kinds: BTreeMap<EntityKind, KindSchema>,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema malformed at {path}: {message}")]
    Malformed { path: String, message: String },
}

fn malformed(path: &str, message: impl Into<String>) -> SchemaError {
    SchemaError::Malformed {
        path: path.to_string(),
        message: message.into(),
    }
}

impl Schema {
    /// The schema embedded in this build.
    pub fn builtin() -> &'static Schema {
        static SCHEMA: OnceLock<Schema> = OnceLock::new();
        SCHEMA.get_or_init(|| Schema::parse(SCHEMA_JSON).expect("embedded schema.json is valid"))
    }

    pub fn raw_json() -> &'static str {
        SCHEMA_JSON
    }

    pub fn parse(text: &str) -> Result<Schema, SchemaError> {
        let root: Value = serde_json::from_str(text)?;
        let version = root
            .get("version")
            .and_then(Value::as_u64)
            .ok_or_else(|| malformed("version", "missing integer"))? as u32;
        let common = match root.get("common_fields") {
            Some(v) => parse_fields(v, "common_fields")?,
            None => BTreeMap::new(),
        };
        let kinds_obj = root
            .get("kinds")
            .and_then(Value::as_object)
            .ok_or_else(|| malformed("kinds", "missing object"))?;
        let mut kinds = BTreeMap::new();
        for (name, def) in kinds_obj {
            let kind: EntityKind = name
                .parse()
                .map_err(|_| malformed("kinds", format!("unknown kind `{name}`")))?;
            let path = format!("kinds.{name}");
            let id_prefix = def
                .get("id_prefix")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed(&path, "missing id_prefix"))?
                .to_string();
            let mut fields = parse_fields(
                def.get("fields")
                    .ok_or_else(|| malformed(&path, "missing fields"))?,
                &path,
            )?;
            for (k, v) in &common {
                fields.entry(k.clone()).or_insert_with(|| v.clone());
            }
            kinds.insert(
                kind,
                KindSchema {
                    kind,
                    id_prefix,
                    fields,
                },
            );
        }
        for kind in EntityKind::ALL {
            if !kinds.contains_key(&kind) {
                return Err(malformed("kinds", format!("kind `{kind}` has no schema")));
            }
        }
        Ok(Schema { version, kinds })
    }

    pub fn kind(&self, kind: EntityKind) -> &KindSchema {
        &self.kinds[&kind]
    }

    pub fn kinds(&self) -> impl Iterator<Item = &KindSchema> {
        self.kinds.values()
    }
}

fn parse_fields(v: &Value, path: &str) -> Result<BTreeMap<String, FieldDef>, SchemaError> {
    let obj = v
        .as_object()
        .ok_or_else(|| malformed(path, "fields must be an object"))?;
    let mut out = BTreeMap::new();
    for (name, def) in obj {
        let fpath = format!("{path}.{name}");
        let ty = parse_type(
            def.get("type")
                .ok_or_else(|| malformed(&fpath, "missing type"))?,
            &fpath,
        )?;
        let required = def
            .get("required")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        out.insert(name.clone(), FieldDef { ty, required });
    }
    Ok(out)
}

fn parse_type(v: &Value, path: &str) -> Result<FieldType, SchemaError> {
    match v {
        Value::String(s) => match s.as_str() {
            "string" => Ok(FieldType::String),
            "integer" => Ok(FieldType::Integer),
            "number" => Ok(FieldType::Number),
            "boolean" => Ok(FieldType::Boolean),
            "date" => Ok(FieldType::Date),
            "datetime" => Ok(FieldType::DateTime),
            other => Err(malformed(path, format!("unknown scalar type `{other}`"))),
        },
        Value::Object(map) if map.len() == 1 => {
            let (tag, inner) = map.iter().next().unwrap();
            match tag.as_str() {
                "enum" => {
                    let values = inner
                        .as_array()
                        .ok_or_else(|| malformed(path, "enum needs an array"))?
                        .iter()
                        .map(|x| {
                            x.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| malformed(path, "enum values must be strings"))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(FieldType::Enum(values))
                }
                "list" => Ok(FieldType::List(Box::new(parse_type(inner, path)?))),
                "ref" => {
                    let name = inner
                        .as_str()
                        .ok_or_else(|| malformed(path, "ref needs a kind name"))?;
                    let kind = name
                        .parse()
                        .map_err(|_| malformed(path, format!("unknown ref kind `{name}`")))?;
                    Ok(FieldType::Ref(kind))
                }
                "object" => Ok(FieldType::Object(parse_fields(inner, path)?)),
                other => Err(malformed(
                    path,
                    format!("unknown type constructor `{other}`"),
                )),
            }
        }
        _ => Err(malformed(
            path,
            "type must be a string or single-key object",
        )),
    }
}

impl FieldType {
    /// Checks `value` against this type, appending human-readable problems.
    pub fn check(&self, value: &Value, path: &str, problems: &mut Vec<(String, String)>) {
        let mut fail = |msg: String| problems.push((path.to_string(), msg));
        match self {
            FieldType::String => {
                if !value.is_string() {
                    fail(format!("expected string, got {}", type_name(value)));
                }
            }
            FieldType::Integer => {
                if !(value.is_i64() || value.is_u64()) {
                    fail(format!("expected integer, got {}", type_name(value)));
                }
            }
            FieldType::Number => {
                if !value.is_number() {
                    fail(format!("expected number, got {}", type_name(value)));
                }
            }
            FieldType::Boolean => {
                if !value.is_boolean() {
                    fail(format!("expected boolean, got {}", type_name(value)));
                }
            }
            FieldType::Date => match value.as_str() {
                Some(s) if NaiveDate::parse_from_str(s, "%Y-%m-%d").is_ok() => {}
                _ => fail(format!("expected date YYYY-MM-DD, got {value}")),
            },
            FieldType::DateTime => match value.as_str() {
                Some(s) if NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").is_ok() => {}
                _ => fail(format!(
                    "expected datetime YYYY-MM-DDTHH:MM:SS, got {value}"
                )),
            },
            FieldType::Enum(values) => match value.as_str() {
                Some(s) if values.iter().any(|v| v == s) => {}
                _ => fail(format!("expected one of {values:?}, got {value}")),
            },
            FieldType::Ref(kind) => {
                if !value.is_string() {
                    fail(format!(
                        "expected {kind} id string, got {}",
                        type_name(value)
                    ));
                }
            }
            FieldType::List(inner) => match value.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        inner.check(item, &format!("{path}[{i}]"), problems);
                    }
                }
                None => fail(format!("expected list, got {}", type_name(value))),
            },
            FieldType::Object(fields) => match value.as_object() {
                Some(obj) => {
                    for (name, def) in fields {
                        match obj.get(name) {
                            Some(Value::Null) | None if def.required => problems
                                .push((format!("{path}.{name}"), "missing required field".into())),
                            Some(Value::Null) | None => {}
                            Some(v) => def.ty.check(v, &format!("{path}.{name}"), problems),
                        }
                    }
                    for name in obj.keys() {
                        if !fields.contains_key(name) {
                            problems.push((format!("{path}.{name}"), "field not in schema".into()));
                        }
                    }
                }
                None => fail(format!("expected object, got {}", type_name(value))),
            },
        }
    }

    /// Targets of every reference reachable in `value`, in the same order as `collect_refs`.
    pub fn visit_refs(&self, value: &Value, f: &mut impl FnMut(EntityId)) {
        match self {
            FieldType::Ref(kind) => {
                if let Some(s) = value.as_str() {
                    f(EntityId::new(*kind, s));
                }
            }
            FieldType::List(inner) => {
                for item in value.as_array().into_iter().flatten() {
                    inner.visit_refs(item, f);
                }
            }
            FieldType::Object(fields) => {
                if let Some(obj) = value.as_object() {
                    for (name, def) in fields {
                        if let Some(v) = obj.get(name) {
                            def.ty.visit_refs(v, f);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Collects (field path, target) pairs for every reference reachable in `value`.
    pub fn collect_refs(&self, value: &Value, path: &str, out: &mut Vec<(String, EntityId)>) {
        match self {
            FieldType::Ref(kind) => {
                if let Some(s) = value.as_str() {
                    out.push((path.to_string(), EntityId::new(*kind, s)));
                }
            }
            FieldType::List(inner) => {
                if let Some(items) = value.as_array() {
                    for (i, item) in items.iter().enumerate() {
                        inner.collect_refs(item, &format!("{path}[{i}]"), out);
                    }
                }
            }
            FieldType::Object(fields) => {
                if let Some(obj) = value.as_object() {
                    for (name, def) in fields {
                        if let Some(v) = obj.get(name) {
                            def.ty.collect_refs(v, &format!("{path}.{name}"), out);
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

pub(crate) fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "list",
        Value::Object(_) => "object",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builtin_schema_covers_all_kinds() {
        let schema = Schema::builtin();
        assert_eq!(schema.version, 1);
        for kind in EntityKind::ALL {
            let ks = schema.kind(kind);
            assert!(
                ks.fields.contains_key("incomplete"),
                "{kind} lacks common field"
            );
            assert!(!ks.id_prefix.is_empty());
        }
    }

    #[test]
    fn nested_object_refs_are_collected() {
        let schema = Schema::builtin();
        let items = &schema.kind(EntityKind::Order).fields["items"];
        let mut refs = Vec::new();
        items.ty.collect_refs(
            &json!([{"product_id": "PRD-00001", "quantity": 1, "unit_price_cents": 100}]),
            "items",
            &mut refs,
        );
        assert_eq!(
            refs,
            vec![(
                "items[0].product_id".to_string(),
                EntityId::new(EntityKind::Product, "PRD-00001")
            )]
        );
    }

    #[test]
    fn type_check_reports_paths() {
        let ty = FieldType::List(Box::new(FieldType::Integer));
        let mut problems = Vec::new();
        ty.check(&json!([1, "two", 3]), "qty", &mut problems);
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].0, "qty[1]");
    }

    #[test]
    fn rejects_unknown_scalar() {
        let text =
            r#"{"version":1,"kinds":{"build":{"id_prefix":"B","fields":{"x":{"type":"blob"}}}}}"#;
        assert!(Schema::parse(text).is_err());
    }
}
