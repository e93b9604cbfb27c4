use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::world::EntityKind;

const TOOLS_JSON: &str = include_str!("../../assets/tools.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    /// `YYYY-MM-DD` string.
    Date,
    StringList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    #[serde(rename = "type")]
    pub ty: ParamType,
    #[serde(default)]
    pub required: bool,
    pub description: String,
    #[serde(default, rename = "enum", skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimum: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maximum: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    /// Kind of entity whose local id this parameter carries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityKind>,
}

/// Declared ordering of a search tool, e.g. `["order_date desc", "id asc"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub kind: EntityKind,
    pub sort: Vec<String>,
    /// Per-tool override of the catalog-wide cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToolCategory {
    DatabaseQuery,
    OrderManagement,
    Communication,
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    pub category: ToolCategory,
    pub description: String,
    pub mutates: bool,
    pub params: BTreeMap<String, ParamDef>,
    pub returns: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: u32,
    pub default_search_cap: usize,
    pub tools: Vec<ToolDefinition>,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("malformed tool catalog: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate tool name {0}")]
    Duplicate(String),
    #[error("tool {0} has no handler")]
    NoHandler(String),
    #[error("search tool {tool} lacks the limit/offset parameters")]
    SearchParams { tool: String },
    #[error("default search cap must be positive")]
    ZeroCap,
}

impl Catalog {
    /// The embedded catalog. Panics only if the shipped asset is broken, which tests rule out.
    pub fn builtin() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(|| Catalog::parse(TOOLS_JSON).expect("embedded tools.json is valid"))
    }

    pub fn raw_json() -> &'static str {
        TOOLS_JSON
    }

    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        let catalog: Catalog = serde_json::from_str(text)?;
        catalog.check()?;
        Ok(catalog)
    }

    /// Structural checks beyond deserialization.
    pub fn check(&self) -> Result<(), CatalogError> {
        if self.default_search_cap == 0 {
            return Err(CatalogError::ZeroCap);
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tools {
            if !seen.insert(t.name.as_str()) {
                return Err(CatalogError::Duplicate(t.name.clone()));
            }
            if !super::handlers::has_handler(&t.name) {
                return Err(CatalogError::NoHandler(t.name.clone()));
            }
            if t.search.is_some()
                && !(t.params.contains_key("limit") && t.params.contains_key("offset"))
            {
                return Err(CatalogError::SearchParams {
                    tool: t.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolDefinition> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.iter().map(|t| t.name.as_str())
    }

    /// Hard ceiling on results per search call for `def`.
    pub fn cap_for(&self, def: &ToolDefinition) -> usize {
        def.search
            .as_ref()
            .and_then(|s| s.cap)
            .unwrap_or(self.default_search_cap)
    }
}
