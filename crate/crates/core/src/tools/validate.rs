use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::catalog::{ParamDef, ParamType, ToolDefinition};
use crate::clock;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgViolation {
    pub argument: String,
    pub problem: String,
}

impl ArgViolation {
    fn new(argument: &str, problem: impl Into<String>) -> Self {
        Self {
            argument: argument.to_string(),
            problem: problem.into(),
        }
    }
}

/// Checks `args` against the parameter schema of `def` and reports every
/// violation, in argument-name order. `null` counts as absent.
pub fn validate_args(
    def: &ToolDefinition,
    args: &Map<String, Value>,
) -> Result<(), Vec<ArgViolation>> {
    let mut out = Vec::new();
    for (name, value) in args {
        if !def.params.contains_key(name) {
            out.push(ArgViolation::new(name, "unknown argument"));
        } else if !value.is_null() {
            check_value(name, &def.params[name], value, &mut out);
        }
    }
    for (name, p) in &def.params {
        if p.required && args.get(name).is_none_or(Value::is_null) {
            out.push(ArgViolation::new(name, "missing required argument"));
        }
    }
    out.sort_by(|a, b| a.argument.cmp(&b.argument));
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn check_value(name: &str, p: &ParamDef, v: &Value, out: &mut Vec<ArgViolation>) {
    let type_ok = match p.ty {
        ParamType::String => v.is_string(),
        ParamType::Integer => v.is_i64() || v.is_u64(),
        ParamType::Number => v.is_number(),
        ParamType::Boolean => v.is_boolean(),
        ParamType::Date => v.as_str().is_some_and(|s| clock::parse_date(s).is_some()),
        ParamType::StringList => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
    };
    if !type_ok {
        let expected = match p.ty {
            ParamType::String => "a string",
            ParamType::Integer => "an integer",
            ParamType::Number => "a number",
            ParamType::Boolean => "a boolean",
            ParamType::Date => "a YYYY-MM-DD date",
            ParamType::StringList => "a list of strings",
        };
        out.push(ArgViolation::new(
            name,
            format!("expected {expected}, got {v}"),
        ));
        return;
    }
    if let (Some(allowed), Some(s)) = (&p.allowed, v.as_str()) {
        if !allowed.iter().any(|a| a == s) {
            out.push(ArgViolation::new(
                name,
                format!("`{s}` is not one of {}", allowed.join(", ")),
            ));
        }
    }
    if let Some(n) = v.as_f64() {
        if let Some(min) = p.minimum {
            if n < min as f64 {
                out.push(ArgViolation::new(
                    name,
                    format!("{v} is below the minimum {min}"),
                ));
            }
        }
        if let Some(max) = p.maximum {
            if n > max as f64 {
                out.push(ArgViolation::new(
                    name,
                    format!("{v} is above the maximum {max}"),
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::Catalog;
    use serde_json::json;

    fn args(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn missing_required_names_the_argument() {
        let def = Catalog::builtin().get("getOrder").unwrap();
        let v = validate_args(def, &Map::new()).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].argument, "order_id");
    }

    #[test]
    fn negative_limit_is_one_violation() {
        let def = Catalog::builtin().get("searchOrders").unwrap();
        let v = validate_args(def, &args(json!({"limit": -1}))).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].argument, "limit");
    }

    #[test]
    fn valid_arguments_pass() {
        let def = Catalog::builtin().get("searchOrders").unwrap();
        let a = args(json!({"customer_id": "CUS-00001", "status": "delivered",
                            "date_from": "2025-01-01", "limit": 5, "offset": 0}));
        assert_eq!(validate_args(def, &a), Ok(()));
    }

    #[test]
    fn all_violations_reported() {
        let def = Catalog::builtin().get("searchOrders").unwrap();
        let a = args(
            json!({"status": "lost", "date_from": "May 1", "limit": 0, "bogus": 1, "offset": "x"}),
        );
        let v = validate_args(def, &a).unwrap_err();
        let names: Vec<_> = v.iter().map(|x| x.argument.as_str()).collect();
        assert_eq!(names, ["bogus", "date_from", "limit", "offset", "status"]);
    }

    #[test]
    fn null_counts_as_absent() {
        let def = Catalog::builtin().get("getOrder").unwrap();
        let v = validate_args(def, &args(json!({"order_id": null}))).unwrap_err();
        assert_eq!(v[0].problem, "missing required argument");
        let def = Catalog::builtin().get("searchOrders").unwrap();
        assert_eq!(validate_args(def, &args(json!({"status": null}))), Ok(()));
    }
}
