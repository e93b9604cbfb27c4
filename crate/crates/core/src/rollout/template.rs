//! `{{step.N/path|filter}}` placeholders in oracle plans.
//!
//! `N` indexes tool results in call order. `path` is a JSON pointer whose
//! segments may be `*`, which maps over an array. Filters: `dollars` (cents to
//! `1234.56`), `upper`, `lower`, `len`, `json`. A string that is exactly one
//! placeholder takes the referenced JSON value; otherwise values are spliced
//! in as text, lists joined with ", ".

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{\s*step\.(\d+)((?:/[^}|\s]*)?)(?:\|(\w+))?\s*\}\}").unwrap())
}

fn walk(v: &Value, segs: &[&str]) -> Option<Value> {
    let Some((head, rest)) = segs.split_first() else {
        return Some(v.clone());
    };
    if *head == "*" {
        let items = v.as_array()?;
        return items
            .iter()
            .map(|x| walk(x, rest))
            .collect::<Option<Vec<_>>>()
            .map(Value::Array);
    }
    let key = head.replace("~1", "/").replace("~0", "~");
    let next = match v {
        Value::Object(m) => m.get(&key)?,
        Value::Array(a) => a.get(key.parse::<usize>().ok()?)?,
        _ => return None,
    };
    walk(next, rest)
}

pub fn resolve(payloads: &[Value], step: usize, path: &str) -> Option<Value> {
    let root = payloads.get(step)?;
    let segs: Vec<&str> = path.split('/').skip(1).collect();
    walk(root, &segs)
}

fn apply_filter(v: Value, filter: Option<&str>) -> Result<Value, String> {
    Ok(match filter {
        None => v,
        Some("dollars") => match v {
            Value::Array(items) => Value::Array(
                items
                    .into_iter()
                    .map(|x| apply_filter(x, Some("dollars")))
                    .collect::<Result<_, _>>()?,
            ),
            other => {
                let c = other
                    .as_i64()
                    .ok_or_else(|| format!("dollars filter needs integer cents, got {other}"))?;
                let sign = if c < 0 { "-" } else { "" };
                Value::String(format!("{sign}{}.{:02}", c.abs() / 100, c.abs() % 100))
            }
        },
        Some("upper") => Value::String(text(&v).to_uppercase()),
        Some("lower") => Value::String(text(&v).to_lowercase()),
        Some("len") => Value::from(v.as_array().map_or(0, Vec::len)),
        Some("json") => Value::String(v.to_string()),
        Some(other) => return Err(format!("unknown template filter `{other}`")),
    })
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(text).collect::<Vec<_>>().join(", "),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn render_str(s: &str, payloads: &[Value]) -> Result<Value, String> {
    let re = placeholder();
    let lookup = |caps: &regex::Captures<'_>| -> Result<Value, String> {
        let step: usize = caps[1].parse().map_err(|_| "bad step index".to_string())?;
        let path = caps.get(2).map_or("", |m| m.as_str());
        let v = resolve(payloads, step, path)
            .ok_or_else(|| format!("step.{step}{path} does not resolve"))?;
        apply_filter(v, caps.get(3).map(|m| m.as_str()))
    };
    if let Some(caps) = re.captures(s) {
        if caps.get(0).unwrap().as_str() == s {
            return lookup(&caps);
        }
    }
    let mut out = String::new();
    let mut last = 0;
    for caps in re.captures_iter(s) {
        let m = caps.get(0).unwrap();
        out.push_str(&s[last..m.start()]);
        out.push_str(&text(&lookup(&caps)?));
        last = m.end();
    }
    out.push_str(&s[last..]);
    Ok(Value::String(out))
}

/// Renders every string inside `v`, recursively.
pub fn render(v: &Value, payloads: &[Value]) -> Result<Value, String> {
    Ok(match v {
        Value::String(s) => render_str(s, payloads)?,
        Value::Array(items) => Value::Array(
            items
                .iter()
                .map(|x| render(x, payloads))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(m) => Value::Object(
            m.iter()
                .map(|(k, x)| Ok((k.clone(), render(x, payloads)?)))
                .collect::<Result<_, String>>()?,
        ),
        other => other.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn whole_value_and_splicing() {
        let p = vec![json!({"results": [{"id": "A", "n": 1250}, {"id": "B", "n": 5}]})];
        assert_eq!(
            render_str("{{step.0/results/0/n}}", &p).unwrap(),
            json!(1250)
        );
        assert_eq!(
            render_str(
                "ids: {{step.0/results/*/id}} total {{ step.0/results/0/n|dollars }}",
                &p
            )
            .unwrap(),
            json!("ids: A, B total 12.50")
        );
        assert_eq!(render_str("{{step.0/results|len}}", &p).unwrap(), json!(2));
        assert!(render_str("{{step.1/x}}", &p).is_err());
        assert!(render_str("{{step.0/results|bogus}}", &p).is_err());
    }

    #[test]
    fn nested_render() {
        let p = vec![json!({"order": {"id": "ORD-00001"}})];
        let v = render(
            &json!({"order_id": "{{step.0/order/id}}", "k": [1, "x{{step.0/order/id}}"]}),
            &p,
        )
        .unwrap();
        assert_eq!(v, json!({"order_id": "ORD-00001", "k": [1, "xORD-00001"]}));
    }
}
