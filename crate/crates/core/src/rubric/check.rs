use std::sync::OnceLock;

use regex::Regex;
use serde_json::{json, Map, Value};

use super::judge::{Judge, JudgeError, JudgeRequest};
use super::task::{AttrRef, CheckSpec, RubricCriterion};
use crate::rollout::Trajectory;
use crate::tools::{normalize, record, ToolStatus};
use crate::world::{EntityId, WorldView};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub satisfied: bool,
    pub evidence: String,
}

fn outcome(satisfied: bool, evidence: impl Into<String>) -> CheckOutcome {
    CheckOutcome {
        satisfied,
        evidence: evidence.into(),
    }
}

fn numbers_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?").unwrap())
}

/// Non-negative decimal numbers in `text`, `$` and thousands separators ignored.
pub fn numbers_in(text: &str) -> Vec<f64> {
    numbers_regex()
        .find_iter(text)
        .filter_map(|m| m.as_str().replace(',', "").parse().ok())
        .collect()
}

fn read_attr<'v>(view: &'v dyn WorldView, r: &AttrRef) -> Result<Option<&'v Value>, String> {
    let id = EntityId::new(r.kind, r.id.as_str());
    match view.get(&id) {
        None => Err(format!("{id} does not exist")),
        Some(e) => Ok(e.attr(&r.attribute)),
    }
}

/// Arrays match on an equal element or, for a string `want`, on any string
/// element containing it, so log and note checks can name a fragment.
fn contains(have: &Value, want: &Value) -> bool {
    match (have, want) {
        (Value::Array(items), Value::String(_)) => {
            items.iter().any(|x| x == want || contains(x, want))
        }
        (Value::Array(items), w) => items.contains(w),
        (Value::String(h), Value::String(w)) => normalize(h).contains(&normalize(w)),
        _ => false,
    }
}

/// `want` is a subset of `have`; strings compare case-insensitively after trimming.
fn args_match(have: &Map<String, Value>, want: &Map<String, Value>) -> bool {
    want.iter().all(|(k, w)| match (have.get(k), w) {
        (Some(Value::String(h)), Value::String(w)) => h.trim().eq_ignore_ascii_case(w.trim()),
        (Some(h), w) => h == w,
        (None, _) => false,
    })
}

/// Deterministic for every check type except `external-judge`.
pub fn check_criterion(
    c: &RubricCriterion,
    traj: &Trajectory,
    view: &dyn WorldView,
    judge: Option<&dyn Judge>,
) -> Result<CheckOutcome, JudgeError> {
    let response = traj.final_response.as_str();
    Ok(match &c.check {
        CheckSpec::ResponseContainsFact { fact } => {
            let f = normalize(fact);
            let r = normalize(response);
            match r.find(&f) {
                Some(at) if !f.is_empty() => {
                    outcome(true, format!("found `{}` at offset {at}", fact))
                }
                _ => outcome(false, format!("`{fact}` not in final response")),
            }
        }
        CheckSpec::EntityStateAssert {
            target,
            equals,
            not_equals,
            contains: want,
        } => match read_attr(view, target) {
            Err(e) => outcome(false, e),
            Ok(have) => {
                let shown = have.map_or("unset".to_string(), Value::to_string);
                let label = format!(
                    "{}:{}.{} = {shown}",
                    target.kind, target.id, target.attribute
                );
                let sat = match (equals, not_equals, want) {
                    (Some(w), _, _) => have.unwrap_or(&Value::Null) == w,
                    (_, Some(w), _) => have.unwrap_or(&Value::Null) != w,
                    (_, _, Some(w)) => have.is_some_and(|h| contains(h, w)),
                    _ => false,
                };
                outcome(sat, label)
            }
        },
        CheckSpec::NumericEquals {
            expected,
            tolerance,
            after,
            entity,
        } => {
            let near = |x: f64| (x - expected).abs() <= *tolerance + 1e-9;
            match entity {
                Some(r) => match read_attr(view, r) {
                    Err(e) => outcome(false, e),
                    Ok(v) => match v.and_then(Value::as_f64) {
                        Some(x) => outcome(
                            near(x),
                            format!("{}:{}.{} = {x}", r.kind, r.id, r.attribute),
                        ),
                        None => outcome(
                            false,
                            format!("{}:{}.{} is not numeric", r.kind, r.id, r.attribute),
                        ),
                    },
                },
                None => {
                    let scope = match after {
                        None => Some(response),
                        Some(k) => Regex::new(&format!("(?i){}", regex::escape(k)))
                            .ok()
                            .and_then(|re| re.find(response))
                            .map(|m| &response[m.end()..]),
                    };
                    match scope {
                        None => outcome(
                            false,
                            format!(
                                "keyword `{}` not in final response",
                                after.as_deref().unwrap_or("")
                            ),
                        ),
                        Some(text) => match numbers_in(text).into_iter().find(|x| near(*x)) {
                            Some(x) => outcome(true, format!("response states {x}")),
                            None => outcome(
                                false,
                                format!("no number within {tolerance} of {expected}"),
                            ),
                        },
                    }
                }
            }
        }
        CheckSpec::PatternMatch { pattern, forbid } => {
            let re = match Regex::new(pattern) {
                Ok(re) => re,
                Err(e) => return Ok(outcome(false, format!("bad pattern: {e}"))),
            };
            match (re.find(response), forbid) {
                (Some(m), false) => outcome(true, format!("matched `{}`", m.as_str())),
                (None, false) => outcome(false, format!("no match for /{pattern}/")),
                (Some(m), true) => outcome(false, format!("forbidden match `{}`", m.as_str())),
                (None, true) => outcome(true, format!("no forbidden match for /{pattern}/")),
            }
        }
        CheckSpec::ToolWasCalled {
            tool,
            arguments,
            min_count,
            max_count,
            before,
            succeeded,
        } => {
            let ex = traj.tool_exchanges();
            let hits: Vec<usize> = ex
                .iter()
                .enumerate()
                .filter(|(_, (call, res))| {
                    call.tool == *tool
                        && args_match(&call.arguments, arguments)
                        && (!succeeded || res.is_some_and(|r| r.status == ToolStatus::Ok))
                })
                .map(|(i, _)| i)
                .collect();
            let n = hits.len();
            let count_ok = n >= *min_count && max_count.is_none_or(|m| n <= m);
            let order_ok = match before {
                None => true,
                Some(other) => match ex.iter().position(|(c, _)| c.tool == *other) {
                    None => true,
                    Some(first_other) => hits.first().is_some_and(|h| *h < first_other),
                },
            };
            let mut ev = format!("{n} matching call(s) to {tool}");
            if let Some(other) = before {
                ev.push_str(if order_ok {
                    ", before "
                } else {
                    ", not before "
                });
                ev.push_str(other);
            }
            outcome(count_ok && order_ok, ev)
        }
        CheckSpec::ExternalJudge {
            criterion,
            entities,
        } => {
            let Some(judge) = judge else {
                return Err(JudgeError::Unavailable("no judge configured".into()));
            };
            let state: Vec<Value> = entities
                .iter()
                .map(|t| {
                    view.get(&EntityId::new(t.kind, t.id.as_str())).map_or(
                        json!({"kind": t.kind, "id": t.id, "missing": true}),
                        |e| json!({"kind": t.kind, "record": record(e)}),
                    )
                })
                .collect();
            let v = judge.judge(&JudgeRequest {
                criterion: criterion.clone(),
                final_response: response.to_string(),
                state: Value::Array(state),
            })?;
            outcome(v.satisfied, v.rationale)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_parse_currency() {
        assert_eq!(
            numbers_in("Total: $1,050.99 over 3 items"),
            vec![1050.99, 3.0]
        );
        assert_eq!(numbers_in("no digits"), Vec::<f64>::new());
    }

    #[test]
    fn arg_subset_matching() {
        let have = serde_json::json!({"order_id": "ORD-00001", "status": "resolved"});
        let want = serde_json::json!({"order_id": " ord-00001"});
        assert!(args_match(
            have.as_object().unwrap(),
            want.as_object().unwrap()
        ));
        let want = serde_json::json!({"order_id": "ORD-00002"});
        assert!(!args_match(
            have.as_object().unwrap(),
            want.as_object().unwrap()
        ));
    }
}
