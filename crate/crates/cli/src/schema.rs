//! Minimal JSON-schema checker for the shipped artifact schemas.
//!
//! Covers exactly the keyword subset those schemas use: `type` (single name
//! or list, with "integer" as a whole-number refinement of "number"),
//! `properties` + `required` + boolean `additionalProperties`, a single
//! `items` schema, `enum`, `minItems`, `minimum`, and `exclusiveMinimum`.
//! Unknown keywords are ignored, as the standard prescribes. Every emitted
//! artifact is checked against its schema before it is written, and the
//! `verify` subcommand gates stored trajectories on the same check.

use serde_json::Value;
use thiserror::Error;

/// Schemas compiled into the binary; the same files ship in docs/schemas/.
pub const DOMAIN: &str = include_str!("../../../docs/schemas/domain.schema.json");
pub const REPORT: &str = include_str!("../../../docs/schemas/report.schema.json");
pub const TRAJECTORY: &str = include_str!("../../../docs/schemas/trajectory.schema.json");
pub const SHOOT: &str = include_str!("../../../docs/schemas/shoot.schema.json");
pub const INRADIUS: &str = include_str!("../../../docs/schemas/inradius.schema.json");
pub const VERDICT: &str = include_str!("../../../docs/schemas/verdict.schema.json");

/// A document that does not satisfy its schema (or is not JSON at all).
#[derive(Debug, Error)]
#[error("schema violation at {path}: {reason}")]
pub struct SchemaViolation {
    /// JSON-pointer-style location of the offending value.
    pub path: String,
    pub reason: String,
}

/// Check `value` against the schema source text in `schema_src`.
pub fn validate(value: &Value, schema_src: &str) -> Result<(), SchemaViolation> {
    let schema: Value = serde_json::from_str(schema_src).expect("shipped schema parses");
    check(value, &schema, "$")
}

fn violation(path: &str, reason: impl Into<String>) -> SchemaViolation {
    SchemaViolation {
        path: path.to_string(),
        reason: reason.into(),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn matches_type(v: &Value, name: &str) -> bool {
    match name {
        "integer" => v
            .as_f64()
            .is_some_and(|x| x.is_finite() && x == x.trunc()),
        "number" => v.is_number(),
        other => type_name(v) == other,
    }
}

fn check(value: &Value, schema: &Value, path: &str) -> Result<(), SchemaViolation> {
    let obj = match schema.as_object() {
        Some(o) => o,
        None => return Ok(()),
    };

    if let Some(ty) = obj.get("type") {
        let names: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        if !names.iter().any(|n| matches_type(value, n)) {
            return Err(violation(
                path,
                format!("expected {}, got {}", names.join(" or "), type_name(value)),
            ));
        }
    }

    // A null that the type union admits is exempt from object/array keywords.
    if value.is_null() {
        return Ok(());
    }

    if let Some(allowed) = obj.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(violation(path, format!("{value} is not one of the allowed values")));
        }
    }

    if let Some(x) = value.as_f64() {
        if let Some(min) = obj.get("minimum").and_then(Value::as_f64) {
            if x < min {
                return Err(violation(path, format!("{x} is below the minimum {min}")));
            }
        }
        if let Some(min) = obj.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= min {
                return Err(violation(path, format!("{x} must exceed {min}")));
            }
        }
    }

    if let Some(map) = value.as_object() {
        if let Some(required) = obj.get("required").and_then(Value::as_array) {
            for name in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(name) {
                    return Err(violation(path, format!("missing required field \"{name}\"")));
                }
            }
        }
        let props = obj.get("properties").and_then(Value::as_object);
        if let Some(props) = props {
            for (name, sub) in props {
                if let Some(v) = map.get(name) {
                    check(v, sub, &format!("{path}.{name}"))?;
                }
            }
        }
        if obj.get("additionalProperties") == Some(&Value::Bool(false)) {
            for name in map.keys() {
                if !props.is_some_and(|p| p.contains_key(name)) {
                    return Err(violation(path, format!("unexpected field \"{name}\"")));
                }
            }
        }
    }

    if let Some(list) = value.as_array() {
        if let Some(min) = obj.get("minItems").and_then(Value::as_u64) {
            if (list.len() as u64) < min {
                return Err(violation(
                    path,
                    format!("array has {} items, needs at least {min}", list.len()),
                ));
            }
        }
        if let Some(items) = obj.get("items") {
            for (i, v) in list.iter().enumerate() {
                check(v, items, &format!("{path}[{i}]"))?;
            }
        }
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn accepts_a_valid_domain_spec() {
        let v = json!({"dim": 2, "shape": "ball", "params": {"radius": 1.0}});
        validate(&v, DOMAIN).unwrap();
    }

    #[test]
    fn rejects_missing_and_unknown_fields() {
        let missing = json!({"dim": 2, "shape": "ball"});
        assert!(validate(&missing, DOMAIN).unwrap_err().reason.contains("params"));

        let extra = json!({"dim": 2, "shape": "ball", "params": {}, "nope": 1});
        assert!(validate(&extra, DOMAIN).unwrap_err().reason.contains("nope"));
    }

    #[test]
    fn type_unions_admit_null_but_not_other_types() {
        let schema = r#"{"type": ["number", "null"]}"#;
        validate(&json!(1.5), schema).unwrap();
        validate(&json!(null), schema).unwrap();
        assert!(validate(&json!("x"), schema).is_err());
    }

    #[test]
    fn integer_means_whole_number() {
        let schema = r#"{"type": "integer"}"#;
        validate(&json!(3), schema).unwrap();
        validate(&json!(3.0), schema).unwrap();
        assert!(validate(&json!(3.5), schema).is_err());
    }

    #[test]
    fn nested_item_paths_are_reported() {
        let schema = r#"{"type": "array", "items": {"type": "number"}}"#;
        let err = validate(&json!([1.0, "two"]), schema).unwrap_err();
        assert_eq!(err.path, "$[1]");
    }
}
