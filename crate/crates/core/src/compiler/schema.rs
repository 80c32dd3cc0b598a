//! Validation of emitted charts against the vendored schema subset.
//!
//! Supports the JSON-schema keywords the subset uses: `$ref` (local),
//! `type`, `enum`, `properties`, `required`, `additionalProperties`,
//! `items`, `minItems`, `minimum`, `maximum`, `exclusiveMinimum`, `anyOf`
//! and `oneOf`.

use std::fmt;
use std::sync::OnceLock;

use serde_json::{Map, Value};

const SCHEMA_TEXT: &str = include_str!("../../schema/vega-lite-v5-subset.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// JSON pointer into the checked document.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{path}: {}", self.message)
    }
}

fn schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| serde_json::from_str(SCHEMA_TEXT).expect("vendored schema is valid JSON"))
}

fn definition(name: &str) -> &'static Value {
    &schema()["definitions"][name]
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn type_matches(v: &Value, ty: &str) -> bool {
    let actual = type_name(v);
    actual == ty || (ty == "number" && actual == "integer")
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, path: &str, message: String) {
        self.out.push(Violation { path: path.to_string(), message });
    }

    fn run(s: &Value, v: &Value, path: &str) -> Vec<Violation> {
        let mut c = Checker { out: Vec::new() };
        c.check(s, v, path);
        c.out
    }

    fn valid(s: &Value, v: &Value, path: &str) -> bool {
        Checker::run(s, v, path).is_empty()
    }

    fn check(&mut self, s: &Value, v: &Value, path: &str) {
        let Some(s) = s.as_object() else { return };
        if let Some(r) = s.get("$ref").and_then(Value::as_str) {
            let name = r.trim_start_matches("#/definitions/");
            self.check(definition(name), v, path);
        }
        if let Some(ty) = s.get("type") {
            let ok = match ty {
                Value::String(t) => type_matches(v, t),
                Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_matches(v, t)),
                _ => true,
            };
            if !ok {
                self.push(path, format!("expected type {ty}, found {}", type_name(v)));
                return;
            }
        }
        if let Some(Value::Array(options)) = s.get("enum") {
            if !options.contains(v) {
                self.push(path, format!("{v} is not one of {}", Value::Array(options.clone())));
            }
        }
        if let Some(n) = v.as_f64() {
            if let Some(min) = s.get("minimum").and_then(Value::as_f64) {
                if n < min {
                    self.push(path, format!("{n} is below the minimum {min}"));
                }
            }
            if let Some(max) = s.get("maximum").and_then(Value::as_f64) {
                if n > max {
                    self.push(path, format!("{n} is above the maximum {max}"));
                }
            }
            if let Some(min) = s.get("exclusiveMinimum").and_then(Value::as_f64) {
                if n <= min {
                    self.push(path, format!("{n} must exceed {min}"));
                }
            }
        }
        if let Value::Object(obj) = v {
            self.check_object(s, obj, path);
        }
        if let Value::Array(items) = v {
            if let Some(min) = s.get("minItems").and_then(Value::as_u64) {
                if (items.len() as u64) < min {
                    self.push(path, format!("expected at least {min} items, found {}", items.len()));
                }
            }
            if let Some(item_schema) = s.get("items") {
                for (i, item) in items.iter().enumerate() {
                    self.check(item_schema, item, &format!("{path}/{i}"));
                }
            }
        }
        if let Some(Value::Array(options)) = s.get("anyOf") {
            let results: Vec<Vec<Violation>> = options.iter().map(|o| Checker::run(o, v, path)).collect();
            if results.iter().all(|r| !r.is_empty()) {
                // An alternative that fails only below `path` has the right shape;
                // its violations say more than a bare mismatch.
                let close: Vec<&Vec<Violation>> = results.iter().filter(|r| r.iter().all(|x| x.path != path)).collect();
                match close.as_slice() {
                    [only] => self.out.extend(only.iter().cloned()),
                    _ => self.push(path, "matches none of the allowed alternatives".into()),
                }
            }
        }
        if let Some(Value::Array(options)) = s.get("oneOf") {
            let n = options.iter().filter(|o| Checker::valid(o, v, path)).count();
            if n != 1 {
                self.push(path, format!("must match exactly one alternative, matches {n}"));
            }
        }
    }

    fn check_object(&mut self, s: &Map<String, Value>, obj: &Map<String, Value>, path: &str) {
        let props = s.get("properties").and_then(Value::as_object);
        if let Some(Value::Array(required)) = s.get("required") {
            for r in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(r) {
                    self.push(path, format!("missing required property `{r}`"));
                }
            }
        }
        for (k, val) in obj {
            let child = format!("{path}/{}", k.replace('~', "~0").replace('/', "~1"));
            match props.and_then(|p| p.get(k)) {
                Some(ps) => self.check(ps, val, &child),
                None => match s.get("additionalProperties") {
                    Some(Value::Bool(false)) => self.push(&child, format!("unexpected property `{k}`")),
                    Some(extra @ Value::Object(_)) => self.check(extra, val, &child),
                    _ => {}
                },
            }
        }
    }
}

/// Checks an emitted chart or frame set. An empty list means valid.
pub fn validate_output(text: &str) -> Vec<Violation> {
    match serde_json::from_str::<Value>(text) {
        Ok(v) => validate_value(&v),
        Err(e) => vec![Violation { path: String::new(), message: format!("parse: {e}") }],
    }
}

pub fn validate_value(v: &Value) -> Vec<Violation> {
    let root = if v.get("frames").is_some() { "FrameSet" } else { "TopLevelSpec" };
    let mut c = Checker { out: Vec::new() };
    c.check(definition(root), v, "");
    c.out
}
