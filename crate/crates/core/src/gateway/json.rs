//! Helpers for pulling JSON out of model replies.

use serde_json::Value;

/// A JSON reply that passed schema validation, with the raw text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedValue {
    pub value: Value,
    pub raw: String,
}

/// A small structural schema: enough to describe the reply contracts used by
/// the pipeline prompts.
#[derive(Debug, Clone, PartialEq)]
pub enum JsonSchema {
    Any,
    String,
    NonEmptyString,
    Integer,
    Boolean,
    /// A string restricted to the listed values.
    OneOf(Vec<String>),
    Array(Box<JsonSchema>),
    /// An object with the listed required keys; extra keys are allowed.
    Object(Vec<(String, JsonSchema)>),
}

impl JsonSchema {
    pub fn object<K: Into<String>>(fields: impl IntoIterator<Item = (K, JsonSchema)>) -> Self {
        JsonSchema::Object(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn array(items: JsonSchema) -> Self {
        JsonSchema::Array(Box::new(items))
    }

    pub fn one_of<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        JsonSchema::OneOf(values.into_iter().map(Into::into).collect())
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        self.validate_at(value, "$")
    }

    fn validate_at(&self, value: &Value, path: &str) -> Result<(), String> {
        match (self, value) {
            (JsonSchema::Any, _) => Ok(()),
            (JsonSchema::String, Value::String(_)) => Ok(()),
            (JsonSchema::NonEmptyString, Value::String(s)) if !s.trim().is_empty() => Ok(()),
            (JsonSchema::NonEmptyString, Value::String(_)) => Err(format!("{path}: empty string")),
            (JsonSchema::Integer, Value::Number(n)) if n.is_i64() || n.is_u64() => Ok(()),
            (JsonSchema::Boolean, Value::Bool(_)) => Ok(()),
            (JsonSchema::OneOf(allowed), Value::String(s)) => {
                if allowed.iter().any(|a| a == s) {
                    Ok(())
                } else {
                    Err(format!("{path}: {s:?} is not one of {allowed:?}"))
                }
            }
            (JsonSchema::Array(items), Value::Array(values)) => values
                .iter()
                .enumerate()
                .try_for_each(|(i, v)| items.validate_at(v, &format!("{path}[{i}]"))),
            (JsonSchema::Object(fields), Value::Object(map)) => {
                for (key, schema) in fields {
                    match map.get(key) {
                        Some(v) => schema.validate_at(v, &format!("{path}.{key}"))?,
                        None => return Err(format!("{path}: missing key {key:?}")),
                    }
                }
                Ok(())
            }
            (schema, value) => Err(format!("{path}: expected {}, got {}", schema.kind(), kind_of(value))),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            JsonSchema::Any => "any",
            JsonSchema::String | JsonSchema::NonEmptyString | JsonSchema::OneOf(_) => "string",
            JsonSchema::Integer => "integer",
            JsonSchema::Boolean => "boolean",
            JsonSchema::Array(_) => "array",
            JsonSchema::Object(_) => "object",
        }
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Removes a surrounding Markdown code fence (with optional info string).
pub fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses a reply that is supposed to be exactly one JSON value.
pub fn parse_model_json(text: &str) -> Result<Value, String> {
    let body = strip_code_fences(text);
    serde_json::from_str(body).map_err(|e| format!("reply is not valid JSON: {e}"))
}

/// Every top-level, well-formed JSON object embedded in free text, in order.
///
/// Braces inside JSON strings are respected; candidates that fail to parse are
/// skipped and scanning resumes after their opening brace.
pub fn json_objects_in(text: &str) -> Vec<Value> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        match matching_brace(bytes, open) {
            Some(close) => match serde_json::from_str::<Value>(&text[open..=close]) {
                Ok(v @ Value::Object(_)) => {
                    found.push(v);
                    start = close + 1;
                }
                _ => start = open + 1,
            },
            None => start = open + 1,
        }
    }
    found
}

/// The last JSON object embedded in `text`, if any.
pub fn last_json_object(text: &str) -> Option<Value> {
    json_objects_in(text).pop()
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
