//! Pulls the first JSON object out of free-form model output.

use serde_json::{Map, Value};
use thiserror::Error;

/// A model response that could not be turned into the expected structure.
/// Both variants keep the raw text for the journal.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ResponseError {
    #[error("no JSON object in response")]
    ParseFailure { raw: String },
    #[error("response violates schema: {}", fields.join("; "))]
    SchemaFailure { fields: Vec<String>, raw: String },
}

impl ResponseError {
    pub fn raw(&self) -> &str {
        match self {
            ResponseError::ParseFailure { raw } | ResponseError::SchemaFailure { raw, .. } => raw,
        }
    }
}

/// End (exclusive) of the balanced `{...}` starting at `start`, honouring
/// string literals and escapes.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
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
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First substring that parses as a JSON object. Surrounding prose and
/// markdown code fences are ignored.
pub fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find('{') {
        let start = from + rel;
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&text[start..end]) {
                return Some(map);
            }
        }
        from = start + 1;
    }
    None
}
