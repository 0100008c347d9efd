//! Strict parsing of structured agent replies.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error("reply is not JSON: {0}")]
    Parse(String),
    #[error("reply is missing or has an invalid `{0}` field")]
    Schema(String),
}

impl ReplyError {
    pub fn code(&self) -> &'static str {
        match self {
            ReplyError::Parse(_) => "ParseError",
            ReplyError::Schema(_) => "SchemaError",
        }
    }
}

/// The text agent's reply contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextAgentReply {
    pub story: String,
    pub intention: String,
    /// Layout guidance recovered from sketches, or the literal `none`.
    pub sketch_information: String,
}

impl TextAgentReply {
    pub fn has_sketch(&self) -> bool {
        !self.sketch_information.trim().eq_ignore_ascii_case("none")
    }
}

/// Removes one surrounding Markdown code fence, if present.
pub fn strip_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // drop the info string (```json) up to the first newline
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn parse_object(raw: &str) -> Result<Map<String, Value>, ReplyError> {
    match serde_json::from_str::<Value>(strip_fence(raw)) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(ReplyError::Parse(format!("expected a JSON object, got {}", type_name(&other)))),
        Err(e) => Err(ReplyError::Parse(e.to_string())),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn required_string(map: &Map<String, Value>, field: &str) -> Result<String, ReplyError> {
    match map.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(ReplyError::Schema(field.to_owned())),
    }
}

/// Parses a text-agent reply. Tolerates one code-fence layer and ignores
/// unknown keys; every contract field must be a string and `story` must be
/// non-blank.
pub fn parse_text_reply(raw: &str) -> Result<TextAgentReply, ReplyError> {
    let map = parse_object(raw)?;
    let story = required_string(&map, "story")?;
    let intention = required_string(&map, "intention")?;
    let sketch_information = required_string(&map, "sketch_information")?;
    if story.trim().is_empty() {
        return Err(ReplyError::Schema("story".into()));
    }
    Ok(TextAgentReply { story, intention, sketch_information })
}

pub const INSUFFICIENT_MATERIAL: &str = "insufficient material";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryReply {
    pub settings: String,
    pub description: String,
    pub plot: String,
}

/// Parses a summary reply; blank sections become "insufficient material".
pub fn parse_summary_reply(raw: &str) -> Result<SummaryReply, ReplyError> {
    let map = parse_object(raw)?;
    let section = |field: &str| {
        required_string(&map, field).map(|s| if s.trim().is_empty() { INSUFFICIENT_MATERIAL.to_owned() } else { s })
    };
    Ok(SummaryReply { settings: section("settings")?, description: section("description")?, plot: section("plot")? })
}
