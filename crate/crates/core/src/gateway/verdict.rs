//! Structured response parsing for the three output modes.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::prompt::OutputMode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJsonFound,
    #[error("missing or malformed key `{0}`")]
    SchemaViolation(String),
    #[error("value {value} for key `{key}` is out of range")]
    RangeViolation { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DangerIndex {
    pub object_id: String,
    pub danger_index: f64,
}

/// A parsed model reply. Which fields are present depends on `mode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub mode: OutputMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly_label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voice_guide: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_objects: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anomaly_index: Option<Vec<DangerIndex>>,
    pub raw_text: String,
}

impl LlmVerdict {
    /// Per-frame anomaly score used for hold and evaluation.
    ///
    /// Annotation: the reported score. Full: the largest per-object danger
    /// index, or the binary label when no objects are listed. Voice only:
    /// 1.0 when a voice message was produced, else 0.0.
    pub fn frame_score(&self) -> f64 {
        match self.mode {
            OutputMode::Annotation => self.anomaly_score.unwrap_or(0.0),
            OutputMode::Full => {
                let max = self
                    .anomaly_index
                    .iter()
                    .flatten()
                    .map(|d| d.danger_index)
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                max.unwrap_or_else(|| f64::from(self.anomaly_label.unwrap_or(0)))
            }
            OutputMode::VoiceOnly => {
                if self.alert_text().is_some() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The voice message, when non-empty.
    pub fn alert_text(&self) -> Option<&str> {
        self.voice_guide.as_deref().map(str::trim).filter(|s| !s.is_empty())
    }
}

/// Returns the first `{...}` span with balanced braces (string-aware) that
/// parses as a JSON object.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(offset) = raw[start..].find('{') {
        let open = start + offset;
        if let Some(close) = matching_brace(bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&raw[open..=close]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
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

fn schema(key: &str) -> ParseError {
    ParseError::SchemaViolation(key.to_string())
}

fn range(key: &str, value: impl ToString) -> ParseError {
    ParseError::RangeViolation {
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn fraction(map: &Map<String, Value>, key: &str) -> Result<f64, ParseError> {
    let v = map.get(key).ok_or_else(|| schema(key))?;
    let x = as_number(v).ok_or_else(|| schema(key))?;
    if x.is_finite() && (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(range(key, x))
    }
}

fn text(map: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match map.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(schema(key)),
    }
}

/// Accepts a string or renders structured content to compact JSON.
fn loose_text(map: &Map<String, Value>, key: &str) -> Result<String, ParseError> {
    match map.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(v @ (Value::Array(_) | Value::Object(_))) => Ok(v.to_string()),
        _ => Err(schema(key)),
    }
}

fn label(map: &Map<String, Value>) -> Result<u8, ParseError> {
    const KEY: &str = "anomaly_label";
    let v = map.get(KEY).ok_or_else(|| schema(KEY))?;
    let x = match v {
        Value::Bool(b) => f64::from(u8::from(*b)),
        other => as_number(other).ok_or_else(|| schema(KEY))?,
    };
    if x == 0.0 {
        Ok(0)
    } else if x == 1.0 {
        Ok(1)
    } else {
        Err(range(KEY, x))
    }
}

fn object_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn danger(id: String, v: &Value) -> Result<DangerIndex, ParseError> {
    const KEY: &str = "anomaly_index";
    let x = as_number(v).ok_or_else(|| schema(KEY))?;
    if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
        return Err(range("danger_index", x));
    }
    Ok(DangerIndex {
        object_id: id,
        danger_index: x,
    })
}

/// Accepts a list of `{"object_id", "danger_index"}` objects, a list of
/// `[id, score]` pairs, or an `{id: score}` map.
fn danger_indices(map: &Map<String, Value>) -> Result<Vec<DangerIndex>, ParseError> {
    const KEY: &str = "anomaly_index";
    match map.get(KEY) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| match item {
                Value::Object(o) => {
                    let id = o.get("object_id").and_then(object_id).ok_or_else(|| schema(KEY))?;
                    danger(id, o.get("danger_index").ok_or_else(|| schema(KEY))?)
                }
                Value::Array(pair) if pair.len() == 2 => {
                    let id = object_id(&pair[0]).ok_or_else(|| schema(KEY))?;
                    danger(id, &pair[1])
                }
                _ => Err(schema(KEY)),
            })
            .collect(),
        Some(Value::Object(o)) => o.iter().map(|(id, v)| danger(id.clone(), v)).collect(),
        _ => Err(schema(KEY)),
    }
}

/// Parses a model reply for `mode`. Missing keys and out-of-range values are
/// errors; keys beyond the mode's schema are kept only in `raw_text`.
pub fn parse_response(raw: &str, mode: OutputMode) -> Result<LlmVerdict, ParseError> {
    let map = extract_json_object(raw).ok_or(ParseError::NoJsonFound)?;
    let mut verdict = LlmVerdict {
        mode,
        anomaly_score: None,
        anomaly_label: None,
        reason: None,
        voice_guide: None,
        scene: None,
        key_objects: None,
        anomaly_index: None,
        raw_text: raw.to_string(),
    };
    match mode {
        OutputMode::Annotation => {
            verdict.anomaly_score = Some(fraction(&map, "anomaly_score")?);
            verdict.reason = Some(text(&map, "reason")?);
        }
        OutputMode::VoiceOnly => {
            verdict.voice_guide = Some(text(&map, "voice_guide")?);
        }
        OutputMode::Full => {
            verdict.scene = Some(loose_text(&map, "scene")?);
            verdict.key_objects = Some(loose_text(&map, "key_objects")?);
            verdict.anomaly_label = Some(label(&map)?);
            verdict.anomaly_index = Some(danger_indices(&map)?);
            verdict.voice_guide = Some(text(&map, "voice_guide")?);
        }
    }
    Ok(verdict)
}
