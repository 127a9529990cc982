//! Deterministic offline backend.
//!
//! Replies are a pure function of the request, so whole pipeline runs can be
//! replayed byte for byte without network access.

use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatReply, ChatRequest, GatewayError, RequestKind};
use crate::prompt::{AblationToggles, OutputMode, SensitivityLevel};
use crate::spatial::{region_of_point, Detection, FrameRecord, Region};

const GROUND_TERM: f64 = 0.6;
const SIDE_CAP: f64 = 0.4;
const ALERT_SCORE: f64 = 0.5;

/// Class list returned for any scene switch mentioning a park.
pub const MOCK_PARK_CLASSES: [&str; 10] = [
    "bench",
    "tree",
    "dog",
    "bicycle",
    "trash can",
    "fountain",
    "picnic table",
    "lamp post",
    "stair",
    "puddle",
];

const MOCK_GENERIC_CLASSES: [&str; 10] = [
    "car",
    "bicycle",
    "pole",
    "curb",
    "stair",
    "traffic cone",
    "hole",
    "crack",
    "puddle",
    "construction barrier",
];

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    /// Modeled reply latency reported in usage records and used by the
    /// pipeline's simulated clock.
    pub latency_ms: u64,
}

impl MockBackend {
    pub fn with_latency(latency_ms: u64) -> Self {
        Self { latency_ms }
    }
}

fn sensitivity_scale(level: SensitivityLevel) -> f64 {
    match level {
        SensitivityLevel::Low => 1.0,
        SensitivityLevel::Medium => 1.5,
        SensitivityLevel::High => 2.0,
    }
}

/// Full-prompt mock score: 0.6 for any Ground object plus the largest side
/// area (capped at 0.4) scaled by sensitivity, clamped to [0, 1].
pub fn mock_score(frame: &FrameRecord, sensitivity: SensitivityLevel) -> f64 {
    mock_score_with(frame, sensitivity, AblationToggles::ALL_ON, "")
}

/// Mock score under an ablated prompt.
///
/// Without the sensitivity segment the mock behaves as Medium. Without the
/// location segment it cannot tell Front from Ground, so both raise the
/// ground term. Without the instruction it blends the score half and half
/// with a hash-derived value.
pub fn mock_score_with(frame: &FrameRecord, sensitivity: SensitivityLevel, toggles: AblationToggles, fingerprint: &str) -> f64 {
    let level = if toggles.include_sensitivity {
        sensitivity
    } else {
        SensitivityLevel::Medium
    };
    let mut ground = false;
    let mut side_area: f64 = 0.0;
    for d in &frame.detections {
        match region_of_point(d.center_x, d.center_y) {
            Region::Ground => ground = true,
            Region::Front if !toggles.include_location => ground = true,
            Region::Front => {}
            Region::Left | Region::Right => side_area = side_area.max(d.area_fraction()),
        }
    }
    let g = if ground { GROUND_TERM } else { 0.0 };
    let s = side_area.min(SIDE_CAP) * sensitivity_scale(level);
    let score = (g + s).clamp(0.0, 1.0);
    if toggles.include_instruction {
        score
    } else {
        0.5 * score + 0.5 * unit_hash(fingerprint, frame)
    }
}

fn digest(fingerprint: &str, frame: &FrameRecord) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(frame.frame_id.to_le_bytes());
    for d in &frame.detections {
        h.update(d.class_name.as_bytes());
        for (_, v) in d.numeric_fields() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().into()
}

fn unit_hash(fingerprint: &str, frame: &FrameRecord) -> f64 {
    let d = digest(fingerprint, frame);
    let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Danger contribution of a single object under the full prompt.
fn object_danger(d: &Detection, scale: f64) -> f64 {
    match region_of_point(d.center_x, d.center_y) {
        Region::Ground => GROUND_TERM,
        Region::Left | Region::Right => (d.area_fraction().min(SIDE_CAP) * scale).min(1.0),
        Region::Front => 0.0,
    }
}

/// The object the mock talks about: a Ground object first, then the largest side object.
fn dominant(frame: &FrameRecord) -> Option<(&Detection, Region)> {
    let with_region = || frame.detections.iter().map(|d| (d, region_of_point(d.center_x, d.center_y)));
    with_region().find(|(_, r)| *r == Region::Ground).or_else(|| {
        with_region()
            .filter(|(_, r)| r.is_side())
            .max_by(|a, b| a.0.area_fraction().total_cmp(&b.0.area_fraction()))
    })
}

fn reason(frame: &FrameRecord, score: f64) -> String {
    match dominant(frame) {
        Some((d, Region::Ground)) => format!("{} on the ground ahead.", d.class_name),
        Some((d, r)) if score > 0.0 => format!("{} close on the {}.", d.class_name, r.as_str().to_lowercase()),
        _ if frame.detections.is_empty() => "Path is clear.".to_string(),
        _ => "No immediate danger.".to_string(),
    }
}

fn voice_guide(frame: &FrameRecord, score: f64) -> String {
    if score < ALERT_SCORE {
        return String::new();
    }
    match dominant(frame) {
        Some((d, Region::Ground)) => format!("Caution, {} on the ground ahead.", d.class_name),
        Some((d, r)) => format!("Caution, {} approaching on your {}.", d.class_name, r.as_str().to_lowercase()),
        None => "Caution, check your surroundings.".to_string(),
    }
}

fn scene_reply(frame: &FrameRecord, mode: OutputMode, score: f64, sensitivity: SensitivityLevel) -> Value {
    match mode {
        OutputMode::Annotation => json!({ "anomaly_score": score, "reason": reason(frame, score) }),
        OutputMode::VoiceOnly => json!({ "voice_guide": voice_guide(frame, score) }),
        OutputMode::Full => {
            let scale = sensitivity_scale(sensitivity);
            let mut index: Vec<Value> = Vec::new();
            let top = frame
                .detections
                .iter()
                .enumerate()
                .max_by(|a, b| object_danger(a.1, scale).total_cmp(&object_danger(b.1, scale)).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i);
            for (i, d) in frame.detections.iter().enumerate() {
                let danger = if Some(i) == top {
                    score
                } else {
                    object_danger(d, scale).min(score)
                };
                index.push(json!({ "object_id": i, "danger_index": danger }));
            }
            if index.is_empty() {
                index.push(json!({ "object_id": "scene", "danger_index": score }));
            }
            let key_objects: Vec<String> = frame
                .detections
                .iter()
                .map(|d| format!("{} ({})", d.class_name, region_of_point(d.center_x, d.center_y)))
                .collect();
            json!({
                "scene": format!("{} object(s) in view.", frame.detections.len()),
                "key_objects": key_objects.join(", "),
                "anomaly_checker": reason(frame, score),
                "anomaly_label": u8::from(score >= ALERT_SCORE),
                "anomaly_index": index,
                "voice_guide": voice_guide(frame, score),
            })
        }
    }
}

fn interest_object(command: &str) -> String {
    command
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

impl ChatBackend for MockBackend {
    fn chat(&self, request: &ChatRequest, _timeout: Duration) -> Result<ChatReply, GatewayError> {
        let text = match &request.kind {
            RequestKind::Scene { bundle, frame } => {
                let score = mock_score_with(frame, bundle.sensitivity, bundle.toggles, &bundle.config_fingerprint);
                let body = scene_reply(frame, bundle.mode, score, bundle.sensitivity).to_string();
                // Some replies arrive fenced, as chat models often do.
                if digest(&bundle.config_fingerprint, frame)[8] & 1 == 1 {
                    format!("```json\n{body}\n```")
                } else {
                    body
                }
            }
            RequestKind::ClassSwitch { scene, .. } => {
                let list: &[&str] = if scene.to_lowercase().contains("park") {
                    &MOCK_PARK_CLASSES
                } else {
                    &MOCK_GENERIC_CLASSES
                };
                list.join("\n")
            }
            RequestKind::Interest { command, .. } => json!({ "add": interest_object(command) }).to_string(),
        };
        Ok(ChatReply {
            text,
            prompt_tokens: None,
            completion_tokens: None,
            simulated_latency_ms: Some(self.latency_ms),
        })
    }

    fn label(&self) -> String {
        format!("mock(latency={}ms)", self.latency_ms)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}
