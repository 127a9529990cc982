//! Prompt rendering for scene assessment, scene switching, and interest targets.
//!
//! Every text segment comes from the checked-in templates under `prompts/`.
//! Only the final sensitivity value is ever substituted.

mod scene;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::spatial::{region_of_point, FrameRecord, Region};

pub use scene::{builtin_scene_names, parse_class_list, ActiveClassSet, ClassMask, SceneError, DEFAULT_SCENE};

pub const INSTRUCTION: &str = include_str!("../../prompts/instruction.txt");
pub const SENSITIVITY: &str = include_str!("../../prompts/sensitivity.txt");
pub const LOCATION: &str = include_str!("../../prompts/location.txt");
pub const MOTION: &str = include_str!("../../prompts/motion.txt");
pub const FORMAT_FULL: &str = include_str!("../../prompts/format_full.txt");
pub const FORMAT_VOICE: &str = include_str!("../../prompts/format_voice.txt");
pub const FORMAT_ANNOTATION: &str = include_str!("../../prompts/format_annotation.txt");
pub const CLASS_SWITCH: &str = include_str!("../../prompts/class_switch.txt");
pub const INTEREST_TARGET: &str = include_str!("../../prompts/interest_target.txt");

const SENSITIVITY_SLOT: &str = "Current sensitivity: low.";
const SCENE_SLOT: &str = "{custom_scene}";

/// Sentinel line for a frame without reportable objects.
pub const EMPTY_FRAME: &str = "(no objects detected)";

/// Default cap on detection lines per frame in a rendered prompt.
pub const DEFAULT_MAX_DETECTIONS: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("{detections} detections but {regions} regions")]
    LengthMismatch { detections: usize, regions: usize },
    #[error("scene name must not be empty")]
    EmptyScene,
    #[error("user command must not be empty")]
    EmptyCommand,
    #[error("unknown {kind} `{value}`")]
    UnknownValue { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityLevel {
    #[default]
    Low,
    Medium,
    High,
}

impl SensitivityLevel {
    pub const ALL: [SensitivityLevel; 3] = [Self::Low, Self::Medium, Self::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }
}

impl fmt::Display for SensitivityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensitivityLevel {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "medium" | "normal" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            _ => Err(PromptError::UnknownValue {
                kind: "sensitivity",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Full,
    VoiceOnly,
    #[default]
    Annotation,
}

impl OutputMode {
    pub const ALL: [OutputMode; 3] = [Self::Full, Self::VoiceOnly, Self::Annotation];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::VoiceOnly => "voice",
            Self::Annotation => "annotation",
        }
    }

    pub fn directive(self) -> &'static str {
        match self {
            Self::Full => FORMAT_FULL,
            Self::VoiceOnly => FORMAT_VOICE,
            Self::Annotation => FORMAT_ANNOTATION,
        }
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputMode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "voice" | "voice_only" | "voiceonly" => Ok(Self::VoiceOnly),
            "annotation" => Ok(Self::Annotation),
            _ => Err(PromptError::UnknownValue {
                kind: "output mode",
                value: s.to_string(),
            }),
        }
    }
}

/// Which system-prompt segments are rendered. All-true is the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationToggles {
    pub include_sensitivity: bool,
    pub include_location: bool,
    pub include_instruction: bool,
    pub include_motion: bool,
}

impl Default for AblationToggles {
    fn default() -> Self {
        Self::ALL_ON
    }
}

impl AblationToggles {
    pub const ALL_ON: Self = Self {
        include_sensitivity: true,
        include_location: true,
        include_instruction: true,
        include_motion: true,
    };

    /// Bit order: sensitivity, location, instruction, motion (MSB first).
    pub fn from_bits(bits: u8) -> Self {
        Self {
            include_sensitivity: bits & 0b1000 != 0,
            include_location: bits & 0b0100 != 0,
            include_instruction: bits & 0b0010 != 0,
            include_motion: bits & 0b0001 != 0,
        }
    }

    pub fn bits(self) -> u8 {
        (self.include_sensitivity as u8) << 3
            | (self.include_location as u8) << 2
            | (self.include_instruction as u8) << 1
            | self.include_motion as u8
    }

    /// Compact label such as `SLIM` or `S-IM` (dash = segment removed).
    pub fn label(self) -> String {
        [
            (self.include_sensitivity, 'S'),
            (self.include_location, 'L'),
            (self.include_instruction, 'I'),
            (self.include_motion, 'M'),
        ]
        .iter()
        .map(|&(on, c)| if on { c } else { '-' })
        .collect()
    }

    pub fn parse_label(s: &str) -> Result<Self, PromptError> {
        let chars: Vec<char> = s.trim().chars().collect();
        let expected = ['S', 'L', 'I', 'M'];
        if chars.len() != 4 {
            return Err(PromptError::UnknownValue {
                kind: "toggle label",
                value: s.to_string(),
            });
        }
        let mut bits = 0u8;
        for (i, (&c, &want)) in chars.iter().zip(expected.iter()).enumerate() {
            if c.to_ascii_uppercase() == want {
                bits |= 0b1000 >> i;
            } else if c != '-' {
                return Err(PromptError::UnknownValue {
                    kind: "toggle label",
                    value: s.to_string(),
                });
            }
        }
        Ok(Self::from_bits(bits))
    }
}

/// Rendered system and user prompts for one scene-assessment call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub config_fingerprint: String,
    pub sensitivity: SensitivityLevel,
    pub toggles: AblationToggles,
    pub mode: OutputMode,
    pub scene_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptOptions {
    pub max_detections: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            max_detections: DEFAULT_MAX_DETECTIONS,
        }
    }
}

pub fn sensitivity_segment(level: SensitivityLevel) -> String {
    let head = SENSITIVITY
        .strip_suffix(SENSITIVITY_SLOT)
        .expect("sensitivity template ends with the level slot");
    format!("{head}Current sensitivity: {level}.")
}

fn percent(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

/// One line per reportable detection, in input order.
pub fn format_detections(frame: &FrameRecord, regions: &[Region], mask: &ClassMask) -> Result<String, PromptError> {
    if frame.detections.len() != regions.len() {
        return Err(PromptError::LengthMismatch {
            detections: frame.detections.len(),
            regions: regions.len(),
        });
    }
    let lines: Vec<String> = frame
        .detections
        .iter()
        .zip(regions)
        .filter(|(d, _)| !mask.contains(&d.class_name))
        .map(|(d, region)| {
            format!(
                "{} | {} | center {}%,{}% | size {}%x{}% | conf {:.2}",
                d.class_name,
                region,
                percent(d.center_x),
                percent(d.center_y),
                percent(d.width),
                percent(d.height),
                d.confidence
            )
        })
        .collect();
    if lines.is_empty() {
        Ok(EMPTY_FRAME.to_string())
    } else {
        Ok(lines.join("\n"))
    }
}

/// Drops masked detections and keeps the `max` largest by area, preserving input order.
fn reportable(frame: &FrameRecord, mask: &ClassMask, max: usize) -> FrameRecord {
    let mut kept: Vec<(usize, f64)> = frame
        .detections
        .iter()
        .enumerate()
        .filter(|(_, d)| !mask.contains(&d.class_name))
        .map(|(i, d)| (i, d.area_fraction()))
        .collect();
    if kept.len() > max {
        kept.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(max);
        kept.sort_by_key(|&(i, _)| i);
    }
    FrameRecord {
        frame_id: frame.frame_id,
        timestamp_ms: frame.timestamp_ms,
        source_tag: frame.source_tag.clone(),
        detections: kept.into_iter().map(|(i, _)| frame.detections[i].clone()).collect(),
    }
}

fn frame_block(frame: &FrameRecord, mask: &ClassMask, opts: PromptOptions) -> String {
    let shown = reportable(frame, mask, opts.max_detections);
    let regions: Vec<Region> = shown
        .detections
        .iter()
        .map(|d| region_of_point(d.center_x, d.center_y))
        .collect();
    format_detections(&shown, &regions, mask).expect("regions computed per detection")
}

pub fn config_fingerprint(
    toggles: AblationToggles,
    sensitivity: SensitivityLevel,
    mode: OutputMode,
    scene: &ActiveClassSet,
) -> String {
    let mut h = Sha256::new();
    h.update(format!("toggles={};sensitivity={};mode={};", toggles.label(), sensitivity, mode));
    h.update(format!("scene={};", scene.scene_name));
    for c in scene.classes() {
        h.update(c.as_bytes());
        h.update(b"\n");
    }
    h.update(b";targets=");
    for t in scene.targets() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Renders the scene-assessment prompt pair for the current frame.
pub fn render_scene_prompt(
    prev: Option<&FrameRecord>,
    cur: &FrameRecord,
    sensitivity: SensitivityLevel,
    toggles: AblationToggles,
    mode: OutputMode,
    scene: &ActiveClassSet,
) -> PromptBundle {
    render_scene_prompt_with(prev, cur, sensitivity, toggles, mode, scene, PromptOptions::default())
}

pub fn render_scene_prompt_with(
    prev: Option<&FrameRecord>,
    cur: &FrameRecord,
    sensitivity: SensitivityLevel,
    toggles: AblationToggles,
    mode: OutputMode,
    scene: &ActiveClassSet,
    opts: PromptOptions,
) -> PromptBundle {
    let mut segments: Vec<String> = Vec::with_capacity(4);
    if toggles.include_instruction {
        segments.push(INSTRUCTION.to_string());
    }
    if toggles.include_sensitivity {
        segments.push(sensitivity_segment(sensitivity));
    }
    if toggles.include_location {
        segments.push(LOCATION.to_string());
    }
    if toggles.include_motion {
        segments.push(MOTION.to_string());
    }

    let mask = scene.mask();
    let mut user = String::new();
    user.push_str(&format!("Scene: {}.", scene.scene_name));
    let targets = scene.targets();
    if !targets.is_empty() {
        user.push_str(&format!(" Interest targets: {}.", targets.join(", ")));
    }
    user.push('\n');
    if let (Some(prev), true) = (prev, toggles.include_motion) {
        user.push_str("last frame:\n");
        user.push_str(&frame_block(prev, mask, opts));
        user.push('\n');
    }
    user.push_str("current frame:\n");
    user.push_str(&frame_block(cur, mask, opts));
    user.push('\n');
    user.push_str(mode.directive());

    PromptBundle {
        system_text: segments.join("\n"),
        user_text: user,
        config_fingerprint: config_fingerprint(toggles, sensitivity, mode, scene),
        sensitivity,
        toggles,
        mode,
        scene_name: scene.scene_name.clone(),
    }
}

pub fn render_class_switch_prompt(custom_scene: &str) -> Result<String, PromptError> {
    let scene = custom_scene.trim();
    if scene.is_empty() {
        return Err(PromptError::EmptyScene);
    }
    Ok(CLASS_SWITCH.replace(SCENE_SLOT, scene))
}

pub fn render_interest_prompt(user_command: &str) -> Result<String, PromptError> {
    let cmd = user_command.trim();
    if cmd.is_empty() {
        return Err(PromptError::EmptyCommand);
    }
    Ok(format!("{INTEREST_TARGET}\nUser command: {cmd}"))
}
