//! H-pattern region assignment and the rule-based anomaly baseline.
//!
//! The image is split into a left strip (x < 0.25), a right strip
//! (x > 0.75), and a middle column divided at half height into Front
//! (upper) and Ground (lower). Image coordinates grow downward, so a
//! larger `center_y` is closer to the camera.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default area threshold for side-strip detections.
pub const DEFAULT_AREA_THRESHOLD: f64 = 0.10;

const SIDE_STRIP: f64 = 0.25;
const VERTICAL_SPLIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("field `{field}` is {value}, expected a finite value in [0, 1]")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("detection {index}: {source}")]
    InvalidDetection {
        index: usize,
        #[source]
        source: Box<SpatialError>,
    },
    #[error("area threshold {0} must lie strictly between 0 and 1")]
    InvalidThreshold(f64),
    #[error("duplicate frame_id {frame_id} at stream positions {first} and {second}")]
    DuplicateFrame {
        frame_id: u64,
        first: usize,
        second: usize,
    },
}

/// One detected object. Geometry is normalized to the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(rename = "conf")]
    pub confidence: f64,
    #[serde(rename = "cx")]
    pub center_x: f64,
    #[serde(rename = "cy")]
    pub center_y: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
}

impl Detection {
    pub fn new(
        class_name: impl Into<String>,
        confidence: f64,
        center_x: f64,
        center_y: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, SpatialError> {
        let d = Self {
            class_name: class_name.into(),
            confidence,
            center_x,
            center_y,
            width,
            height,
        };
        d.validate()?;
        Ok(d)
    }

    /// Checks that every numeric field is finite and inside [0, 1].
    pub fn validate(&self) -> Result<(), SpatialError> {
        for (field, value) in self.numeric_fields() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(SpatialError::OutOfRange { field, value });
            }
        }
        Ok(())
    }

    pub(crate) fn numeric_fields(&self) -> [(&'static str, f64); 5] {
        [
            ("conf", self.confidence),
            ("cx", self.center_x),
            ("cy", self.center_y),
            ("w", self.width),
            ("h", self.height),
        ]
    }

    pub fn area_fraction(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Left,
    Right,
    Front,
    Ground,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Left, Region::Right, Region::Front, Region::Ground];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Left => "Left",
            Region::Right => "Right",
            Region::Front => "Front",
            Region::Ground => "Ground",
        }
    }

    pub fn is_side(self) -> bool {
        matches!(self, Region::Left | Region::Right)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All detections of one frame plus timing metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp_ms: u64,
    #[serde(rename = "source")]
    pub source_tag: String,
    #[serde(rename = "objects")]
    pub detections: Vec<Detection>,
}

impl FrameRecord {
    pub fn new(frame_id: u64, timestamp_ms: u64, source_tag: impl Into<String>) -> Self {
        Self {
            frame_id,
            timestamp_ms,
            source_tag: source_tag.into(),
            detections: Vec::new(),
        }
    }

    pub fn with_detections(mut self, detections: Vec<Detection>) -> Self {
        self.detections = detections;
        self
    }

    /// Validates every detection, naming the first offending index.
    pub fn validate(&self) -> Result<(), SpatialError> {
        for (index, d) in self.detections.iter().enumerate() {
            d.validate().map_err(|e| SpatialError::InvalidDetection {
                index,
                source: Box::new(e),
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub index: usize,
    pub region: Region,
    pub area_fraction: f64,
}

/// Baseline decision for one frame together with the detections that caused it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub is_anomaly: bool,
    pub triggers: Vec<Trigger>,
    pub area_threshold_used: f64,
}

/// Region of the detection's center point.
pub fn assign_region(d: &Detection) -> Result<Region, SpatialError> {
    d.validate()?;
    Ok(region_of_point(d.center_x, d.center_y))
}

/// Region of a point; callers check the range.
pub fn region_of_point(x: f64, y: f64) -> Region {
    if x < SIDE_STRIP {
        Region::Left
    } else if x > 1.0 - SIDE_STRIP {
        Region::Right
    } else if y <= VERTICAL_SPLIT {
        Region::Front
    } else {
        Region::Ground
    }
}

pub fn check_threshold(area_threshold: f64) -> Result<(), SpatialError> {
    if area_threshold.is_finite() && area_threshold > 0.0 && area_threshold < 1.0 {
        Ok(())
    } else {
        Err(SpatialError::InvalidThreshold(area_threshold))
    }
}

/// Applies the two baseline criteria: any Ground detection, or a side-strip
/// detection whose area is strictly above `area_threshold`.
pub fn classify_frame(frame: &FrameRecord, area_threshold: f64) -> Result<RuleVerdict, SpatialError> {
    check_threshold(area_threshold)?;
    frame.validate()?;
    let triggers: Vec<Trigger> = frame
        .detections
        .iter()
        .enumerate()
        .filter_map(|(index, d)| {
            let region = region_of_point(d.center_x, d.center_y);
            let area_fraction = d.area_fraction();
            let fires = match region {
                Region::Ground => true,
                Region::Left | Region::Right => area_fraction > area_threshold,
                Region::Front => false,
            };
            fires.then_some(Trigger {
                index,
                region,
                area_fraction,
            })
        })
        .collect();
    Ok(RuleVerdict {
        is_anomaly: !triggers.is_empty(),
        triggers,
        area_threshold_used: area_threshold,
    })
}

/// Baseline label for every frame of a stream, in input order.
pub fn annotate_stream(frames: &[FrameRecord], area_threshold: f64) -> Result<Vec<(u64, bool)>, SpatialError> {
    check_threshold(area_threshold)?;
    let mut seen: HashMap<u64, usize> = HashMap::with_capacity(frames.len());
    let mut labels = Vec::with_capacity(frames.len());
    for (pos, frame) in frames.iter().enumerate() {
        if let Some(&first) = seen.get(&frame.frame_id) {
            return Err(SpatialError::DuplicateFrame {
                frame_id: frame.frame_id,
                first,
                second: pos,
            });
        }
        seen.insert(frame.frame_id, pos);
        labels.push((frame.frame_id, classify_frame(frame, area_threshold)?.is_anomaly));
    }
    Ok(labels)
}
