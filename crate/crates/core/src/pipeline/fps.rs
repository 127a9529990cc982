//! Throughput model for frame compensation.
//!
//! Running the detector every `interval` frames amortizes its latency, so the
//! effective rate is `1000 / (latency / interval + overhead)` where the
//! overhead covers per-frame work that cannot be skipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-frame overhead fitted against the GPU detector measurements.
pub const DEFAULT_OVERHEAD_MS: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpsError {
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("profile `{label}`: base_fps {base_fps} disagrees with 1000/{per_detection_ms} ms by more than 10%")]
    InconsistentProfile {
        label: String,
        base_fps: f64,
        per_detection_ms: f64,
    },
    #[error("unknown latency profile `{0}`")]
    UnknownProfile(String),
    #[error("cannot fit overhead without samples")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub label: String,
    pub per_detection_ms: f64,
    pub base_fps: Option<f64>,
}

impl LatencyProfile {
    pub fn new(label: impl Into<String>, per_detection_ms: f64, base_fps: Option<f64>) -> Result<Self, FpsError> {
        let p = Self {
            label: label.into(),
            per_detection_ms,
            base_fps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FpsError> {
        if !(self.per_detection_ms.is_finite() && self.per_detection_ms > 0.0) {
            return Err(FpsError::NonPositive("per_detection_ms"));
        }
        if let Some(fps) = self.base_fps {
            let implied = 1000.0 / self.per_detection_ms;
            if !(fps.is_finite() && fps > 0.0) || ((fps - implied) / implied).abs() > 0.10 {
                return Err(FpsError::InconsistentProfile {
                    label: self.label.clone(),
                    base_fps: fps,
                    per_detection_ms: self.per_detection_ms,
                });
            }
        }
        Ok(())
    }

    /// Named detector/platform profiles, keyed by a short slug.
    pub fn builtin(name: &str) -> Result<Self, FpsError> {
        BUILTIN_PROFILES
            .iter()
            .find(|(slug, ..)| *slug == name)
            .map(|(_, label, ms, fps)| Self {
                label: label.to_string(),
                per_detection_ms: *ms,
                base_fps: Some(*fps),
            })
            .ok_or_else(|| FpsError::UnknownProfile(name.to_string()))
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_PROFILES.iter().map(|(slug, ..)| *slug)
    }
}

const BUILTIN_PROFILES: &[(&str, &str, f64, f64)] = &[
    ("v100-yolov8l", "Yolo-v8l PyTorch V100 GPU", 45.0, 22.01),
    ("v100-yolov8x", "Yolo-v8x PyTorch V100 GPU", 71.0, 14.22),
    ("v100-yolov8x-seg", "Yolo-v8x-seg PyTorch V100 GPU", 83.0, 12.06),
    ("v100-yolov8-world", "Yolov8-World PyTorch V100 GPU", 50.0, 20.12),
    ("v100-yolov8x-world-v2", "Yolov8x-World-v2 PyTorch V100 GPU", 62.0, 16.74),
    ("m2-cpu", "Yolov8x-World-v2 CoreML M2 CPU", 199.0, 5.01),
    ("m2-ane", "Yolov8x-World-v2 CoreML M2 Neural Engine", 51.0, 19.60),
    ("a16-cpu", "Yolov8x-World-v2 CoreML A16-Bionic CPU", 789.0, 1.26),
    ("a16-ane", "Yolov8x-World-v2 CoreML A16-Bionic Neural Engine", 61.0, 16.24),
];

pub fn effective_fps(profile: &LatencyProfile, detect_interval: u32, overhead_ms_per_frame: f64) -> Result<f64, FpsError> {
    profile.validate()?;
    if detect_interval == 0 {
        return Err(FpsError::NonPositive("detect_interval"));
    }
    if !(overhead_ms_per_frame.is_finite() && overhead_ms_per_frame > 0.0) {
        return Err(FpsError::NonPositive("overhead_ms_per_frame"));
    }
    Ok(1000.0 / (profile.per_detection_ms / f64::from(detect_interval) + overhead_ms_per_frame))
}

/// One measured point: detector latency, interval, observed effective FPS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpsSample {
    pub per_detection_ms: f64,
    pub detect_interval: u32,
    pub observed_fps: f64,
}

/// Least-squares fit of the overhead constant on relative FPS error,
/// searched by golden section over [0, 10] ms.
pub fn fit_overhead(samples: &[FpsSample]) -> Result<f64, FpsError> {
    if samples.is_empty() {
        return Err(FpsError::NoSamples);
    }
    let loss = |o: f64| -> f64 {
        samples
            .iter()
            .map(|s| {
                let pred = 1000.0 / (s.per_detection_ms / f64::from(s.detect_interval) + o);
                (pred / s.observed_fps - 1.0).powi(2)
            })
            .sum()
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 10.0f64);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..200 {
        if loss(c) < loss(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    Ok((a + b) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(ms: f64) -> LatencyProfile {
        LatencyProfile::new("p", ms, None).unwrap()
    }

    #[test]
    fn compensated_rates() {
        let v = effective_fps(&profile(62.0), 5, 0.6).unwrap();
        assert!((v - 76.92).abs() < 0.01, "{v}");
        let v = effective_fps(&profile(45.0), 5, 0.6).unwrap();
        assert!((v - 104.17).abs() < 0.01, "{v}");
        let v = effective_fps(&profile(62.0), 1, 0.6).unwrap();
        assert!((v - 15.97).abs() < 0.01, "{v}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LatencyProfile::new("p", 0.0, None).is_err());
        assert!(LatencyProfile::new("p", 62.0, Some(30.0)).is_err());
        assert!(effective_fps(&profile(62.0), 0, 0.6).is_err());
        assert!(effective_fps(&profile(62.0), 5, 0.0).is_err());
        assert!(effective_fps(&profile(62.0), 5, -1.0).is_err());
        assert_eq!(fit_overhead(&[]), Err(FpsError::NoSamples));
    }

    #[test]
    fn builtin_profiles_are_consistent() {
        for name in LatencyProfile::builtin_names() {
            LatencyProfile::builtin(name).unwrap().validate().unwrap();
        }
        assert!(LatencyProfile::builtin("tpu").is_err());
    }

    #[test]
    fn fit_recovers_known_overhead() {
        let samples: Vec<FpsSample> = [30.0, 50.0, 90.0]
            .iter()
            .map(|&ms| FpsSample {
                per_detection_ms: ms,
                detect_interval: 5,
                observed_fps: 1000.0 / (ms / 5.0 + 1.25),
            })
            .collect();
        assert!((fit_overhead(&samples).unwrap() - 1.25).abs() < 1e-6);
    }
}
