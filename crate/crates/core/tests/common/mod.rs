//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use navwatch::eval::ScoredFrame;
use navwatch::prompt::{render_scene_prompt, ActiveClassSet, AblationToggles, OutputMode, SensitivityLevel};
use navwatch::spatial::{Detection, FrameRecord, Region};
use proptest::prelude::*;

/// Region by integer comparison of scaled coordinates (scaling by 2 and 4 is exact).
pub fn region_oracle(cx: f64, cy: f64) -> Region {
    if 4.0 * cx < 1.0 {
        Region::Left
    } else if 4.0 * cx > 3.0 {
        Region::Right
    } else if 2.0 * cy > 1.0 {
        Region::Ground
    } else {
        Region::Front
    }
}

pub fn baseline_oracle(frame: &FrameRecord, threshold: f64) -> bool {
    let mut anomalous = false;
    for d in &frame.detections {
        match region_oracle(d.center_x, d.center_y) {
            Region::Ground => anomalous = true,
            Region::Left | Region::Right if d.width * d.height > threshold => anomalous = true,
            _ => {}
        }
    }
    anomalous
}

/// Pairwise Mann-Whitney estimate, O(n^2).
pub fn auc_oracle(data: &[ScoredFrame]) -> f64 {
    let pos: Vec<f64> = data.iter().filter(|s| s.label).map(|s| s.score).collect();
    let neg: Vec<f64> = data.iter().filter(|s| !s.label).map(|s| s.score).collect();
    let mut twice: u128 = 0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                twice += 2;
            } else if p == n {
                twice += 1;
            }
        }
    }
    twice as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64
}

/// Average precision by recounting at every distinct threshold, O(n^2).
pub fn ap_oracle(data: &[ScoredFrame]) -> f64 {
    let p = data.iter().filter(|s| s.label).count();
    let mut thresholds: Vec<f64> = data.iter().map(|s| s.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut tp_prev = 0usize;
    for t in thresholds {
        let tp = data.iter().filter(|s| s.label && s.score >= t).count();
        let fp = data.iter().filter(|s| !s.label && s.score >= t).count();
        ap += ((tp - tp_prev) as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        tp_prev = tp;
    }
    ap
}

/// Coordinates biased toward the region boundaries.
pub fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![
        0.0..=1.0f64,
        Just(0.25),
        Just(0.5),
        Just(0.75),
        Just(0.0),
        Just(1.0),
        (0u32..=100).prop_map(|i| f64::from(i) / 100.0),
    ]
}

pub fn detection() -> impl Strategy<Value = Detection> {
    (
        prop::sample::select(vec!["car", "bench", "hole", "human face", "license plate", "dog", "pole"]),
        0.0..=1.0f64,
        coord(),
        coord(),
        prop_oneof![0.0..=1.0f64, (0u32..=20).prop_map(|i| f64::from(i) / 20.0)],
        prop_oneof![0.0..=1.0f64, (0u32..=20).prop_map(|i| f64::from(i) / 20.0)],
    )
        .prop_map(|(c, conf, cx, cy, w, h)| Detection::new(c, conf, cx, cy, w, h).unwrap())
}

pub fn frame() -> impl Strategy<Value = FrameRecord> {
    (0u64..10_000, prop::collection::vec(detection(), 0..8))
        .prop_map(|(id, dets)| FrameRecord::new(id, id * 33, "prop").with_detections(dets))
}

pub fn scored(max_len: usize) -> impl Strategy<Value = Vec<ScoredFrame>> {
    prop::collection::vec(
        (prop_oneof![0.0..=1.0f64, (0u32..=10).prop_map(|i| f64::from(i) / 10.0)], any::<bool>()),
        2..max_len,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (score, label))| ScoredFrame {
                frame_id: i as u64,
                score,
                label,
            })
            .collect()
    })
}

/// Golden prompt bundles live here, one file per toggle, level and mode.
pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/prompts")
}

pub fn fixture_frames() -> (FrameRecord, FrameRecord) {
    let d = |c: &str, conf, cx, cy, w, h| Detection::new(c, conf, cx, cy, w, h).unwrap();
    let prev = FrameRecord::new(30, 1000, "fixture").with_detections(vec![
        d("car", 0.91, 0.10, 0.30, 0.30, 0.30),
        d("bench", 0.55, 0.50, 0.40, 0.10, 0.08),
    ]);
    let cur = FrameRecord::new(60, 2000, "fixture").with_detections(vec![
        d("car", 0.93, 0.12, 0.32, 0.40, 0.40),
        d("human face", 0.99, 0.50, 0.20, 0.05, 0.05),
        d("pothole", 0.62, 0.55, 0.80, 0.12, 0.06),
        d("bicycle", 0.48, 0.88, 0.55, 0.20, 0.35),
    ]);
    (prev, cur)
}

pub fn render_all() -> Vec<(String, String)> {
    let (prev, cur) = fixture_frames();
    let scene = ActiveClassSet::builtin("walking_test").unwrap();
    let mut out = Vec::new();
    for bits in 0..16u8 {
        let toggles = AblationToggles::from_bits(bits);
        for sens in SensitivityLevel::ALL {
            for mode in OutputMode::ALL {
                let b = render_scene_prompt(Some(&prev), &cur, sens, toggles, mode, &scene);
                let name = format!("{}_{}_{}.txt", toggles.label(), sens.as_str(), mode.as_str());
                let body = format!(
                    "=== system ===\n{}\n=== user ===\n{}\n=== fingerprint ===\n{}\n",
                    b.system_text, b.user_text, b.config_fingerprint
                );
                out.push((name, body));
            }
        }
    }
    out
}
