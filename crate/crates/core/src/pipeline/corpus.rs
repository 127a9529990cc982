//! Seeded synthetic detection corpus.
//!
//! Frames are grouped into one-second segments. A segment is either normal
//! (Front clutter and small side objects only) or anomalous, in which case a
//! persistent Ground object or a large side object is present throughout.
//! Geometry keeps a margin from every rule boundary so the embedded labels
//! agree with the baseline by construction.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::spatial::{Detection, FrameRecord};

/// Frames per segment at the default 30 FPS source rate.
pub const SEGMENT_FRAMES: usize = 30;
const FRAME_MS: f64 = 1000.0 / 30.0;

const HAZARD_CLASSES: [&str; 16] = [
    "car",
    "bicycle",
    "motorcycle",
    "bus",
    "dog",
    "pole",
    "bench",
    "trash can",
    "traffic cone",
    "fire hydrant",
    "puddle",
    "hole",
    "crack",
    "curb",
    "stair",
    "construction barrier",
];

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("anomaly rate {0} must lie in [0, 1]")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub frames: Vec<FrameRecord>,
    /// Intended baseline label for each frame, in order.
    pub labels: Vec<bool>,
}

impl Corpus {
    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn write_feed<W: Write>(&self, out: W) -> std::io::Result<()> {
        super::feed::write_feed(out, &self.frames)
    }

    /// `frame_id,label` CSV with 0/1 labels.
    pub fn write_labels<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame_id,label")?;
        for (f, l) in self.frames.iter().zip(&self.labels) {
            writeln!(out, "{},{}", f.frame_id, u8::from(*l))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Cause {
    Ground,
    Left,
    Right,
}

#[derive(Debug, Clone)]
struct Anchor {
    class: &'static str,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    conf: f64,
}

fn q(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

fn class(rng: &mut ChaCha8Rng) -> &'static str {
    HAZARD_CLASSES.choose(rng).copied().expect("non-empty")
}

fn anomaly_anchor(rng: &mut ChaCha8Rng, cause: Cause) -> Anchor {
    match cause {
        Cause::Ground => Anchor {
            class: class(rng),
            cx: rng.gen_range(0.32..0.68),
            cy: rng.gen_range(0.58..0.92),
            w: rng.gen_range(0.03..0.30),
            h: rng.gen_range(0.03..0.25),
            conf: rng.gen_range(0.35..0.98),
        },
        Cause::Left | Cause::Right => {
            let area: f64 = rng.gen_range(0.13..0.45);
            let w: f64 = rng.gen_range(0.30..0.60f64).min(area / 0.30);
            let h = (area / w).min(0.95);
            let cx = rng.gen_range(0.04..0.20);
            Anchor {
                class: class(rng),
                cx: if matches!(cause, Cause::Left) { cx } else { 1.0 - cx },
                cy: rng.gen_range(0.25..0.75),
                w,
                h,
                conf: rng.gen_range(0.35..0.98),
            }
        }
    }
}

/// Front object or small side object; never satisfies a baseline criterion.
fn clutter(rng: &mut ChaCha8Rng) -> Detection {
    let conf = q(rng.gen_range(0.25..0.95));
    if rng.gen_bool(0.6) {
        Detection {
            class_name: class(rng).to_string(),
            confidence: conf,
            center_x: q(rng.gen_range(0.30..0.70)),
            center_y: q(rng.gen_range(0.05..0.45)),
            width: q(rng.gen_range(0.02..0.40)),
            height: q(rng.gen_range(0.02..0.40)),
        }
    } else {
        let w = rng.gen_range(0.05..0.30);
        let h = rng.gen_range(0.05..0.30f64).min(0.085 / w);
        let cx = rng.gen_range(0.03..0.21);
        Detection {
            class_name: class(rng).to_string(),
            confidence: conf,
            center_x: q(if rng.gen_bool(0.5) { cx } else { 1.0 - cx }),
            center_y: q(rng.gen_range(0.10..0.90)),
            width: q(w),
            height: q(h),
        }
    }
}

fn jittered(rng: &mut ChaCha8Rng, a: &Anchor, cause: Cause) -> Detection {
    let j = |rng: &mut ChaCha8Rng| rng.gen_range(-0.01..0.01);
    let (cx, cy) = match cause {
        Cause::Ground => ((a.cx + j(rng)).clamp(0.30, 0.70), (a.cy + j(rng)).clamp(0.56, 0.95)),
        Cause::Left => ((a.cx + j(rng)).clamp(0.02, 0.22), (a.cy + j(rng)).clamp(0.1, 0.9)),
        Cause::Right => ((a.cx + j(rng)).clamp(0.78, 0.98), (a.cy + j(rng)).clamp(0.1, 0.9)),
    };
    Detection {
        class_name: a.class.to_string(),
        confidence: q((a.conf + j(rng)).clamp(0.05, 0.99)),
        center_x: q(cx),
        center_y: q(cy),
        width: q(a.w),
        height: q(a.h),
    }
}

/// Deterministic corpus of `n_frames` frames with exactly
/// `floor(anomaly_rate * n_frames)` anomalous frames.
pub fn generate_corpus(seed: u64, n_frames: usize, anomaly_rate: f64) -> Result<Corpus, CorpusError> {
    if !(0.0..=1.0).contains(&anomaly_rate) {
        return Err(CorpusError::InvalidRate(anomaly_rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = ((anomaly_rate * n_frames as f64) + 1e-9).floor() as usize;
    let target = target.min(n_frames);

    let n_segments = n_frames.div_ceil(SEGMENT_FRAMES);
    let seg_len = |s: usize| SEGMENT_FRAMES.min(n_frames - s * SEGMENT_FRAMES);
    // Whole anomalous segments first, then a partial one for the remainder.
    let mut order: Vec<usize> = (0..n_segments).collect();
    order.shuffle(&mut rng);
    let mut anomalous = vec![0usize; n_segments];
    let mut remaining = target;
    for &s in &order {
        if remaining == 0 {
            break;
        }
        let take = seg_len(s).min(remaining);
        anomalous[s] = take;
        remaining -= take;
    }

    let source = format!("synthetic-seed{seed}");
    let mut frames = Vec::with_capacity(n_frames);
    let mut labels = Vec::with_capacity(n_frames);
    for (s, &n_anom) in anomalous.iter().enumerate() {
        let cause = match rng.gen_range(0..3) {
            0 => Cause::Left,
            1 => Cause::Right,
            _ => Cause::Ground,
        };
        let anchor = anomaly_anchor(&mut rng, cause);
        let clutter_count = rng.gen_range(0..=3);
        let base_clutter: Vec<Detection> = (0..clutter_count).map(|_| clutter(&mut rng)).collect();
        for k in 0..seg_len(s) {
            let pos = s * SEGMENT_FRAMES + k;
            let anomalous_frame = k < n_anom;
            let mut dets = Vec::new();
            for c in &base_clutter {
                if rng.gen_bool(0.9) {
                    dets.push(c.clone());
                }
            }
            if rng.gen_bool(0.05) {
                dets.push(clutter(&mut rng));
            }
            if anomalous_frame {
                let at = rng.gen_range(0..=dets.len());
                dets.insert(at, jittered(&mut rng, &anchor, cause));
            }
            frames.push(FrameRecord {
                frame_id: pos as u64,
                timestamp_ms: (pos as f64 * FRAME_MS).round() as u64,
                source_tag: source.clone(),
                detections: dets,
            });
            labels.push(anomalous_frame);
        }
    }
    Ok(Corpus { frames, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::annotate_stream;

    #[test]
    fn exact_anomaly_count_and_agreement() {
        let c = generate_corpus(1, 600, 0.2).unwrap();
        assert_eq!(c.frames.len(), 600);
        assert_eq!(c.anomaly_count(), 120);
        let labels = annotate_stream(&c.frames, 0.10).unwrap();
        assert!(labels.iter().zip(&c.labels).all(|((_, a), b)| a == b));
    }

    #[test]
    fn odd_sizes() {
        for (n, rate) in [(95, 0.33), (31, 1.0), (7, 0.5), (0, 0.5)] {
            let c = generate_corpus(9, n, rate).unwrap();
            assert_eq!(c.frames.len(), n);
            assert_eq!(c.anomaly_count(), (rate * n as f64 + 1e-9).floor() as usize);
            let labels = annotate_stream(&c.frames, 0.10).unwrap();
            assert!(labels.iter().zip(&c.labels).all(|((_, a), b)| a == b));
        }
    }

    #[test]
    fn zero_rate_is_all_normal() {
        let c = generate_corpus(3, 300, 0.0).unwrap();
        assert!(annotate_stream(&c.frames, 0.10).unwrap().iter().all(|(_, l)| !l));
    }

    #[test]
    fn deterministic_bytes() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_corpus(1, 200, 0.2).unwrap().write_feed(&mut a).unwrap();
        generate_corpus(1, 200, 0.2).unwrap().write_feed(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate_corpus(2, 200, 0.2).unwrap().write_feed(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_rate() {
        assert_eq!(generate_corpus(1, 10, 1.5), Err(CorpusError::InvalidRate(1.5)));
    }
}
