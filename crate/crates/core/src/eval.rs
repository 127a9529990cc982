//! Agreement metrics between language-model scores and the rule baseline.
//!
//! The baseline is treated as ground truth, so every number here measures
//! agreement with the rules rather than objective correctness.

use std::path::Path;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::write_atomic;
use crate::gateway::BackendRef;
use crate::pipeline::{run_stream, PipelineConfig};
use crate::prompt::{AblationToggles, SensitivityLevel};
use crate::spatial::FrameRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need both classes, got {positives} positive and {negatives} negative frames")]
    SingleClass { positives: usize, negatives: usize },
    #[error("no positive frames")]
    NoPositives,
    #[error("frame {frame_id}: score {score} is outside [0, 1]")]
    ScoreOutOfRange { frame_id: u64, score: f64 },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("heatmap: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub frame_id: u64,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>=` this value are predicted positive; `None` is the origin
    /// point above every score.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub positives: usize,
    pub auc: f64,
    pub ap: f64,
    pub roc_points: Vec<RocPoint>,
    pub threshold: f64,
    pub confusion: Confusion,
}

fn check_scores(data: &[ScoredFrame]) -> Result<(), EvalError> {
    match data.iter().find(|s| !(0.0..=1.0).contains(&s.score)) {
        Some(s) => Err(EvalError::ScoreOutOfRange {
            frame_id: s.frame_id,
            score: s.score,
        }),
        None => Ok(()),
    }
}

/// Cumulative (score, tp, fp) after each group of tied scores, highest first.
fn sweep(data: &[ScoredFrame]) -> Vec<(f64, usize, usize)> {
    let mut sorted: Vec<&ScoredFrame> = data.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, s) in sorted.iter().enumerate() {
        if s.label {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(i + 1).is_none_or(|n| n.score != s.score) {
            out.push((s.score, tp, fp));
        }
    }
    out
}

fn class_counts(data: &[ScoredFrame]) -> (usize, usize) {
    let p = data.iter().filter(|s| s.label).count();
    (p, data.len() - p)
}

/// ROC curve over distinct score thresholds and its trapezoidal area.
pub fn roc_auc(data: &[ScoredFrame]) -> Result<(Vec<RocPoint>, f64), EvalError> {
    check_scores(data)?;
    let (p, n) = class_counts(data);
    if p == 0 || n == 0 {
        return Err(EvalError::SingleClass {
            positives: p,
            negatives: n,
        });
    }
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    // Twice the trapezoid area in units of one positive-negative pair.
    let mut twice_area: u128 = 0;
    let (mut tp_prev, mut fp_prev) = (0usize, 0usize);
    for (score, tp, fp) in sweep(data) {
        twice_area += (fp - fp_prev) as u128 * (tp_prev + tp) as u128;
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold: Some(score),
        });
        tp_prev = tp;
        fp_prev = fp;
    }
    let auc = twice_area as f64 / (2 * p as u128 * n as u128) as f64;
    Ok((points, auc))
}

/// Step-sum average precision over the descending-score sweep.
pub fn average_precision(data: &[ScoredFrame]) -> Result<f64, EvalError> {
    check_scores(data)?;
    let (p, _) = class_counts(data);
    if p == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut ap = 0.0;
    let mut tp_prev = 0usize;
    for (_, tp, fp) in sweep(data) {
        ap += ((tp - tp_prev) as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        tp_prev = tp;
    }
    Ok(ap)
}

/// Counts with `score >= threshold` predicted positive.
pub fn confusion_at(data: &[ScoredFrame], threshold: f64) -> Result<Confusion, EvalError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvalError::InvalidThreshold(threshold));
    }
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for s in data {
        match (s.score >= threshold, s.label) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn evaluate(data: &[ScoredFrame], threshold: f64) -> Result<MetricsReport, EvalError> {
    let (roc_points, auc) = roc_auc(data)?;
    Ok(MetricsReport {
        n: data.len(),
        positives: class_counts(data).0,
        auc,
        ap: average_precision(data)?,
        roc_points,
        threshold,
        confusion: confusion_at(data, threshold)?,
    })
}

/// Two-row CSV: the binary baseline and the model score, one column per frame.
pub fn heatmap_csv(data: &[ScoredFrame]) -> String {
    let mut out = String::from("row");
    for s in data {
        out.push_str(&format!(",{}", s.frame_id));
    }
    out.push('\n');
    if data.is_empty() {
        return out;
    }
    out.push_str("baseline");
    for s in data {
        out.push_str(if s.label { ",1" } else { ",0" });
    }
    out.push_str("\nllm");
    for s in data {
        out.push_str(&format!(",{:.6}", s.score));
    }
    out.push('\n');
    out
}

pub fn export_heatmap(data: &[ScoredFrame], path: &Path) -> Result<(), EvalError> {
    Ok(write_atomic(path, heatmap_csv(data).as_bytes())?)
}

pub fn read_heatmap(path: &Path) -> Result<Vec<ScoredFrame>, EvalError> {
    let bad = |m: &str| EvalError::Format(m.to_string());
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| EvalError::Format(e.to_string()))?;
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| EvalError::Format(e.to_string()))?;
    let header = rows.first().ok_or_else(|| bad("missing header"))?;
    if header.get(0) != Some("row") {
        return Err(bad("header must start with `row`"));
    }
    let ids: Vec<u64> = header
        .iter()
        .skip(1)
        .map(|v| v.parse().map_err(|_| bad("frame ids must be integers")))
        .collect::<Result<_, _>>()?;
    if rows.len() == 1 && ids.is_empty() {
        return Ok(Vec::new());
    }
    let (base, llm) = match rows.as_slice() {
        [_, b, l] if b.get(0) == Some("baseline") && l.get(0) == Some("llm") => (b, l),
        _ => return Err(bad("expected `baseline` and `llm` rows")),
    };
    ids.iter()
        .enumerate()
        .map(|(i, &frame_id)| {
            let label = match base.get(i + 1) {
                Some("1") => true,
                Some("0") => false,
                _ => return Err(bad("baseline cells must be 0 or 1")),
            };
            let score = llm
                .get(i + 1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad("llm cells must be numbers"))?;
            Ok(ScoredFrame { frame_id, score, label })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub sensitivity: SensitivityLevel,
    pub toggles: AblationToggles,
}

/// The six standard ablation rows: every sensitivity with the full prompt,
/// then Low with one module removed at a time.
pub fn standard_grid() -> Vec<AblationConfig> {
    let row = |sensitivity, label: &str| AblationConfig {
        sensitivity,
        toggles: AblationToggles::parse_label(label).expect("valid label"),
    };
    vec![
        row(SensitivityLevel::Low, "SLIM"),
        row(SensitivityLevel::Medium, "SLIM"),
        row(SensitivityLevel::High, "SLIM"),
        row(SensitivityLevel::Low, "SL-M"),
        row(SensitivityLevel::Low, "S-IM"),
        row(SensitivityLevel::Low, "-LIM"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sensitivity: SensitivityLevel,
    pub toggles: String,
    pub ap: Option<f64>,
    pub auc: Option<f64>,
    pub frames: usize,
    pub error: Option<String>,
}

/// One pipeline run per grid entry, executed concurrently; rows keep grid
/// order and a failing row does not stop the others.
pub fn run_ablation(frames: &[FrameRecord], grid: &[AblationConfig], backend: BackendRef, base: &PipelineConfig) -> Vec<AblationRow> {
    thread::scope(|scope| {
        let handles: Vec<_> = grid
            .iter()
            .map(|entry| {
                let backend = backend.clone();
                let cfg = PipelineConfig {
                    sensitivity: entry.sensitivity,
                    toggles: entry.toggles,
                    ..base.clone()
                };
                let feed: Vec<_> = frames.iter().cloned().map(Ok).collect();
                scope.spawn(move || {
                    let mut row = AblationRow {
                        sensitivity: entry.sensitivity,
                        toggles: entry.toggles.label(),
                        ap: None,
                        auc: None,
                        frames: 0,
                        error: None,
                    };
                    let result = run_stream(feed, cfg, backend, None)
                        .map_err(|e| e.to_string())
                        .and_then(|report| {
                            row.frames = report.scores.len();
                            match report.error {
                                Some(e) => Err(format!("pipeline: {e}")),
                                None => Ok(report.scored_frames()),
                            }
                        })
                        .and_then(|scored| {
                            let (_, auc) = roc_auc(&scored).map_err(|e| e.to_string())?;
                            let ap = average_precision(&scored).map_err(|e| e.to_string())?;
                            Ok((ap, auc))
                        });
                    match result {
                        Ok((ap, auc)) => {
                            row.ap = Some(ap);
                            row.auc = Some(auc);
                        }
                        Err(e) => row.error = Some(e),
                    }
                    row
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation row thread")).collect()
    })
}
