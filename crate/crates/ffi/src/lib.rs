//! C ABI over the navwatch pipeline.
//!
//! Every fallible function returns an [`NwStatus`] and writes results through
//! out-pointers. On failure, [`nw_last_error`] describes the problem for the
//! calling thread. Handles are opaque and must be released with their
//! matching `_free` function; strings returned as `char *` are released with
//! [`nw_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use navwatch::config::KeyValues;
use navwatch::eval::{average_precision, roc_auc};
use navwatch::gateway::{estimate_cost, parse_response, Gateway, PriceTable, UsageRecord};
use navwatch::pipeline::{effective_fps, FeedReader, LatencyProfile, Pipeline, StreamReport};
use navwatch::prompt::OutputMode;
use navwatch::setup::RunSetup;
use navwatch::spatial::{classify_frame, region_of_point, FrameRecord, Region};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    PipelineError = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwRegion {
    Left = 0,
    Right = 1,
    Front = 2,
    Ground = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwOutputMode {
    Full = 0,
    Voice = 1,
    Annotation = 2,
}

impl From<NwOutputMode> for OutputMode {
    fn from(m: NwOutputMode) -> Self {
        match m {
            NwOutputMode::Full => OutputMode::Full,
            NwOutputMode::Voice => OutputMode::VoiceOnly,
            NwOutputMode::Annotation => OutputMode::Annotation,
        }
    }
}

/// Configured pipeline; reusable across runs.
pub struct NwSession {
    setup: RunSetup,
}

/// Result of one run: per-frame scores, baseline labels, and the event log.
pub struct NwReport {
    report: StreamReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(NwStatus, String);

impl Failure {
    fn new(status: NwStatus, message: impl std::fmt::Display) -> Self {
        Self(status, message.to_string())
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NwStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NwStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(Failure::new(NwStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::new(NwStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(NwStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn nw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn nw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Region of a detection center.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_assign_region(cx: f64, cy: f64, out: *mut NwRegion) -> NwStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if !((0.0..=1.0).contains(&cx) && (0.0..=1.0).contains(&cy)) {
            return Err(Failure::new(NwStatus::OutOfRange, format!("center ({cx}, {cy}) is outside [0, 1]")));
        }
        *out = match region_of_point(cx, cy) {
            Region::Left => NwRegion::Left,
            Region::Right => NwRegion::Right,
            Region::Front => NwRegion::Front,
            Region::Ground => NwRegion::Ground,
        };
        Ok(())
    })
}

/// Rule-baseline verdict for one frame given as a feed-format JSON object.
///
/// # Safety
/// `frame_json` must be a NUL-terminated string; `out_anomaly` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_classify_frame(frame_json: *const c_char, area_threshold: f64, out_anomaly: *mut bool) -> NwStatus {
    guard(|| {
        out_ptr(out_anomaly, "out_anomaly")?;
        let text = read_str(frame_json, "frame_json")?;
        let frame: FrameRecord = serde_json::from_str(text).map_err(|e| Failure::new(NwStatus::ParseError, e))?;
        let verdict = classify_frame(&frame, area_threshold).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        *out_anomaly = verdict.is_anomaly;
        Ok(())
    })
}

/// Effective frames per second when detection runs every `interval` frames.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_effective_fps(per_detection_ms: f64, interval: u32, overhead_ms: f64, out: *mut f64) -> NwStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let profile = LatencyProfile::new("ffi", per_detection_ms, None).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        *out = effective_fps(&profile, interval, overhead_ms).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Parses a model reply and returns its frame-level anomaly score.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out_score` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_parse_response(raw: *const c_char, mode: NwOutputMode, out_score: *mut f64) -> NwStatus {
    guard(|| {
        out_ptr(out_score, "out_score")?;
        let text = read_str(raw, "raw")?;
        let verdict = parse_response(text, mode.into()).map_err(|e| Failure::new(NwStatus::ParseError, e))?;
        *out_score = verdict.frame_score();
        Ok(())
    })
}

/// Daily cost in USD for calls of the given token sizes at default prices.
///
/// # Safety
/// `out_per_day` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_estimate_daily_cost(prompt_tokens: u64, completion_tokens: u64, out_per_day: *mut f64) -> NwStatus {
    guard(|| {
        out_ptr(out_per_day, "out_per_day")?;
        let usage = [UsageRecord {
            call_id: 1,
            mode: OutputMode::Annotation,
            latency_ms: 0,
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
        }];
        let est = estimate_cost(&usage, &PriceTable::default()).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        *out_per_day = est.per_day;
        Ok(())
    })
}

/// Creates a session from `key = value` settings; `config` may be null for
/// defaults (mock backend).
///
/// # Safety
/// `config` must be null or NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_session_new(config: *const c_char, out: *mut *mut NwSession) -> NwStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let kv = if config.is_null() {
            KeyValues::default()
        } else {
            KeyValues::parse(read_str(config, "config")?).map_err(|e| Failure::new(NwStatus::ParseError, e))?
        };
        let setup = RunSetup::from_key_values(&kv).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(NwSession { setup }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from [`nw_session_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nw_session_free(session: *mut NwSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Runs an in-memory feed (one JSON frame per line) through the pipeline.
/// A feed error part way still yields a report for the frames before it,
/// with status [`NwStatus::PipelineError`].
///
/// # Safety
/// `session` must be a live handle; `feed` NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_session_run(session: *const NwSession, feed: *const c_char, out: *mut *mut NwReport) -> NwStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if session.is_null() {
            return Err(Failure::new(NwStatus::NullPointer, "session is null"));
        }
        let session = &*session;
        let text = read_str(feed, "feed")?.to_string();
        let frames = FeedReader::new(std::io::Cursor::new(text.into_bytes()));
        let setup = &session.setup;
        let pipeline = Pipeline::new(setup.cfg.clone(), Arc::new(Gateway::new(setup.backend.clone())))
            .map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?
            .with_control_gateway(Arc::new(Gateway::new(setup.control_backend.clone())));
        let report = pipeline.run(frames);
        let error = report.error.clone();
        *out = Box::into_raw(Box::new(NwReport { report }));
        match error {
            Some(e) => Err(Failure::new(NwStatus::PipelineError, e)),
            None => Ok(()),
        }
    })
}

/// # Safety
/// `report` must be null or a handle from [`nw_session_run`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nw_report_free(report: *mut NwReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nw_report_frame_count(report: *const NwReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.scores.len())
}

/// Held model score and baseline label of frame `index`.
///
/// # Safety
/// `report` must be a live handle; out-pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_report_frame(report: *const NwReport, index: usize, out_score: *mut f64, out_label: *mut bool) -> NwStatus {
    guard(|| {
        out_ptr(out_score, "out_score")?;
        out_ptr(out_label, "out_label")?;
        let r = report.as_ref().ok_or_else(|| Failure::new(NwStatus::NullPointer, "report is null"))?;
        let s = r
            .report
            .scores
            .get(index)
            .ok_or_else(|| Failure::new(NwStatus::OutOfRange, format!("frame index {index} out of range")))?;
        *out_score = s.score;
        *out_label = s.rule_label;
        Ok(())
    })
}

/// AUC and AP of the run's scores against the baseline labels.
///
/// # Safety
/// `report` must be a live handle; out-pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_report_metrics(report: *const NwReport, out_auc: *mut f64, out_ap: *mut f64) -> NwStatus {
    guard(|| {
        out_ptr(out_auc, "out_auc")?;
        out_ptr(out_ap, "out_ap")?;
        let r = report.as_ref().ok_or_else(|| Failure::new(NwStatus::NullPointer, "report is null"))?;
        let scored = r.report.scored_frames();
        let (_, auc) = roc_auc(&scored).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        let ap = average_precision(&scored).map_err(|e| Failure::new(NwStatus::InvalidArgument, e))?;
        *out_auc = auc;
        *out_ap = ap;
        Ok(())
    })
}

/// Event log as newline-delimited JSON; free with [`nw_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nw_report_event_log(report: *const NwReport, out: *mut *mut c_char) -> NwStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = report.as_ref().ok_or_else(|| Failure::new(NwStatus::NullPointer, "report is null"))?;
        let mut buf = Vec::new();
        r.report.write_event_log(&mut buf).map_err(|e| Failure::new(NwStatus::PipelineError, e))?;
        let s = CString::new(buf).map_err(|e| Failure::new(NwStatus::PipelineError, e))?;
        *out = s.into_raw();
        Ok(())
    })
}
