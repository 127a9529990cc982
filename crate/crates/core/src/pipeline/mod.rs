//! The two-rate real-time loop.
//!
//! Three stages connected by bounded queues:
//!
//! 1. ingest: reads the feed, runs (or compensates) detection every
//!    `detect_interval` frames;
//! 2. schedule: computes the rule baseline, dispatches the language model
//!    every `llm_interval` frames with at most one call in flight, and holds
//!    the latest score between verdicts;
//! 3. record: writes the event log and prints alerts.
//!
//! A full queue blocks the stage feeding it, so frames are never dropped.

mod control;
mod corpus;
mod feed;
mod fps;

use std::io::Write;
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{parse_response, BackendRef, Gateway, GatewayError, LlmVerdict, RequestKind, UsageRecord};
use crate::prompt::{render_scene_prompt_with, AblationToggles, ActiveClassSet, OutputMode, PromptOptions, SensitivityLevel, DEFAULT_SCENE};
use crate::spatial::{check_threshold, classify_frame, region_of_point, FrameRecord, DEFAULT_AREA_THRESHOLD};

pub use control::{add_interest, parse_class_reply, switch_scene, ControlError};
pub use corpus::{generate_corpus, Corpus, CorpusError, SEGMENT_FRAMES};
pub use feed::{ingest_command, ingest_feed, read_feed, write_feed, FeedError, FeedReader};
pub use fps::{effective_fps, fit_overhead, FpsError, FpsSample, LatencyProfile, DEFAULT_OVERHEAD_MS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub detect_interval: u32,
    pub llm_interval: u32,
    pub area_threshold: f64,
    pub sensitivity: SensitivityLevel,
    pub toggles: AblationToggles,
    pub mode: OutputMode,
    pub scene: ActiveClassSet,
    pub source_fps: f64,
    pub llm_timeout_ms: u64,
    /// Emit alerts from the rule baseline while no verdict is available or
    /// after a failed call.
    pub rule_fallback: bool,
    pub prompt: PromptOptions,
    pub queue_capacity: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detect_interval: 5,
            llm_interval: 30,
            area_threshold: DEFAULT_AREA_THRESHOLD,
            sensitivity: SensitivityLevel::Low,
            toggles: AblationToggles::ALL_ON,
            mode: OutputMode::Annotation,
            scene: ActiveClassSet::builtin(DEFAULT_SCENE).expect("built-in scene"),
            source_fps: 30.0,
            llm_timeout_ms: 10_000,
            rule_fallback: false,
            prompt: PromptOptions::default(),
            queue_capacity: 64,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.detect_interval == 0 {
            return bad("detect_interval must be at least 1".into());
        }
        if self.llm_interval == 0 {
            return bad("llm_interval must be at least 1".into());
        }
        if !self.llm_interval.is_multiple_of(self.detect_interval) {
            return bad(format!(
                "llm_interval {} must be a multiple of detect_interval {}",
                self.llm_interval, self.detect_interval
            ));
        }
        if check_threshold(self.area_threshold).is_err() {
            return bad(format!("area_threshold {} must lie in (0, 1)", self.area_threshold));
        }
        if !(self.source_fps.is_finite() && self.source_fps > 0.0) {
            return bad("source_fps must be positive".into());
        }
        if self.queue_capacity == 0 {
            return bad("queue_capacity must be at least 1".into());
        }
        if self.prompt.max_detections == 0 {
            return bad("max_detections must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    DetectionRan,
    DetectionCompensated,
    LlmDispatched,
    LlmApplied,
    LlmSkippedBusy,
    LlmFailed,
    ConfigChanged,
    AlertEmitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPayload {
    Detections { count: usize, rule_anomaly: bool },
    Dispatch { call_id: u64, fingerprint: String },
    Verdict { call_id: u64, score: f64, verdict: LlmVerdict },
    Busy { pending_call_id: u64 },
    Failure { call_id: u64, message: String },
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub frame_id: u64,
    pub timestamp_ms: u64,
    pub kind: EventKind,
    pub payload: EventPayload,
}

/// Score and baseline label of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_id: u64,
    pub timestamp_ms: u64,
    pub score: f64,
    pub rule_label: bool,
}

#[derive(Debug)]
pub struct StreamReport {
    pub events: Vec<PipelineEvent>,
    pub scores: Vec<FrameScore>,
    /// False when the source failed part way.
    pub complete: bool,
    pub error: Option<String>,
    pub usage: Vec<UsageRecord>,
    /// Compensated throughput predicted from the latency profile, if given.
    pub modeled_fps: Option<f64>,
    /// Frames per second the loop actually processed (wall clock).
    pub measured_fps: f64,
}

impl StreamReport {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn scored_frames(&self) -> Vec<crate::eval::ScoredFrame> {
        self.scores
            .iter()
            .map(|s| crate::eval::ScoredFrame {
                frame_id: s.frame_id,
                score: s.score,
                label: s.rule_label,
            })
            .collect()
    }

    pub fn write_event_log<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_events(out, &self.events)
    }
}

pub fn write_events<W: Write>(mut out: W, events: &[PipelineEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Snapshot answered to a `Status` control command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusSnapshot {
    pub frame_id: Option<u64>,
    pub scene: String,
    pub class_count: usize,
    pub targets: Vec<String>,
    pub sensitivity: SensitivityLevel,
    pub mode: OutputMode,
    pub score: f64,
    pub pending_changes: usize,
}

/// Runtime changes sent from the REPL. All but `Status` take effect at the
/// next language-model tick.
#[derive(Debug)]
pub enum ControlCommand {
    Scene(String),
    Find(String),
    Sensitivity(SensitivityLevel),
    Mode(OutputMode),
    Status(Sender<StatusSnapshot>),
    /// Ends the stream after the current frame.
    Stop,
}

struct IngestItem {
    position: u64,
    frame: FrameRecord,
    /// Detections the pipeline acts on: fresh or carried forward.
    effective: Arc<FrameRecord>,
    fresh: bool,
}

type CallOutcome = Result<(String, UsageRecord), GatewayError>;

enum InFlight {
    Simulated { ready_at_ms: u64, outcome: CallOutcome },
    Threaded { rx: Receiver<CallOutcome> },
}

struct Pending {
    call_id: u64,
    mode: OutputMode,
    flight: InFlight,
}

/// A configured pipeline ready to consume one stream.
pub struct Pipeline {
    cfg: PipelineConfig,
    gateway: Arc<Gateway>,
    control_gateway: Arc<Gateway>,
    control: Option<Receiver<ControlCommand>>,
    event_log: Option<Box<dyn Write + Send>>,
    alert_out: Option<Box<dyn Write + Send>>,
    profile: Option<LatencyProfile>,
    pace: Option<f64>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, gateway: Arc<Gateway>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            control_gateway: gateway.clone(),
            gateway,
            control: None,
            event_log: None,
            alert_out: None,
            profile: None,
            pace: None,
        })
    }

    /// Gateway used for scene switches and interest targets.
    pub fn with_control_gateway(mut self, gateway: Arc<Gateway>) -> Self {
        self.control_gateway = gateway;
        self
    }

    pub fn with_control(mut self, rx: Receiver<ControlCommand>) -> Self {
        self.control = Some(rx);
        self
    }

    /// Streams every event as one JSON line.
    pub fn with_event_log(mut self, out: Box<dyn Write + Send>) -> Self {
        self.event_log = Some(out);
        self
    }

    /// Prints alert text, one `[ALERT]` line each.
    pub fn with_alert_output(mut self, out: Box<dyn Write + Send>) -> Self {
        self.alert_out = Some(out);
        self
    }

    pub fn with_profile(mut self, profile: LatencyProfile) -> Self {
        self.profile = Some(profile);
        self
    }

    /// Paces ingest to the frame timestamps instead of replaying at full speed.
    pub fn realtime(self, on: bool) -> Self {
        self.paced(on.then_some(1.0))
    }

    /// Paces ingest at `speed` times the timestamp rate; `None` replays as
    /// fast as the stages allow.
    pub fn paced(mut self, speed: Option<f64>) -> Self {
        self.pace = speed.filter(|s| s.is_finite() && *s > 0.0);
        self
    }

    pub fn run<I>(self, source: I) -> StreamReport
    where
        I: IntoIterator<Item = Result<FrameRecord, FeedError>>,
        I::IntoIter: Send + 'static,
    {
        let Pipeline {
            cfg,
            gateway,
            control_gateway,
            control,
            event_log,
            alert_out,
            profile,
            pace,
        } = self;
        let started = Instant::now();
        let modeled_fps = profile
            .as_ref()
            .and_then(|p| effective_fps(p, cfg.detect_interval, DEFAULT_OVERHEAD_MS).ok());

        let (frame_tx, frame_rx) = mpsc::sync_channel::<Result<IngestItem, String>>(cfg.queue_capacity);
        let (event_tx, event_rx) = mpsc::sync_channel::<PipelineEvent>(cfg.queue_capacity);

        let detect_interval = u64::from(cfg.detect_interval);
        let source = source.into_iter();
        let ingest = thread::spawn(move || ingest_stage(source, detect_interval, pace, frame_tx));
        let recorder = thread::spawn(move || record_stage(event_rx, event_log, alert_out));

        let mut scheduler = Scheduler::new(cfg, gateway.clone(), control_gateway, control, event_tx);
        let mut error = None;
        for item in frame_rx {
            match item {
                Ok(item) => {
                    scheduler.step(item);
                    if scheduler.stopped {
                        break;
                    }
                }
                Err(e) => {
                    error = Some(e);
                    break;
                }
            }
        }
        let frames = scheduler.scores.len();
        let scores = std::mem::take(&mut scheduler.scores);
        drop(scheduler);
        let _ = ingest.join();
        let events = recorder.join().expect("recorder thread");
        let elapsed = started.elapsed().as_secs_f64();

        StreamReport {
            events,
            scores,
            complete: error.is_none(),
            error,
            usage: gateway.usage(),
            modeled_fps,
            measured_fps: if elapsed > 0.0 { frames as f64 / elapsed } else { 0.0 },
        }
    }
}

/// Runs `frames` through a fresh pipeline with default plumbing.
pub fn run_stream<I>(frames: I, cfg: PipelineConfig, backend: BackendRef, profile: Option<LatencyProfile>) -> Result<StreamReport, PipelineError>
where
    I: IntoIterator<Item = Result<FrameRecord, FeedError>>,
    I::IntoIter: Send + 'static,
{
    let mut p = Pipeline::new(cfg, Arc::new(Gateway::new(backend)))?;
    if let Some(profile) = profile {
        p = p.with_profile(profile);
    }
    Ok(p.run(frames))
}

fn ingest_stage<I>(source: I, detect_interval: u64, pace: Option<f64>, tx: SyncSender<Result<IngestItem, String>>)
where
    I: Iterator<Item = Result<FrameRecord, FeedError>>,
{
    let started = Instant::now();
    let mut first_ts: Option<u64> = None;
    let mut last: Option<(u64, u64)> = None;
    let mut effective: Option<Arc<FrameRecord>> = None;
    for (position, item) in (0u64..).zip(source) {
        let frame = match item {
            Ok(f) => f,
            Err(e) => {
                let _ = tx.send(Err(format!("source failed at stream position {position}: {e}")));
                return;
            }
        };
        if let Err(e) = frame.validate() {
            let _ = tx.send(Err(format!("frame {}: {e}", frame.frame_id)));
            return;
        }
        if let Some((id, ts)) = last {
            if frame.frame_id <= id || frame.timestamp_ms < ts {
                let _ = tx.send(Err(format!("frame {} is out of order after frame {id}", frame.frame_id)));
                return;
            }
        }
        last = Some((frame.frame_id, frame.timestamp_ms));
        if let Some(speed) = pace {
            let base = *first_ts.get_or_insert(frame.timestamp_ms);
            let due = Duration::from_secs_f64((frame.timestamp_ms - base) as f64 / 1000.0 / speed);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                thread::sleep(wait);
            }
        }
        let fresh = position % detect_interval == 0 || effective.is_none();
        let current = if fresh {
            Arc::new(frame.clone())
        } else {
            let carried = effective.as_ref().expect("set on first frame");
            Arc::new(FrameRecord {
                frame_id: frame.frame_id,
                timestamp_ms: frame.timestamp_ms,
                source_tag: frame.source_tag.clone(),
                detections: carried.detections.clone(),
            })
        };
        effective = Some(current.clone());
        let item = IngestItem {
            position,
            frame,
            effective: current,
            fresh,
        };
        if tx.send(Ok(item)).is_err() {
            return;
        }
    }
}

fn record_stage(
    rx: Receiver<PipelineEvent>,
    mut log: Option<Box<dyn Write + Send>>,
    mut alerts: Option<Box<dyn Write + Send>>,
) -> Vec<PipelineEvent> {
    let mut events = Vec::new();
    for event in rx {
        if let Some(out) = log.as_mut() {
            let _ = serde_json::to_writer(&mut *out, &event);
            let _ = out.write_all(b"\n");
        }
        if let (EventKind::AlertEmitted, Some(out), EventPayload::Text(text)) = (event.kind, alerts.as_mut(), &event.payload) {
            let _ = writeln!(out, "[ALERT] frame {}: {}", event.frame_id, text);
            let _ = out.flush();
        }
        events.push(event);
    }
    if let Some(out) = log.as_mut() {
        let _ = out.flush();
    }
    events
}

struct Scheduler {
    cfg: PipelineConfig,
    gateway: Arc<Gateway>,
    control_gateway: Arc<Gateway>,
    control: Option<Receiver<ControlCommand>>,
    events: SyncSender<PipelineEvent>,
    queued: Vec<ControlCommand>,
    pending: Option<Pending>,
    last_sampled: Option<Arc<FrameRecord>>,
    hold: f64,
    verdict_seen: bool,
    last_call_failed: bool,
    current_frame: Option<u64>,
    scores: Vec<FrameScore>,
    stopped: bool,
}

impl Scheduler {
    fn new(
        cfg: PipelineConfig,
        gateway: Arc<Gateway>,
        control_gateway: Arc<Gateway>,
        control: Option<Receiver<ControlCommand>>,
        events: SyncSender<PipelineEvent>,
    ) -> Self {
        Self {
            cfg,
            gateway,
            control_gateway,
            control,
            events,
            queued: Vec::new(),
            pending: None,
            last_sampled: None,
            hold: 0.0,
            verdict_seen: false,
            last_call_failed: false,
            current_frame: None,
            scores: Vec::new(),
            stopped: false,
        }
    }

    fn emit(&self, frame: &FrameRecord, kind: EventKind, payload: EventPayload) {
        let _ = self.events.send(PipelineEvent {
            frame_id: frame.frame_id,
            timestamp_ms: frame.timestamp_ms,
            kind,
            payload,
        });
    }

    fn step(&mut self, item: IngestItem) {
        let IngestItem {
            position,
            frame,
            effective,
            fresh,
        } = item;
        self.current_frame = Some(frame.frame_id);
        self.poll_control();

        // Frames are validated in ingest and the threshold in the config.
        let verdict = classify_frame(&frame, self.cfg.area_threshold).expect("validated frame");
        self.emit(
            &frame,
            if fresh {
                EventKind::DetectionRan
            } else {
                EventKind::DetectionCompensated
            },
            EventPayload::Detections {
                count: effective.detections.len(),
                rule_anomaly: verdict.is_anomaly,
            },
        );

        self.resolve(&frame);

        if position % u64::from(self.cfg.llm_interval) == 0 {
            self.apply_queued(&frame);
            if let Some(p) = &self.pending {
                self.emit(
                    &frame,
                    EventKind::LlmSkippedBusy,
                    EventPayload::Busy {
                        pending_call_id: p.call_id,
                    },
                );
            } else {
                self.dispatch(&effective);
                self.resolve(&frame);
            }
        }

        if self.cfg.rule_fallback && fresh && (!self.verdict_seen || self.last_call_failed) {
            if let Ok(v) = classify_frame(&effective, self.cfg.area_threshold) {
                if let Some(t) = v.triggers.first() {
                    let d = &effective.detections[t.index];
                    let text = format!("{} in {} area", d.class_name, t.region.as_str().to_lowercase());
                    self.emit(&frame, EventKind::AlertEmitted, EventPayload::Text(format!("rule: {text}")));
                }
            }
        }

        self.scores.push(FrameScore {
            frame_id: frame.frame_id,
            timestamp_ms: frame.timestamp_ms,
            score: self.hold,
            rule_label: verdict.is_anomaly,
        });
    }

    fn poll_control(&mut self) {
        let Some(rx) = &self.control else { return };
        loop {
            match rx.try_recv() {
                Ok(ControlCommand::Status(reply)) => {
                    let _ = reply.send(self.status());
                }
                Ok(ControlCommand::Stop) => self.stopped = true,
                Ok(cmd) => self.queued.push(cmd),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    self.control = None;
                    break;
                }
            }
        }
    }

    fn status(&self) -> StatusSnapshot {
        StatusSnapshot {
            frame_id: self.current_frame,
            scene: self.cfg.scene.scene_name.clone(),
            class_count: self.cfg.scene.classes().len(),
            targets: self.cfg.scene.targets().to_vec(),
            sensitivity: self.cfg.sensitivity,
            mode: self.cfg.mode,
            score: self.hold,
            pending_changes: self.queued.len(),
        }
    }

    fn apply_queued(&mut self, frame: &FrameRecord) {
        let timeout = self.cfg.llm_timeout_ms;
        for cmd in std::mem::take(&mut self.queued) {
            let text = match cmd {
                ControlCommand::Scene(name) => match switch_scene(&name, &self.control_gateway, &self.cfg.scene, timeout) {
                    Ok(set) => {
                        let text = format!("scene -> {} ({} classes)", set.scene_name, set.classes().len());
                        self.cfg.scene = set;
                        text
                    }
                    Err(e) => format!("scene switch to `{name}` failed, keeping {}: {e}", self.cfg.scene.scene_name),
                },
                ControlCommand::Find(command) => match add_interest(&command, &self.control_gateway, &mut self.cfg.scene, timeout) {
                    Ok(object) => format!("interest target + {object}"),
                    Err(e) => format!("interest command `{command}` failed: {e}"),
                },
                ControlCommand::Sensitivity(level) => {
                    self.cfg.sensitivity = level;
                    format!("sensitivity -> {level}")
                }
                ControlCommand::Mode(mode) => {
                    self.cfg.mode = mode;
                    format!("mode -> {mode}")
                }
                ControlCommand::Status(reply) => {
                    let _ = reply.send(self.status());
                    continue;
                }
                ControlCommand::Stop => {
                    self.stopped = true;
                    continue;
                }
            };
            self.emit(frame, EventKind::ConfigChanged, EventPayload::Text(text));
        }
    }

    fn dispatch(&mut self, effective: &Arc<FrameRecord>) {
        let bundle = render_scene_prompt_with(
            self.last_sampled.as_deref(),
            effective,
            self.cfg.sensitivity,
            self.cfg.toggles,
            self.cfg.mode,
            &self.cfg.scene,
            self.cfg.prompt,
        );
        let mask = self.cfg.scene.mask();
        let visible = FrameRecord {
            frame_id: effective.frame_id,
            timestamp_ms: effective.timestamp_ms,
            source_tag: effective.source_tag.clone(),
            detections: effective
                .detections
                .iter()
                .filter(|d| !mask.contains(&d.class_name))
                .cloned()
                .collect(),
        };
        let call_id = self.gateway.next_call_id();
        self.emit(
            effective,
            EventKind::LlmDispatched,
            EventPayload::Dispatch {
                call_id,
                fingerprint: bundle.config_fingerprint.clone(),
            },
        );
        let mode = bundle.mode;
        let request = crate::gateway::ChatRequest {
            call_id,
            kind: RequestKind::Scene { bundle, frame: visible },
        };
        let timeout = self.cfg.llm_timeout_ms;
        let flight = if self.gateway.backend().is_deterministic() {
            let outcome = self.gateway.complete_request(&request, timeout);
            let ready_at_ms = match &outcome {
                Ok((_, usage)) if usage.latency_ms > timeout => effective.timestamp_ms + timeout,
                Ok((_, usage)) => effective.timestamp_ms + usage.latency_ms,
                Err(GatewayError::Timeout { .. }) => effective.timestamp_ms + timeout,
                Err(_) => effective.timestamp_ms,
            };
            let outcome = match outcome {
                Ok((_, usage)) if usage.latency_ms > timeout => Err(GatewayError::Timeout {
                    call_id,
                    timeout_ms: timeout,
                }),
                other => other,
            };
            InFlight::Simulated { ready_at_ms, outcome }
        } else {
            let (tx, rx) = mpsc::channel();
            let gateway = self.gateway.clone();
            thread::spawn(move || {
                let _ = tx.send(gateway.complete_request(&request, timeout));
            });
            InFlight::Threaded { rx }
        };
        self.pending = Some(Pending { call_id, mode, flight });
        self.last_sampled = Some(effective.clone());
    }

    /// Applies the in-flight call if it has completed by `frame`.
    fn resolve(&mut self, frame: &FrameRecord) {
        let Some(pending) = self.pending.take() else { return };
        let outcome = match pending.flight {
            InFlight::Simulated { ready_at_ms, outcome } => {
                if frame.timestamp_ms < ready_at_ms {
                    self.pending = Some(Pending {
                        flight: InFlight::Simulated { ready_at_ms, outcome },
                        ..pending
                    });
                    return;
                }
                outcome
            }
            InFlight::Threaded { rx } => match rx.try_recv() {
                Ok(outcome) => outcome,
                Err(TryRecvError::Empty) => {
                    self.pending = Some(Pending {
                        flight: InFlight::Threaded { rx },
                        ..pending
                    });
                    return;
                }
                Err(TryRecvError::Disconnected) => Err(GatewayError::Transport {
                    call_id: pending.call_id,
                    attempts: 0,
                    message: "worker exited without a result".into(),
                }),
            },
        };
        let call_id = pending.call_id;
        let parsed = outcome
            .map_err(|e| e.to_string())
            .and_then(|(text, _)| parse_response(&text, pending.mode).map_err(|e| format!("call {call_id}: {e}")));
        match parsed {
            Ok(verdict) => {
                let score = verdict.frame_score();
                self.hold = score;
                self.verdict_seen = true;
                self.last_call_failed = false;
                let alert = verdict.alert_text().map(str::to_string);
                self.emit(frame, EventKind::LlmApplied, EventPayload::Verdict { call_id, score, verdict });
                if let Some(text) = alert {
                    self.emit(frame, EventKind::AlertEmitted, EventPayload::Text(text));
                }
            }
            Err(message) => {
                self.last_call_failed = true;
                self.emit(frame, EventKind::LlmFailed, EventPayload::Failure { call_id, message });
            }
        }
    }
}

/// Region label helper for callers formatting detections outside prompts.
pub fn region_name(cx: f64, cy: f64) -> &'static str {
    region_of_point(cx, cy).as_str()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatBackend, ChatReply, ChatRequest, MockBackend};
    use crate::spatial::Detection;

    fn blank(n: u64) -> Vec<Result<FrameRecord, FeedError>> {
        (0..n).map(|i| Ok(FrameRecord::new(i, i * 33, "t"))).collect()
    }

    fn mock() -> BackendRef {
        Arc::new(MockBackend::default())
    }

    #[test]
    fn cadence_counts() {
        let r = run_stream(blank(90), PipelineConfig::default(), mock(), None).unwrap();
        assert!(r.complete);
        assert_eq!(r.count(EventKind::DetectionRan), 18);
        assert_eq!(r.count(EventKind::DetectionCompensated), 72);
        assert_eq!(r.count(EventKind::LlmDispatched), 3);
        assert_eq!(r.scores.len(), 90);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = PipelineConfig {
            llm_interval: 32,
            ..PipelineConfig::default()
        };
        assert!(matches!(run_stream(blank(1), cfg, mock(), None), Err(PipelineError::Config(_))));
    }

    #[test]
    fn ground_object_held_for_a_window() {
        let mut frames = blank(90);
        let ground = Detection::new("hole", 0.8, 0.5, 0.8, 0.1, 0.1).unwrap();
        frames[30] = Ok(FrameRecord::new(30, 990, "t").with_detections(vec![ground]));
        let r = run_stream(frames, PipelineConfig::default(), mock(), None).unwrap();
        for s in &r.scores[..30] {
            assert_eq!(s.score, 0.0);
        }
        for s in &r.scores[30..60] {
            assert!(s.score >= 0.6, "frame {}", s.frame_id);
        }
        assert_eq!(r.scores[60].score, 0.0);
        // Frames 31..34 carry the frame-30 detections forward.
        let ev: Vec<_> = r.events.iter().filter(|e| e.frame_id == 31).collect();
        assert_eq!(ev[0].kind, EventKind::DetectionCompensated);
        assert_eq!(ev[0].payload, EventPayload::Detections { count: 1, rule_anomaly: false });
    }

    #[test]
    fn slow_calls_skip_ticks() {
        let r = run_stream(blank(90), PipelineConfig::default(), Arc::new(MockBackend::with_latency(1500)), None).unwrap();
        assert_eq!(r.count(EventKind::LlmDispatched), 2);
        assert_eq!(r.count(EventKind::LlmSkippedBusy), 1);
        let skipped = r.events.iter().find(|e| e.kind == EventKind::LlmSkippedBusy).unwrap();
        assert_eq!(skipped.frame_id, 30);
    }

    #[test]
    fn timeout_keeps_hold_and_skips() {
        let cfg = PipelineConfig {
            llm_timeout_ms: 1200,
            ..PipelineConfig::default()
        };
        let r = run_stream(blank(90), cfg, Arc::new(MockBackend::with_latency(5000)), None).unwrap();
        assert_eq!(r.count(EventKind::LlmSkippedBusy), 1);
        assert_eq!(r.count(EventKind::LlmDispatched), 2);
        assert_eq!(r.count(EventKind::LlmFailed), 1);
        assert!(r.scores.iter().all(|s| s.score == 0.0));
    }

    struct Broken;

    impl ChatBackend for Broken {
        fn chat(&self, request: &ChatRequest, _: Duration) -> Result<ChatReply, GatewayError> {
            Err(GatewayError::Transport {
                call_id: request.call_id,
                attempts: 3,
                message: "connection refused".into(),
            })
        }

        fn label(&self) -> String {
            "broken".into()
        }
    }

    #[test]
    fn rule_fallback_survives_gateway_failure() {
        let mut frames = blank(30);
        let ground = Detection::new("hole", 0.8, 0.5, 0.8, 0.1, 0.1).unwrap();
        frames[10] = Ok(FrameRecord::new(10, 330, "t").with_detections(vec![ground]));
        let cfg = PipelineConfig {
            rule_fallback: true,
            ..PipelineConfig::default()
        };
        let r = run_stream(frames, cfg, Arc::new(Broken), None).unwrap();
        let alerts: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::AlertEmitted).collect();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].frame_id, 10);
        assert!(r.scores[10].rule_label);
    }

    #[test]
    fn source_error_marks_incomplete() {
        let mut frames = blank(10);
        frames.push(Err(FeedError::Malformed {
            line: 11,
            message: "bad".into(),
        }));
        frames.extend(blank(3));
        let r = run_stream(frames, PipelineConfig::default(), mock(), None).unwrap();
        assert!(!r.complete);
        assert_eq!(r.scores.len(), 10);
        assert!(r.error.unwrap().contains("line 11"));
    }

    #[test]
    fn control_commands_apply_at_tick() {
        let (tx, rx) = mpsc::channel();
        tx.send(ControlCommand::Sensitivity(SensitivityLevel::High)).unwrap();
        tx.send(ControlCommand::Scene("park".into())).unwrap();
        let gateway = Arc::new(Gateway::new(mock()));
        let r = Pipeline::new(PipelineConfig::default(), gateway).unwrap().with_control(rx).run(blank(31));
        let changes: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::ConfigChanged).collect();
        assert_eq!(changes.len(), 2);
        assert!(changes.iter().all(|e| e.frame_id == 0));
        assert_eq!(changes[1].payload, EventPayload::Text("scene -> park (10 classes)".into()));
    }

    #[test]
    fn modeled_fps_from_profile() {
        let p = LatencyProfile::new("v100", 62.0, None).unwrap();
        let r = run_stream(blank(5), PipelineConfig::default(), mock(), Some(p)).unwrap();
        assert!((r.modeled_fps.unwrap() - 76.92).abs() < 0.01);
    }
}
