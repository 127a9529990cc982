//! Command-line entry point.
//!
//! Exit status: 0 on success, 1 when arguments or configuration are invalid,
//! 2 when a stage fails at runtime.

mod repl;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{write_atomic, KeyValues};
use crate::eval::{evaluate, export_heatmap, run_ablation, standard_grid, AblationConfig};
use crate::gateway::{estimate_cost, read_usage_log, write_usage_log, Gateway, PriceTable};
use crate::setup::{RunSetup, CONFIG_KEYS};
use crate::pipeline::{
    effective_fps, generate_corpus, ingest_command, ingest_feed, read_feed, FeedError, LatencyProfile, Pipeline,
    StreamReport, DEFAULT_OVERHEAD_MS,
};
use crate::prompt::{AblationToggles, SensitivityLevel};
use crate::spatial::{annotate_stream, FrameRecord};

#[derive(Debug, Parser)]
#[command(name = "navwatch", version, about = "Navigation hazard detection from object-detection feeds")]
struct Cli {
    /// `key = value` configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a feed through the pipeline, printing alerts.
    Replay {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Event log output (one JSON object per line).
        #[arg(long)]
        events: Option<PathBuf>,
        /// Per-frame score CSV output.
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Usage log output for `cost`.
        #[arg(long)]
        usage: Option<PathBuf>,
        /// Detector latency profile used to report modeled throughput.
        #[arg(long)]
        profile: Option<String>,
        /// Pace frames to their timestamps.
        #[arg(long)]
        realtime: bool,
    },
    /// Label every frame of a feed with the rule baseline.
    Annotate {
        #[arg(long)]
        feed: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        area_threshold: Option<f64>,
    },
    /// Score a feed and compare against the rule baseline.
    Evaluate {
        #[arg(long)]
        feed: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Metrics report (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        heatmap: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Decision threshold for the confusion matrix.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the prompt ablation grid.
    Ablate {
        #[arg(long)]
        feed: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// `standard`, or comma-separated `level:TOGGLES` entries such as `low:SLIM,low:S-IM`.
        #[arg(long, default_value = "standard")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Daily cost from a usage log.
    Cost {
        #[arg(long)]
        usage: PathBuf,
        /// `default` or a `key = value` price file.
        #[arg(long, default_value = "default")]
        prices: String,
    },
    /// Effective throughput with frame compensation.
    SimulateFps {
        /// Detector latency per invocation in milliseconds.
        #[arg(long, conflicts_with = "profile")]
        latency_ms: Option<f64>,
        /// Built-in profile name, or `all`.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, default_value_t = 5)]
        interval: u32,
        #[arg(long, default_value_t = DEFAULT_OVERHEAD_MS)]
        overhead: f64,
    },
    /// Write a seeded synthetic feed and its labels.
    GenCorpus {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        frames: usize,
        #[arg(long, default_value_t = 0.2)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
        /// Label CSV path; defaults to `<out>.labels.csv`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Replay a feed while accepting scene, find, sensitivity and mode commands.
    Repl {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        events: Option<PathBuf>,
        /// Replay speed relative to the frame timestamps.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Feed file.
    #[arg(long, required_unless_present = "detector_cmd", conflicts_with = "detector_cmd")]
    feed: Option<PathBuf>,
    /// Detector command whose standard output is the feed, run through `sh -c`.
    #[arg(long)]
    detector_cmd: Option<String>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// `mock` or `live`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    sensitivity: Option<String>,
    /// `full`, `voice` or `annotation`.
    #[arg(long)]
    mode: Option<String>,
    /// Prompt segments, e.g. `SLIM` or `S-IM`.
    #[arg(long)]
    toggles: Option<String>,
    /// Built-in scene name or a class-list file.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    detect_interval: Option<u32>,
    #[arg(long)]
    llm_interval: Option<u32>,
    #[arg(long)]
    area_threshold: Option<f64>,
    #[arg(long)]
    llm_timeout_ms: Option<u64>,
    /// Alert from the rule baseline when the model is unavailable.
    #[arg(long)]
    rule_fallback: bool,
    #[arg(long)]
    max_detections: Option<usize>,
    /// Simulated reply latency of the mock backend.
    #[arg(long)]
    mock_latency_ms: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; nothing was run.
    Validation(String),
    /// A stage failed while running.
    Runtime { stage: &'static str, message: String },
}

impl CliError {
    fn runtime(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self::Runtime {
            stage,
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Runtime { .. } => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "error: {m}"),
            Self::Runtime { stage, message } => write!(f, "error [{stage}]: {message}"),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

/// Parses `args` (program name first), runs the command, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first} (see --help)");
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<KeyValues, CliError> {
    let Some(path) = path else { return Ok(KeyValues::default()) };
    let kv = KeyValues::load(path).map_err(invalid)?;
    kv.check_keys(CONFIG_KEYS).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    Ok(kv)
}

/// Flag value if given, else the config file value, else `None`.
fn pick<T: FromStr>(flag: Option<T>, kv: &KeyValues, key: &str) -> Result<Option<T>, CliError> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => kv.get_parsed(key).map_err(invalid),
    }
}

/// Layers the pipeline flags over the config file.
fn build_setup(args: &PipelineArgs, kv: &KeyValues) -> Result<RunSetup, CliError> {
    let mut kv = kv.clone();
    let strings = [
        ("backend", &args.backend),
        ("sensitivity", &args.sensitivity),
        ("mode", &args.mode),
        ("toggles", &args.toggles),
        ("scene", &args.scene),
    ];
    for (key, value) in strings {
        if let Some(v) = value {
            kv.set(key, v.as_str());
        }
    }
    let numbers = [
        ("detect_interval", args.detect_interval.map(|v| v.to_string())),
        ("llm_interval", args.llm_interval.map(|v| v.to_string())),
        ("area_threshold", args.area_threshold.map(|v| v.to_string())),
        ("llm_timeout_ms", args.llm_timeout_ms.map(|v| v.to_string())),
        ("max_detections", args.max_detections.map(|v| v.to_string())),
        ("mock_latency_ms", args.mock_latency_ms.map(|v| v.to_string())),
    ];
    for (key, value) in numbers {
        if let Some(v) = value {
            kv.set(key, v);
        }
    }
    if args.rule_fallback {
        kv.set("rule_fallback", "true");
    }
    RunSetup::from_key_values(&kv).map_err(invalid)
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} `{}` does not exist", path.display())))
    }
}

fn load_frames(path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    read_feed(path).map_err(|e| CliError::runtime("ingest", e))
}

type FrameSource = Box<dyn Iterator<Item = Result<FrameRecord, FeedError>> + Send>;

fn open_source(source: &SourceArgs) -> Result<FrameSource, CliError> {
    match (&source.feed, &source.detector_cmd) {
        (Some(path), _) => {
            require_file(path, "feed")?;
            let reader = ingest_feed(path).map_err(|e| CliError::runtime("ingest", e))?;
            Ok(Box::new(reader))
        }
        (None, Some(cmd)) => {
            let reader = ingest_command("sh", &["-c".to_string(), cmd.clone()]).map_err(|e| CliError::runtime("ingest", e))?;
            Ok(Box::new(reader))
        }
        (None, None) => Err(invalid("either --feed or --detector-cmd is required")),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::runtime("output", format!("{}: {e}", path.display())))
}

fn events_bytes(report: &StreamReport) -> Vec<u8> {
    let mut buf = Vec::new();
    report.write_event_log(&mut buf).expect("writing to memory");
    buf
}

fn scores_csv(report: &StreamReport) -> String {
    let mut out = String::from("frame_id,timestamp_ms,score,rule_label\n");
    for s in &report.scores {
        let _ = writeln!(out, "{},{},{:.6},{}", s.frame_id, s.timestamp_ms, s.score, u8::from(s.rule_label));
    }
    out
}

fn labels_csv(labels: &[(u64, bool)]) -> String {
    let mut out = String::from("frame_id,label\n");
    for (id, l) in labels {
        let _ = writeln!(out, "{id},{}", u8::from(*l));
    }
    out
}

fn print_summary(report: &StreamReport) {
    use crate::pipeline::EventKind as K;
    println!(
        "frames {} | detection ran {} compensated {} | llm dispatched {} applied {} skipped {} failed {} | alerts {}",
        report.scores.len(),
        report.count(K::DetectionRan),
        report.count(K::DetectionCompensated),
        report.count(K::LlmDispatched),
        report.count(K::LlmApplied),
        report.count(K::LlmSkippedBusy),
        report.count(K::LlmFailed),
        report.count(K::AlertEmitted),
    );
    if let Some(fps) = report.modeled_fps {
        println!("modeled throughput {fps:.1} FPS");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let kv = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Replay {
            source,
            pipeline,
            events,
            scores,
            usage,
            profile,
            realtime,
        } => {
            let setup = build_setup(&pipeline, &kv)?;
            let profile = profile.map(|p| LatencyProfile::builtin(&p).map_err(invalid)).transpose()?;
            let frames = open_source(&source)?;
            let mut p = Pipeline::new(setup.cfg, Arc::new(Gateway::new(setup.backend)))
                .map_err(invalid)?
                .with_control_gateway(Arc::new(Gateway::new(setup.control_backend)))
                .with_alert_output(Box::new(std::io::stdout()))
                .realtime(realtime);
            if let Some(profile) = profile {
                p = p.with_profile(profile);
            }
            let report = p.run(frames);
            if let Some(path) = &events {
                write_output(path, &events_bytes(&report))?;
            }
            if let Some(path) = &scores {
                write_output(path, scores_csv(&report).as_bytes())?;
            }
            if let Some(path) = &usage {
                let mut buf = Vec::new();
                write_usage_log(&mut buf, &report.usage).expect("writing to memory");
                write_output(path, &buf)?;
            }
            print_summary(&report);
            match report.error {
                Some(e) => Err(CliError::runtime("ingest", e)),
                None => Ok(()),
            }
        }
        Command::Annotate { feed, out, area_threshold } => {
            require_file(&feed, "feed")?;
            let threshold = pick(area_threshold, &kv, "area_threshold")?.unwrap_or(crate::spatial::DEFAULT_AREA_THRESHOLD);
            crate::spatial::check_threshold(threshold).map_err(invalid)?;
            let frames = load_frames(&feed)?;
            let labels = annotate_stream(&frames, threshold).map_err(|e| CliError::runtime("spatial", e))?;
            write_output(&out, labels_csv(&labels).as_bytes())?;
            let positives = labels.iter().filter(|(_, l)| *l).count();
            println!("{} frames, {positives} anomalous", labels.len());
            Ok(())
        }
        Command::Evaluate {
            feed,
            pipeline,
            out,
            heatmap,
            events,
            threshold,
        } => {
            require_file(&feed, "feed")?;
            let threshold = pick(threshold, &kv, "threshold")?.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&threshold) {
                return Err(invalid(format!("threshold {threshold} is outside [0, 1]")));
            }
            let setup = build_setup(&pipeline, &kv)?;
            let label = setup.backend.label();
            let cfg = setup.cfg.clone();
            let frames = load_frames(&feed)?;
            let report = Pipeline::new(setup.cfg, Arc::new(Gateway::new(setup.backend)))
                .map_err(invalid)?
                .with_control_gateway(Arc::new(Gateway::new(setup.control_backend)))
                .run(frames.into_iter().map(Ok));
            if let Some(e) = &report.error {
                return Err(CliError::runtime("pipeline", e));
            }
            let scored = report.scored_frames();
            let metrics = evaluate(&scored, threshold).map_err(|e| CliError::runtime("evaluation", e))?;
            let doc = serde_json::json!({
                "backend": label,
                "sensitivity": cfg.sensitivity,
                "toggles": cfg.toggles.label(),
                "mode": cfg.mode,
                "scene": cfg.scene.scene_name,
                "metrics": metrics,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
            text.push('\n');
            write_output(&out, text.as_bytes())?;
            if let Some(path) = &heatmap {
                export_heatmap(&scored, path).map_err(|e| CliError::runtime("output", e))?;
            }
            if let Some(path) = &events {
                write_output(path, &events_bytes(&report))?;
            }
            let c = metrics.confusion;
            println!(
                "n {} positives {} | AUC {:.4} AP {:.4} | at {threshold}: tp {} fp {} tn {} fn {}",
                metrics.n, metrics.positives, metrics.auc, metrics.ap, c.tp, c.fp, c.tn, c.fn_
            );
            Ok(())
        }
        Command::Ablate { feed, pipeline, grid, out } => {
            require_file(&feed, "feed")?;
            let grid = parse_grid(&grid)?;
            let setup = build_setup(&pipeline, &kv)?;
            let frames = load_frames(&feed)?;
            let rows = run_ablation(&frames, &grid, setup.backend, &setup.cfg);
            let mut text = serde_json::to_string_pretty(&rows).expect("serializable");
            text.push('\n');
            write_output(&out, text.as_bytes())?;
            println!("{:<12} {:<8} {:>8} {:>8}", "sensitivity", "prompt", "AP", "AUC");
            let mut failed = 0;
            for r in &rows {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", v * 100.0));
                println!("{:<12} {:<8} {:>8} {:>8}", r.sensitivity.as_str(), r.toggles, fmt(r.ap), fmt(r.auc));
                if let Some(e) = &r.error {
                    failed += 1;
                    eprintln!("row {} {}: {e}", r.sensitivity.as_str(), r.toggles);
                }
            }
            if failed > 0 {
                return Err(CliError::runtime("ablation", format!("{failed} of {} rows failed", rows.len())));
            }
            Ok(())
        }
        Command::Cost { usage, prices } => {
            require_file(&usage, "usage log")?;
            let table = if prices == "default" {
                PriceTable::default()
            } else {
                let path = Path::new(&prices);
                require_file(path, "price file")?;
                let kv = KeyValues::load(path).map_err(invalid)?;
                PriceTable::from_key_values(&kv).map_err(invalid)?
            };
            let records = read_usage_log(&usage).map_err(|e| CliError::runtime("usage log", e))?;
            let est = estimate_cost(&records, &table).map_err(|e| CliError::runtime("cost", e))?;
            println!(
                "{} calls ({}) | {:.6} USD/call | {:.2} USD/day at {} calls/day",
                records.len(),
                records[0].mode,
                est.per_call,
                est.per_day,
                table.calls_per_day
            );
            Ok(())
        }
        Command::SimulateFps {
            latency_ms,
            profile,
            interval,
            overhead,
        } => {
            let profiles: Vec<LatencyProfile> = match (latency_ms, profile.as_deref()) {
                (Some(ms), None) => vec![LatencyProfile::new(format!("{ms} ms detector"), ms, None).map_err(invalid)?],
                (None, Some("all")) => LatencyProfile::builtin_names()
                    .map(|n| LatencyProfile::builtin(n).expect("built-in"))
                    .collect(),
                (None, Some(name)) => vec![LatencyProfile::builtin(name).map_err(invalid)?],
                _ => return Err(invalid("give --latency-ms or --profile")),
            };
            for p in &profiles {
                let fps = effective_fps(p, interval, overhead).map_err(invalid)?;
                if profiles.len() == 1 {
                    println!("{fps:.1}");
                } else {
                    println!("{:<50} {fps:>8.1}", p.label);
                }
            }
            Ok(())
        }
        Command::GenCorpus {
            seed,
            frames,
            rate,
            out,
            labels,
        } => {
            let corpus = generate_corpus(seed, frames, rate).map_err(invalid)?;
            let labels_path = labels.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".labels.csv");
                PathBuf::from(s)
            });
            let mut feed = Vec::new();
            corpus.write_feed(&mut feed).expect("writing to memory");
            let mut lab = Vec::new();
            corpus.write_labels(&mut lab).expect("writing to memory");
            write_output(&out, &feed)?;
            write_output(&labels_path, &lab)?;
            println!(
                "{} frames, {} anomalous -> {} (labels {})",
                corpus.frames.len(),
                corpus.anomaly_count(),
                out.display(),
                labels_path.display()
            );
            Ok(())
        }
        Command::Repl {
            source,
            pipeline,
            events,
            speed,
        } => {
            if !(speed.is_finite() && speed > 0.0) {
                return Err(invalid("--speed must be positive"));
            }
            let setup = build_setup(&pipeline, &kv)?;
            let frames = open_source(&source)?;
            let report = repl::run(setup.cfg, setup.backend, setup.control_backend, frames, speed)?;
            if let Some(path) = &events {
                write_output(path, &events_bytes(&report))?;
            }
            print_summary(&report);
            match report.error {
                Some(e) => Err(CliError::runtime("ingest", e)),
                None => Ok(()),
            }
        }
    }
}

fn parse_grid(spec: &str) -> Result<Vec<AblationConfig>, CliError> {
    if spec.trim() == "standard" {
        return Ok(standard_grid());
    }
    spec.split(',')
        .map(|entry| {
            let (level, toggles) = entry
                .trim()
                .split_once(':')
                .ok_or_else(|| invalid(format!("grid entry `{entry}` must look like `low:SLIM`")))?;
            Ok(AblationConfig {
                sensitivity: SensitivityLevel::from_str(level).map_err(invalid)?,
                toggles: AblationToggles::parse_label(toggles).map_err(invalid)?,
            })
        })
        .collect()
}
