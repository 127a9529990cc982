//! Interactive control of a replaying stream.

use std::io::BufRead;
use std::str::FromStr;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::{CliError, FrameSource};
use crate::gateway::{BackendRef, Gateway};
use crate::pipeline::{ControlCommand, Pipeline, PipelineConfig, StatusSnapshot, StreamReport};
use crate::prompt::{OutputMode, SensitivityLevel};

const HELP: &str = "commands: scene <name> | find <object> | sensitivity low|medium|high | mode full|voice|annotation | status | quit";

enum Parsed {
    Send(ControlCommand, String),
    Status,
    Quit,
    Help(Option<String>),
}

fn parse_line(line: &str) -> Parsed {
    let line = line.trim();
    let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim();
    match (head, rest) {
        ("scene", name) if !name.is_empty() => Parsed::Send(ControlCommand::Scene(name.to_string()), format!("scene switch to `{name}`")),
        ("find", obj) if !obj.is_empty() => Parsed::Send(ControlCommand::Find(line.to_string()), format!("interest `{obj}`")),
        ("sensitivity", v) => match SensitivityLevel::from_str(v) {
            Ok(level) => Parsed::Send(ControlCommand::Sensitivity(level), format!("sensitivity {level}")),
            Err(e) => Parsed::Help(Some(e.to_string())),
        },
        ("mode", v) => match OutputMode::from_str(v) {
            Ok(mode) => Parsed::Send(ControlCommand::Mode(mode), format!("mode {mode}")),
            Err(e) => Parsed::Help(Some(e.to_string())),
        },
        ("status", "") => Parsed::Status,
        ("quit" | "exit", "") => Parsed::Quit,
        ("help" | "?", _) => Parsed::Help(None),
        _ => Parsed::Help(Some(format!("unknown command `{line}`"))),
    }
}

fn print_status(s: &StatusSnapshot) {
    println!(
        "frame {} | scene {} ({} classes) | targets [{}] | sensitivity {} | mode {} | score {:.2} | pending {}",
        s.frame_id.map_or("-".to_string(), |f| f.to_string()),
        s.scene,
        s.class_count,
        s.targets.join(", "),
        s.sensitivity,
        s.mode,
        s.score,
        s.pending_changes
    );
}

fn request_status(tx: &Sender<ControlCommand>) -> Option<StatusSnapshot> {
    let (reply_tx, reply_rx) = mpsc::channel();
    tx.send(ControlCommand::Status(reply_tx)).ok()?;
    reply_rx.recv_timeout(Duration::from_secs(5)).ok()
}

pub(super) fn run(cfg: PipelineConfig, backend: BackendRef, control_backend: BackendRef, frames: FrameSource, speed: f64) -> Result<StreamReport, CliError> {
    let (control_tx, control_rx) = mpsc::channel();
    let pipeline = Pipeline::new(cfg, Arc::new(Gateway::new(backend)))
        .map_err(super::invalid)?
        .with_control_gateway(Arc::new(Gateway::new(control_backend)))
        .with_control(control_rx)
        .with_alert_output(Box::new(std::io::stdout()))
        .paced(Some(speed));
    let stream = thread::spawn(move || pipeline.run(frames));

    let (line_tx, line_rx) = mpsc::channel::<String>();
    thread::spawn(move || {
        for line in std::io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            if line_tx.send(line).is_err() {
                break;
            }
        }
    });

    println!("{HELP}");
    loop {
        if stream.is_finished() {
            println!("stream finished");
            break;
        }
        match line_rx.recv_timeout(Duration::from_millis(50)) {
            Ok(line) if line.trim().is_empty() => {}
            Ok(line) => match parse_line(&line) {
                Parsed::Send(cmd, what) => {
                    if control_tx.send(cmd).is_err() {
                        println!("stream finished");
                        break;
                    }
                    println!("queued {what}; applies at the next model tick");
                }
                Parsed::Status => match request_status(&control_tx) {
                    Some(s) => print_status(&s),
                    None => println!("stream finished"),
                },
                Parsed::Quit => {
                    let _ = control_tx.send(ControlCommand::Stop);
                    break;
                }
                Parsed::Help(reason) => {
                    if let Some(r) = reason {
                        println!("{r}");
                    }
                    println!("{HELP}");
                }
            },
            Err(RecvTimeoutError::Timeout) => {}
            // Input closed: let the stream play out.
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    let report = stream.join().map_err(|_| CliError::runtime("pipeline", "stream thread panicked"))?;
    Ok(report)
}
