//! Newline-delimited detection feed.
//!
//! One JSON object per line:
//! `{"frame_id": 0, "timestamp_ms": 0, "source": "clip", "objects": [{"class": "car", "conf": 0.9, "cx": 0.5, "cy": 0.5, "w": 0.1, "h": 0.1}]}`

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdout, Command, Stdio};

use thiserror::Error;

use crate::spatial::{FrameRecord, SpatialError};

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}` = {value} is outside [0, 1]")]
    OutOfRange { line: usize, field: String, value: f64 },
    #[error("line {line}: frame_id {frame_id} does not increase (previous {previous})")]
    NonMonotoneFrame { line: usize, frame_id: u64, previous: u64 },
    #[error("line {line}: timestamp_ms {timestamp_ms} decreases (previous {previous})")]
    NonMonotoneTime { line: usize, timestamp_ms: u64, previous: u64 },
    #[error("feed I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Validated frame reader over any buffered input.
pub struct FeedReader<R> {
    input: R,
    line: usize,
    last: Option<(u64, u64)>,
    buf: String,
    done: bool,
    _child: Option<Child>,
}

impl<R: BufRead> FeedReader<R> {
    pub fn new(input: R) -> Self {
        Self {
            input,
            line: 0,
            last: None,
            buf: String::new(),
            done: false,
            _child: None,
        }
    }

    fn parse_line(&mut self, text: &str) -> Result<FrameRecord, FeedError> {
        let line = self.line;
        let frame: FrameRecord = serde_json::from_str(text).map_err(|e| FeedError::Malformed {
            line,
            message: e.to_string(),
        })?;
        frame.validate().map_err(|e| match e {
            SpatialError::InvalidDetection { index, source } => match *source {
                SpatialError::OutOfRange { field, value } => FeedError::OutOfRange {
                    line,
                    field: format!("objects[{index}].{field}"),
                    value,
                },
                other => FeedError::Malformed {
                    line,
                    message: other.to_string(),
                },
            },
            other => FeedError::Malformed {
                line,
                message: other.to_string(),
            },
        })?;
        if let Some((prev_id, prev_ts)) = self.last {
            if frame.frame_id <= prev_id {
                return Err(FeedError::NonMonotoneFrame {
                    line,
                    frame_id: frame.frame_id,
                    previous: prev_id,
                });
            }
            if frame.timestamp_ms < prev_ts {
                return Err(FeedError::NonMonotoneTime {
                    line,
                    timestamp_ms: frame.timestamp_ms,
                    previous: prev_ts,
                });
            }
        }
        self.last = Some((frame.frame_id, frame.timestamp_ms));
        Ok(frame)
    }
}

impl<R: BufRead> Iterator for FeedReader<R> {
    type Item = Result<FrameRecord, FeedError>;

    /// Yields frames until the input ends or the first error, which ends the feed.
    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            self.line += 1;
            match self.input.read_line(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    return None;
                }
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
            let text = std::mem::take(&mut self.buf);
            let trimmed = text.trim();
            if trimmed.is_empty() {
                self.buf = text;
                continue;
            }
            let result = self.parse_line(trimmed);
            self.buf = text;
            if result.is_err() {
                self.done = true;
            }
            return Some(result);
        }
    }
}

/// Opens a feed file.
pub fn ingest_feed(path: &Path) -> Result<FeedReader<BufReader<File>>, FeedError> {
    Ok(FeedReader::new(BufReader::new(File::open(path)?)))
}

/// Runs a detector process and reads its standard output as a feed.
pub fn ingest_command(program: &str, args: &[String]) -> Result<FeedReader<BufReader<ChildStdout>>, FeedError> {
    let mut child = Command::new(program)
        .args(args)
        .stdout(Stdio::piped())
        .stdin(Stdio::null())
        .spawn()?;
    let stdout = child.stdout.take().expect("stdout piped");
    let mut reader = FeedReader::new(BufReader::new(stdout));
    reader._child = Some(child);
    Ok(reader)
}

/// Serializes frames in the feed wire format.
pub fn write_feed<W: Write>(mut out: W, frames: &[FrameRecord]) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_feed(path: &Path) -> Result<Vec<FrameRecord>, FeedError> {
    ingest_feed(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Vec<Result<FrameRecord, FeedError>> {
        FeedReader::new(text.as_bytes()).collect()
    }

    #[test]
    fn two_valid_lines() {
        let text = r#"{"frame_id": 0, "timestamp_ms": 0, "source": "a", "objects": []}
{"frame_id": 1, "timestamp_ms": 33, "source": "a", "objects": [{"class": "car", "conf": 0.9, "cx": 0.1, "cy": 0.3, "w": 0.4, "h": 0.4}]}
"#;
        let frames: Vec<FrameRecord> = read(text).into_iter().collect::<Result<_, _>>().unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].detections[0].class_name, "car");
        assert_eq!(frames[1].source_tag, "a");
    }

    #[test]
    fn range_error_names_line_and_field() {
        let text = r#"{"frame_id": 0, "timestamp_ms": 0, "source": "a", "objects": []}

{"frame_id": 1, "timestamp_ms": 33, "source": "a", "objects": [{"class": "car", "conf": 0.9, "cx": 1.5, "cy": 0.3, "w": 0.4, "h": 0.4}]}
"#;
        let out = read(text);
        assert_eq!(out.len(), 2);
        let err = out[1].as_ref().unwrap_err();
        assert!(matches!(err, FeedError::OutOfRange { line: 3, field, .. } if field == "objects[0].cx"), "{err}");
    }

    #[test]
    fn ordering_and_syntax_errors() {
        let text = "{\"frame_id\": 5, \"timestamp_ms\": 0, \"source\": \"a\", \"objects\": []}\n{\"frame_id\": 5, \"timestamp_ms\": 1, \"source\": \"a\", \"objects\": []}\n";
        let out = read(text);
        assert!(matches!(out[1], Err(FeedError::NonMonotoneFrame { line: 2, frame_id: 5, .. })));
        let out = read("{\"frame_id\": 1, \"timestamp_ms\": 9, \"source\": \"a\", \"objects\": []}\n{\"frame_id\": 2, \"timestamp_ms\": 8, \"source\": \"a\", \"objects\": []}\n");
        assert!(matches!(out[1], Err(FeedError::NonMonotoneTime { line: 2, .. })));
        let out = read("not json\n{}\n");
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0], Err(FeedError::Malformed { line: 1, .. })));
    }

    #[test]
    fn child_process_feed() {
        let reader = ingest_command(
            "sh",
            &[
                "-c".into(),
                r#"echo '{"frame_id": 0, "timestamp_ms": 0, "source": "cam", "objects": []}'"#.into(),
            ],
        )
        .unwrap();
        let frames: Vec<_> = reader.collect::<Result<_, _>>().unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].source_tag, "cam");
    }
}
