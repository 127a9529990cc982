//! Chat-completion dispatch, response parsing, and usage accounting.

mod cost;
mod live;
mod mock;
mod verdict;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{OutputMode, PromptBundle};
use crate::spatial::FrameRecord;

pub use cost::{estimate_cost, read_usage_log, write_usage_log, CostError, CostEstimate, PriceTable};
pub use live::{LiveBackend, LiveConfig, API_KEY_ENV};
pub use mock::{mock_score, mock_score_with, MockBackend, MOCK_PARK_CLASSES};
pub use verdict::{extract_json_object, parse_response, DangerIndex, LlmVerdict, ParseError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("call {call_id}: timed out after {timeout_ms} ms")]
    Timeout { call_id: u64, timeout_ms: u64 },
    #[error("call {call_id}: transport failure after {attempts} attempt(s): {message}")]
    Transport { call_id: u64, attempts: u32, message: String },
    #[error("call {call_id}: authentication rejected (HTTP {status})")]
    Auth { call_id: u64, status: u16 },
    #[error("call {call_id}: request rejected (HTTP {status}): {message}")]
    Rejected { call_id: u64, status: u16, message: String },
    #[error("call {call_id}: malformed completion payload: {message}")]
    Protocol { call_id: u64, message: String },
}

impl GatewayError {
    pub fn call_id(&self) -> u64 {
        match self {
            Self::Timeout { call_id, .. }
            | Self::Transport { call_id, .. }
            | Self::Auth { call_id, .. }
            | Self::Rejected { call_id, .. }
            | Self::Protocol { call_id, .. } => *call_id,
        }
    }
}

/// What a chat call is for. The live backend only reads the prompt text;
/// the mock uses the structured context to produce a consistent reply.
#[derive(Debug, Clone)]
pub enum RequestKind {
    Scene { bundle: PromptBundle, frame: FrameRecord },
    ClassSwitch { prompt: String, scene: String },
    Interest { prompt: String, command: String },
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub call_id: u64,
    pub kind: RequestKind,
}

impl ChatRequest {
    pub fn system_text(&self) -> &str {
        match &self.kind {
            RequestKind::Scene { bundle, .. } => &bundle.system_text,
            _ => "",
        }
    }

    pub fn user_text(&self) -> &str {
        match &self.kind {
            RequestKind::Scene { bundle, .. } => &bundle.user_text,
            RequestKind::ClassSwitch { prompt, .. } | RequestKind::Interest { prompt, .. } => prompt,
        }
    }

    pub fn mode(&self) -> Option<OutputMode> {
        match &self.kind {
            RequestKind::Scene { bundle, .. } => Some(bundle.mode),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    /// Token counts reported by the backend, when it reports them.
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    /// Latency the backend models instead of spending (mock only).
    pub simulated_latency_ms: Option<u64>,
}

pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest, timeout: Duration) -> Result<ChatReply, GatewayError>;

    fn label(&self) -> String;

    /// True when replies are a pure function of the request.
    fn is_deterministic(&self) -> bool {
        false
    }
}

pub type BackendRef = Arc<dyn ChatBackend>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub call_id: u64,
    pub mode: OutputMode,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// Four characters per token, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Routes requests to a backend, numbering calls and recording usage.
pub struct Gateway {
    backend: BackendRef,
    next_call: AtomicU64,
    usage: Mutex<Vec<UsageRecord>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend.label()).finish()
    }
}

impl Gateway {
    pub fn new(backend: BackendRef) -> Self {
        Self {
            backend,
            next_call: AtomicU64::new(1),
            usage: Mutex::new(Vec::new()),
        }
    }

    pub fn backend(&self) -> &BackendRef {
        &self.backend
    }

    pub fn next_call_id(&self) -> u64 {
        self.next_call.fetch_add(1, Ordering::Relaxed)
    }

    /// Sends one request and returns the raw reply with its usage record.
    pub fn complete(&self, kind: RequestKind, timeout_ms: u64) -> Result<(String, UsageRecord), GatewayError> {
        let request = ChatRequest {
            call_id: self.next_call_id(),
            kind,
        };
        self.complete_request(&request, timeout_ms)
    }

    pub fn complete_request(&self, request: &ChatRequest, timeout_ms: u64) -> Result<(String, UsageRecord), GatewayError> {
        let started = Instant::now();
        let reply = self.backend.chat(request, Duration::from_millis(timeout_ms))?;
        let latency_ms = reply
            .simulated_latency_ms
            .unwrap_or_else(|| started.elapsed().as_millis() as u64);
        let prompt_tokens = reply.prompt_tokens.unwrap_or_else(|| {
            estimate_tokens(request.system_text()) + estimate_tokens(request.user_text())
        });
        let completion_tokens = reply.completion_tokens.unwrap_or_else(|| estimate_tokens(&reply.text));
        let usage = UsageRecord {
            call_id: request.call_id,
            mode: request.mode().unwrap_or_default(),
            latency_ms,
            prompt_tokens,
            completion_tokens,
            total_tokens: prompt_tokens + completion_tokens,
        };
        self.usage.lock().expect("usage lock").push(usage.clone());
        Ok((reply.text, usage))
    }

    pub fn usage(&self) -> Vec<UsageRecord> {
        self.usage.lock().expect("usage lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_heuristic() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }

    #[test]
    fn gateway_numbers_calls_and_records_usage() {
        let gw = Gateway::new(Arc::new(MockBackend::default()));
        let (text, usage) = gw
            .complete(
                RequestKind::ClassSwitch {
                    prompt: "switch to park".into(),
                    scene: "park".into(),
                },
                1000,
            )
            .unwrap();
        assert_eq!(usage.call_id, 1);
        assert_eq!(usage.prompt_tokens, estimate_tokens("switch to park"));
        assert_eq!(usage.completion_tokens, estimate_tokens(&text));
        assert_eq!(usage.total_tokens, usage.prompt_tokens + usage.completion_tokens);
        let (_, second) = gw
            .complete(
                RequestKind::Interest {
                    prompt: "p".into(),
                    command: "find bench".into(),
                },
                1000,
            )
            .unwrap();
        assert_eq!(second.call_id, 2);
        assert_eq!(gw.usage().len(), 2);
    }
}
