//! HTTP chat-completion backend (OpenAI-compatible wire format).

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatReply, ChatRequest, GatewayError};

/// Environment variable that overrides the configured credential.
pub const API_KEY_ENV: &str = "NAVWATCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub temperature: f64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            api_key: None,
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_max_ms: 4_000,
            temperature: 0.0,
        }
    }
}

impl LiveConfig {
    /// Credential from the environment if set, else from configuration.
    pub fn resolved_api_key(&self) -> Option<String> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .or_else(|| self.api_key.clone())
    }

    fn backoff(&self, retry: u32) -> Duration {
        let ms = self
            .backoff_base_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.backoff_max_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone)]
pub struct LiveBackend {
    config: LiveConfig,
    api_key: Option<String>,
}

enum Attempt {
    Done(ChatReply),
    Retry(String),
    Fatal(GatewayError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Self {
        let api_key = config.resolved_api_key();
        Self { config, api_key }
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::with_capacity(2);
        if !request.system_text().is_empty() {
            messages.push(json!({ "role": "system", "content": request.system_text() }));
        }
        messages.push(json!({ "role": "user", "content": request.user_text() }));
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    fn attempt(&self, request: &ChatRequest, timeout: Duration) -> Attempt {
        let call_id = request.call_id;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match req.send(self.body(request).to_string()) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Fatal(GatewayError::Timeout {
                    call_id,
                    timeout_ms: timeout.as_millis() as u64,
                })
            }
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Fatal(GatewayError::Timeout {
                    call_id,
                    timeout_ms: timeout.as_millis() as u64,
                })
            }
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match status {
            200..=299 => match parse_completion(&body) {
                Ok(reply) => Attempt::Done(reply),
                Err(message) => Attempt::Fatal(GatewayError::Protocol { call_id, message }),
            },
            401 | 403 => Attempt::Fatal(GatewayError::Auth { call_id, status }),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(GatewayError::Rejected {
                call_id,
                status,
                message: body.chars().take(200).collect(),
            }),
        }
    }
}

fn parse_completion(body: &str) -> Result<ChatReply, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or("missing choices[0].message.content")?
        .to_string();
    Ok(ChatReply {
        text,
        prompt_tokens: v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        completion_tokens: v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
        simulated_latency_ms: None,
    })
}

impl ChatBackend for LiveBackend {
    /// Retries transport failures, 408, 429 and 5xx with exponential backoff.
    fn chat(&self, request: &ChatRequest, timeout: Duration) -> Result<ChatReply, GatewayError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request, timeout) {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(message) => {
                    if attempts > self.config.max_retries {
                        return Err(GatewayError::Transport {
                            call_id: request.call_id,
                            attempts,
                            message,
                        });
                    }
                    thread::sleep(self.config.backoff(attempts - 1));
                }
            }
        }
    }

    fn label(&self) -> String {
        format!("live({} @ {})", self.config.model, self.config.endpoint)
    }
}
