//! Builds a pipeline configuration and backends from `key = value` settings.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::gateway::{BackendRef, LiveBackend, LiveConfig, MockBackend, API_KEY_ENV};
use crate::pipeline::PipelineConfig;
use crate::prompt::{AblationToggles, ActiveClassSet, ClassMask, OutputMode, PromptOptions, SensitivityLevel};

/// Every key a configuration file may contain.
pub const CONFIG_KEYS: &[&str] = &[
    "backend",
    "sensitivity",
    "mode",
    "toggles",
    "scene",
    "detect_interval",
    "llm_interval",
    "area_threshold",
    "llm_timeout_ms",
    "rule_fallback",
    "max_detections",
    "mock_latency_ms",
    "queue_capacity",
    "threshold",
    "endpoint",
    "model",
    "control_model",
    "api_key",
    "max_retries",
    "backoff_base_ms",
    "backoff_max_ms",
];

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> SetupError {
    SetupError::Invalid(e.to_string())
}

/// Pipeline settings plus the backends for scene calls and control calls.
pub struct RunSetup {
    pub cfg: PipelineConfig,
    pub backend: BackendRef,
    /// Used for scene switches and interest targets; differs from `backend`
    /// only when `control_model` is set.
    pub control_backend: BackendRef,
}

/// Built-in scene name, or a class-list file path.
pub fn resolve_scene(spec: &str) -> Result<ActiveClassSet, SetupError> {
    match ActiveClassSet::builtin(spec) {
        Ok(set) => Ok(set),
        Err(_) if Path::new(spec).is_file() => ActiveClassSet::load(Path::new(spec), ClassMask::annotation_default()).map_err(invalid),
        Err(e) => Err(invalid(e)),
    }
}

pub fn live_config(kv: &KeyValues) -> Result<LiveConfig, SetupError> {
    let mut c = LiveConfig::default();
    if let Some(v) = kv.get("endpoint") {
        c.endpoint = v.to_string();
    }
    if let Some(v) = kv.get("model") {
        c.model = v.to_string();
    }
    if let Some(v) = kv.get("api_key") {
        c.api_key = Some(v.to_string());
    }
    if let Some(v) = kv.get_parsed("max_retries")? {
        c.max_retries = v;
    }
    if let Some(v) = kv.get_parsed("backoff_base_ms")? {
        c.backoff_base_ms = v;
    }
    if let Some(v) = kv.get_parsed("backoff_max_ms")? {
        c.backoff_max_ms = v;
    }
    Ok(c)
}

impl RunSetup {
    /// Missing keys keep their defaults; unknown keys are rejected.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, SetupError> {
        kv.check_keys(CONFIG_KEYS)?;
        let mut cfg = PipelineConfig::default();
        if let Some(v) = kv.get("sensitivity") {
            cfg.sensitivity = SensitivityLevel::from_str(v).map_err(invalid)?;
        }
        if let Some(v) = kv.get("mode") {
            cfg.mode = OutputMode::from_str(v).map_err(invalid)?;
        }
        if let Some(v) = kv.get("toggles") {
            cfg.toggles = AblationToggles::parse_label(v).map_err(invalid)?;
        }
        if let Some(v) = kv.get("scene") {
            cfg.scene = resolve_scene(v)?;
        }
        if let Some(v) = kv.get_parsed("detect_interval")? {
            cfg.detect_interval = v;
        }
        if let Some(v) = kv.get_parsed("llm_interval")? {
            cfg.llm_interval = v;
        }
        if let Some(v) = kv.get_parsed("area_threshold")? {
            cfg.area_threshold = v;
        }
        if let Some(v) = kv.get_parsed("llm_timeout_ms")? {
            cfg.llm_timeout_ms = v;
        }
        if let Some(v) = kv.get_parsed("max_detections")? {
            cfg.prompt = PromptOptions { max_detections: v };
        }
        if let Some(v) = kv.get_parsed("queue_capacity")? {
            cfg.queue_capacity = v;
        }
        if let Some(v) = kv.get_parsed("rule_fallback")? {
            cfg.rule_fallback = v;
        }
        cfg.validate().map_err(invalid)?;

        let (backend, control_backend): (BackendRef, BackendRef) = match kv.get("backend").unwrap_or("mock") {
            "mock" => {
                let latency = kv.get_parsed("mock_latency_ms")?.unwrap_or(0);
                let b: BackendRef = Arc::new(MockBackend::with_latency(latency));
                (b.clone(), b)
            }
            "live" => {
                let live = live_config(kv)?;
                if live.resolved_api_key().is_none() {
                    return Err(invalid(format!(
                        "live backend needs a credential in ${API_KEY_ENV} or `api_key` in the config file"
                    )));
                }
                let control = match kv.get("control_model") {
                    Some(model) => LiveConfig {
                        model: model.to_string(),
                        ..live.clone()
                    },
                    None => live.clone(),
                };
                (Arc::new(LiveBackend::new(live)), Arc::new(LiveBackend::new(control)))
            }
            other => return Err(invalid(format!("unknown backend `{other}` (expected mock or live)"))),
        };
        Ok(Self {
            cfg,
            backend,
            control_backend,
        })
    }
}
