use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::UsageRecord;
use crate::config::KeyValues;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("usage log is empty")]
    EmptyUsage,
    #[error("usage log mixes output modes ({0} and {1})")]
    MixedModes(String, String),
    #[error("price table field `{0}` must be finite and non-negative")]
    InvalidPrice(&'static str),
    #[error("usage log line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token prices and daily call volume.
///
/// The defaults are $0.0005 / $0.0015 per 1k prompt / completion tokens at
/// one call per second for two hours (7200 calls), which reproduces the
/// voice-only and annotation daily charges of 2.44 and 2.58 USD for 573
/// prompt tokens and 35 / 48 completion tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_price_per_1k: f64,
    pub completion_price_per_1k: f64,
    pub calls_per_day: u64,
    pub label: String,
}

impl Default for PriceTable {
    fn default() -> Self {
        Self {
            prompt_price_per_1k: 0.0005,
            completion_price_per_1k: 0.0015,
            calls_per_day: 7200,
            label: "gpt-3.5-turbo, 1 call/s for 2 h/day".to_string(),
        }
    }
}

impl PriceTable {
    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [
            ("prompt_price_per_1k", self.prompt_price_per_1k),
            ("completion_price_per_1k", self.completion_price_per_1k),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CostError::InvalidPrice(name));
            }
        }
        Ok(())
    }

    /// Reads `key = value` lines; missing keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, CostError> {
        let mut t = Self::default();
        if let Some(v) = kv.get_parsed::<f64>("prompt_price_per_1k")? {
            t.prompt_price_per_1k = v;
        }
        if let Some(v) = kv.get_parsed::<f64>("completion_price_per_1k")? {
            t.completion_price_per_1k = v;
        }
        if let Some(v) = kv.get_parsed::<u64>("calls_per_day")? {
            t.calls_per_day = v;
        }
        if let Some(v) = kv.get("label") {
            t.label = v.to_string();
        }
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub per_call: f64,
    pub per_day: f64,
}

/// Mean per-call cost over `usage` and its daily total.
pub fn estimate_cost(usage: &[UsageRecord], prices: &PriceTable) -> Result<CostEstimate, CostError> {
    prices.validate()?;
    let first = usage.first().ok_or(CostError::EmptyUsage)?;
    if let Some(other) = usage.iter().find(|u| u.mode != first.mode) {
        return Err(CostError::MixedModes(first.mode.to_string(), other.mode.to_string()));
    }
    let n = usage.len() as f64;
    let mean_prompt = usage.iter().map(|u| u.prompt_tokens as f64).sum::<f64>() / n;
    let mean_completion = usage.iter().map(|u| u.completion_tokens as f64).sum::<f64>() / n;
    let per_call = mean_prompt * prices.prompt_price_per_1k / 1000.0 + mean_completion * prices.completion_price_per_1k / 1000.0;
    Ok(CostEstimate {
        per_call,
        per_day: per_call * prices.calls_per_day as f64,
    })
}

/// Writes one JSON record per line.
pub fn write_usage_log<W: Write>(mut out: W, usage: &[UsageRecord]) -> std::io::Result<()> {
    for u in usage {
        serde_json::to_writer(&mut out, u)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_usage_log(path: &Path) -> Result<Vec<UsageRecord>, CostError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UsageRecord = serde_json::from_str(&line).map_err(|e| CostError::BadRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.total_tokens != rec.prompt_tokens + rec.completion_tokens {
            return Err(CostError::BadRecord {
                line: i + 1,
                message: "total_tokens != prompt_tokens + completion_tokens".to_string(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::OutputMode;

    fn usage(mode: OutputMode, prompt: u64, completion: u64) -> UsageRecord {
        UsageRecord {
            call_id: 1,
            mode,
            latency_ms: 0,
            prompt_tokens: prompt,
            completion_tokens: completion,
            total_tokens: prompt + completion,
        }
    }

    #[test]
    fn daily_charges() {
        let p = PriceTable::default();
        let voice = estimate_cost(&[usage(OutputMode::VoiceOnly, 573, 35)], &p).unwrap();
        assert!((voice.per_call - 0.000339).abs() < 1e-12);
        assert!((voice.per_day - 2.4408).abs() < 1e-9);
        let ann = estimate_cost(&[usage(OutputMode::Annotation, 573, 48)], &p).unwrap();
        assert!((ann.per_day - 2.5812).abs() < 1e-9);
        let free = PriceTable {
            prompt_price_per_1k: 0.0,
            completion_price_per_1k: 0.0,
            ..p
        };
        assert_eq!(estimate_cost(&[usage(OutputMode::VoiceOnly, 573, 35)], &free).unwrap().per_day, 0.0);
    }

    #[test]
    fn rejects_empty_and_mixed() {
        let p = PriceTable::default();
        assert!(matches!(estimate_cost(&[], &p), Err(CostError::EmptyUsage)));
        let mixed = [usage(OutputMode::VoiceOnly, 1, 1), usage(OutputMode::Full, 1, 1)];
        assert!(matches!(estimate_cost(&mixed, &p), Err(CostError::MixedModes(..))));
        let neg = PriceTable {
            prompt_price_per_1k: -1.0,
            ..p
        };
        assert!(estimate_cost(&[usage(OutputMode::VoiceOnly, 1, 1)], &neg).is_err());
    }

    #[test]
    fn uses_means() {
        let p = PriceTable::default();
        let two = [usage(OutputMode::VoiceOnly, 500, 30), usage(OutputMode::VoiceOnly, 646, 40)];
        let one = [usage(OutputMode::VoiceOnly, 573, 35)];
        let a = estimate_cost(&two, &p).unwrap().per_day;
        let b = estimate_cost(&one, &p).unwrap().per_day;
        assert!((a - b).abs() < 1e-12);
    }
}
