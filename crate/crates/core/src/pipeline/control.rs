//! Scene switching and interest targets driven through the language model.

use serde_json::Value;
use thiserror::Error;

use crate::gateway::{extract_json_object, Gateway, GatewayError, RequestKind};
use crate::prompt::{render_class_switch_prompt, render_interest_prompt, ActiveClassSet, PromptError, SceneError};

const MAX_CLASS_CHARS: usize = 48;
const MAX_CLASS_WORDS: usize = 6;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("could not parse a class list from the reply")]
    UnparseableClassList,
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("reply has no `add` object name")]
    NoInterestTarget,
    #[error("interest target `{0}` is masked")]
    MaskedTarget(String),
}

fn clean_entry(raw: &str) -> Option<String> {
    let s = raw
        .trim()
        .trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_ascii_digit() || c == '.' || c == ')')
        .trim()
        .trim_matches(|c: char| c == '\'' || c == '"' || c == ',' || c == '[' || c == ']')
        .trim();
    let ok = !s.is_empty()
        && s.chars().count() <= MAX_CLASS_CHARS
        && s.split_whitespace().count() <= MAX_CLASS_WORDS
        && !s.contains(['{', '}', ':']);
    ok.then(|| s.to_string())
}

/// Extracts class names from a reply: a JSON string array, one class per
/// line, or a comma/semicolon separated list.
pub fn parse_class_reply(text: &str) -> Result<Vec<String>, ControlError> {
    if let (Some(open), Some(close)) = (text.find('['), text.rfind(']')) {
        if open < close {
            let slice = &text[open..=close];
            // Python-style lists use single quotes.
            let parsed = serde_json::from_str::<Vec<String>>(slice)
                .or_else(|_| serde_json::from_str::<Vec<String>>(&slice.replace('\'', "\"")));
            if let Ok(items) = parsed {
                let out: Vec<String> = items.iter().filter_map(|s| clean_entry(s)).collect();
                if !out.is_empty() {
                    return Ok(out);
                }
            }
        }
    }
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let pieces: Vec<&str> = if lines.len() <= 1 {
        text.split([',', ';']).collect()
    } else {
        lines
    };
    let out: Vec<String> = pieces.iter().filter_map(|p| clean_entry(p)).collect();
    if out.is_empty() {
        Err(ControlError::UnparseableClassList)
    } else {
        Ok(out)
    }
}

/// Asks the model for a class list for `command` and returns the new active
/// set. The caller keeps `current` when this fails.
pub fn switch_scene(command: &str, gateway: &Gateway, current: &ActiveClassSet, timeout_ms: u64) -> Result<ActiveClassSet, ControlError> {
    let prompt = render_class_switch_prompt(command)?;
    let (text, _) = gateway.complete(
        RequestKind::ClassSwitch {
            prompt,
            scene: command.trim().to_string(),
        },
        timeout_ms,
    )?;
    let classes = parse_class_reply(&text)?;
    Ok(ActiveClassSet::from_list(command, classes, current.mask().clone())?)
}

/// Extracts the requested object from `command` and adds it as an interest
/// target. Returns the object name.
pub fn add_interest(command: &str, gateway: &Gateway, current: &mut ActiveClassSet, timeout_ms: u64) -> Result<String, ControlError> {
    let prompt = render_interest_prompt(command)?;
    let (text, _) = gateway.complete(
        RequestKind::Interest {
            prompt,
            command: command.trim().to_string(),
        },
        timeout_ms,
    )?;
    let object = extract_json_object(&text)
        .and_then(|m| match m.get("add") {
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
            _ => None,
        })
        .ok_or(ControlError::NoInterestTarget)?;
    if current.add_target(&object) {
        Ok(object)
    } else {
        Err(ControlError::MaskedTarget(object))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::time::Duration;

    use super::*;
    use crate::gateway::{ChatBackend, ChatReply, ChatRequest, MockBackend, MOCK_PARK_CLASSES};
    use crate::prompt::DEFAULT_SCENE;

    struct Fixed(&'static str);

    impl ChatBackend for Fixed {
        fn chat(&self, _: &ChatRequest, _: Duration) -> Result<ChatReply, GatewayError> {
            Ok(ChatReply {
                text: self.0.to_string(),
                prompt_tokens: None,
                completion_tokens: None,
                simulated_latency_ms: Some(0),
            })
        }

        fn label(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn class_reply_shapes() {
        assert_eq!(parse_class_reply("bench\ntree\n- dog\n2. fountain").unwrap(), ["bench", "tree", "dog", "fountain"]);
        assert_eq!(parse_class_reply("Sure: ['bench', 'tree']").unwrap(), ["bench", "tree"]);
        assert_eq!(parse_class_reply(r#"["bench", "tree"]"#).unwrap(), ["bench", "tree"]);
        assert_eq!(parse_class_reply("bench, tree; dog").unwrap(), ["bench", "tree", "dog"]);
        assert!(parse_class_reply("").is_err());
        assert!(parse_class_reply("{\"error\": \"I cannot do that for you right now because reasons\"}").is_err());
    }

    #[test]
    fn mock_park_switch() {
        let gw = Gateway::new(Arc::new(MockBackend::default()));
        let current = ActiveClassSet::builtin(DEFAULT_SCENE).unwrap();
        let next = switch_scene("park", &gw, &current, 1000).unwrap();
        assert_eq!(next.scene_name, "park");
        assert_eq!(next.classes(), MOCK_PARK_CLASSES);
    }

    #[test]
    fn masked_classes_dropped() {
        let gw = Gateway::new(Arc::new(Fixed("bench\nhuman face\ntree")));
        let current = ActiveClassSet::builtin(DEFAULT_SCENE).unwrap();
        let next = switch_scene("plaza", &gw, &current, 1000).unwrap();
        assert_eq!(next.classes(), ["bench", "tree"]);
    }

    #[test]
    fn unparseable_reply_is_an_error() {
        let gw = Gateway::new(Arc::new(Fixed("{}")));
        let current = ActiveClassSet::builtin(DEFAULT_SCENE).unwrap();
        assert!(matches!(switch_scene("park", &gw, &current, 1000), Err(ControlError::UnparseableClassList)));
        assert!(matches!(switch_scene("", &gw, &current, 1000), Err(ControlError::Prompt(_))));
    }

    #[test]
    fn interest_target_added() {
        let gw = Gateway::new(Arc::new(MockBackend::default()));
        let mut current = ActiveClassSet::builtin("walking_test").unwrap();
        assert_eq!(add_interest("find the nearest bench", &gw, &mut current, 1000).unwrap(), "bench");
        assert!(current.targets().contains(&"bench".to_string()));
        let gw = Gateway::new(Arc::new(Fixed(r#"{"add": "license plate"}"#)));
        assert!(matches!(add_interest("find plates", &gw, &mut current, 1000), Err(ControlError::MaskedTarget(_))));
    }
}
