//! Golden-file checks for every toggle, sensitivity and mode combination.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the files after an intended change.

mod common;

use std::fs;
use std::path::Path;

use common::{fixture_frames, golden_dir, render_all};
use navwatch::prompt::*;

const ANCHORS: [(&str, &str); 4] = [
    ("instruction", "voice assistant for a visually impaired user"),
    ("sensitivity", "Current sensitivity:"),
    ("location", "left 25% or right 25%"),
    ("motion", "speed and direction"),
];

#[test]
fn bundles_match_golden_files() {
    let rendered = render_all();
    assert_eq!(rendered.len(), 144);
    let dir = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(&dir).unwrap();
        for (name, body) in &rendered {
            fs::write(dir.join(name), body).unwrap();
        }
    }
    let mut mismatched = Vec::new();
    for (name, body) in &rendered {
        match fs::read_to_string(dir.join(name)) {
            Ok(expected) if expected == *body => {}
            _ => mismatched.push(name.clone()),
        }
    }
    assert!(mismatched.is_empty(), "golden mismatch: {mismatched:?}");
    assert_eq!(fs::read_dir(&dir).unwrap().count(), 144);
}

#[test]
fn enabled_segments_carry_their_anchor() {
    let (prev, cur) = fixture_frames();
    let scene = ActiveClassSet::builtin("walking_test").unwrap();
    for bits in 0..16u8 {
        let t = AblationToggles::from_bits(bits);
        let flags = [t.include_instruction, t.include_sensitivity, t.include_location, t.include_motion];
        let b = render_scene_prompt(Some(&prev), &cur, SensitivityLevel::Medium, t, OutputMode::Full, &scene);
        for ((name, anchor), on) in ANCHORS.iter().zip(flags) {
            assert_eq!(b.system_text.contains(anchor), on, "{name} in {}", t.label());
        }
        assert_eq!(b.user_text.contains("last frame:"), t.include_motion);
    }
}

#[test]
fn templates_match_reference_files() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/templates");
    let pairs = [
        ("instruction.txt", INSTRUCTION),
        ("sensitivity.txt", SENSITIVITY),
        ("location.txt", LOCATION),
        ("motion.txt", MOTION),
        ("format_full.txt", FORMAT_FULL),
        ("format_voice.txt", FORMAT_VOICE),
        ("format_annotation.txt", FORMAT_ANNOTATION),
        ("class_switch.txt", CLASS_SWITCH),
        ("interest_target.txt", INTEREST_TARGET),
    ];
    for (file, text) in pairs {
        assert_eq!(fs::read_to_string(fixtures.join(file)).unwrap(), text, "{file}");
    }
}

#[test]
fn sensitivity_sentence_per_level() {
    for (level, want) in [
        (SensitivityLevel::Low, "Current sensitivity: low."),
        (SensitivityLevel::Medium, "Current sensitivity: medium."),
        (SensitivityLevel::High, "Current sensitivity: high."),
    ] {
        let seg = sensitivity_segment(level);
        assert!(seg.ends_with(want), "{seg}");
        assert_eq!(seg.matches("Current sensitivity:").count(), 1);
    }
}

#[test]
fn masked_classes_never_reach_the_prompt() {
    let (prev, cur) = fixture_frames();
    let scene = ActiveClassSet::builtin("walking_test").unwrap();
    for mode in OutputMode::ALL {
        let b = render_scene_prompt(Some(&prev), &cur, SensitivityLevel::High, AblationToggles::ALL_ON, mode, &scene);
        assert!(!b.user_text.contains("human face"));
        assert!(b.user_text.contains("car | Left | center 12%,32% | size 40%x40% | conf 0.93"), "{}", b.user_text);
    }
}
