use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SCENE: &str = "visually_impaired_navigation";

const BUILTIN_SCENES: &[(&str, &str)] = &[
    ("visually_impaired_navigation", include_str!("../../scenes/visually_impaired_navigation.txt")),
    ("urban_walking", include_str!("../../scenes/urban_walking.txt")),
    ("urban_walking_hazards", include_str!("../../scenes/urban_walking_hazards.txt")),
    ("walking_general", include_str!("../../scenes/walking_general.txt")),
    ("walking_test", include_str!("../../scenes/walking_test.txt")),
];

const BUILTIN_MASK: &str = include_str!("../../scenes/mask.txt");

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown built-in scene `{0}`")]
    UnknownScene(String),
    #[error("scene `{0}` has no classes")]
    EmptyClassList(String),
    #[error("scene name must not be empty")]
    EmptyName,
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn builtin_scene_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_SCENES.iter().map(|(name, _)| *name)
}

/// Parses a class list file: one class per line, `#` starts a comment.
pub fn parse_class_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|line| !line.is_empty())
        .map(str::to_string)
        .collect()
}

fn normalize(class: &str) -> String {
    class.trim().to_lowercase()
}

/// Class names that are never reported. Matching ignores case and surrounding space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMask(BTreeSet<String>);

impl ClassMask {
    pub fn new<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(classes.into_iter().map(|c| normalize(c.as_ref())).collect())
    }

    /// The privacy mask shipped with the built-in scenes.
    pub fn annotation_default() -> Self {
        Self::new(parse_class_list(BUILTIN_MASK))
    }

    pub fn contains(&self, class: &str) -> bool {
        self.0.contains(&normalize(class))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The detection vocabulary currently in force, with its privacy mask and
/// any user-requested interest targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveClassSet {
    pub scene_name: String,
    classes: Vec<String>,
    mask: ClassMask,
    targets: Vec<String>,
}

impl ActiveClassSet {
    /// Builds a set from a raw list: trims, drops empties and masked names,
    /// and keeps the first occurrence of each class.
    pub fn from_list<I, S>(scene_name: &str, classes: I, mask: ClassMask) -> Result<Self, SceneError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let scene_name = scene_name.trim();
        if scene_name.is_empty() {
            return Err(SceneError::EmptyName);
        }
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for class in classes {
            let class = class.as_ref().trim();
            if class.is_empty() || mask.contains(class) {
                continue;
            }
            if seen.insert(normalize(class)) {
                kept.push(class.to_string());
            }
        }
        if kept.is_empty() {
            return Err(SceneError::EmptyClassList(scene_name.to_string()));
        }
        Ok(Self {
            scene_name: scene_name.to_string(),
            classes: kept,
            mask,
            targets: Vec::new(),
        })
    }

    pub fn builtin(name: &str) -> Result<Self, SceneError> {
        let (_, text) = BUILTIN_SCENES
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SceneError::UnknownScene(name.to_string()))?;
        Self::from_list(name, parse_class_list(text), ClassMask::annotation_default())
    }

    /// Loads a scene file; the scene name is the file stem.
    pub fn load(path: &Path, mask: ClassMask) -> Result<Self, SceneError> {
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        Self::from_list(name, parse_class_list(&text), mask)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn mask(&self) -> &ClassMask {
        &self.mask
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn contains(&self, class: &str) -> bool {
        let key = normalize(class);
        self.classes.iter().any(|c| normalize(c) == key)
    }

    /// Adds an interest target, also appending it to the class list.
    /// Returns false when the target is masked or empty.
    pub fn add_target(&mut self, target: &str) -> bool {
        let target = target.trim();
        if target.is_empty() || self.mask.contains(target) {
            return false;
        }
        if !self.contains(target) {
            self.classes.push(target.to_string());
        }
        if !self.targets.iter().any(|t| normalize(t) == normalize(target)) {
            self.targets.push(target.to_string());
        }
        true
    }
}
