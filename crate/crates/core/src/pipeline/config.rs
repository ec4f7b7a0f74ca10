use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierSelection, TrainConfig};
use crate::error::{Error, Result};
use crate::explainer::{BackendDescriptor, CueRule, PromptTemplate, CANONICAL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TextOnly,
    TextPlusExplanation,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::TextOnly, Mode::TextPlusExplanation];

    pub fn name(self) -> &'static str {
        match self {
            Mode::TextOnly => "text_only",
            Mode::TextPlusExplanation => "text_plus_explanation",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text_only" => Ok(Mode::TextOnly),
            "text_plus_explanation" => Ok(Mode::TextPlusExplanation),
            other => Err(Error::Argument(format!(
                "unknown mode `{other}` (text_only or text_plus_explanation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub backend: ClassifierSelection,
}

/// Experiment description; the JSON config file mirrors it field for field.
/// Relative paths are resolved against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub train_path: PathBuf,
    pub dev_path: Option<PathBuf>,
    pub test_path: PathBuf,
    pub backend: BackendDescriptor,
    pub prompt_version: String,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub run_seeds: Vec<u64>,
    /// Explanation cache; defaults to `<out>/cache/<backend_id>.jsonl` in the CLI.
    pub cache_path: Option<PathBuf>,
}

/// A handful of everyday cues for the stub backend.
pub fn default_stub_cues() -> Vec<CueRule> {
    [
        ("warpath", "conveys tension or confrontation"),
        ("injur", "recounts a physical setback"),
        ("muscle", "recounts a physical setback"),
        ("bombing", "references a tragic event"),
        ("dark", "describes an uneasy setting"),
        ("alone", "describes being isolated"),
        ("won", "reports a success"),
        ("party", "describes a celebration"),
        ("lost", "reports a loss"),
        ("suddenly", "describes something unexpected"),
    ]
    .into_iter()
    .map(|(k, c)| CueRule::new(k, c))
    .collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::TextPlusExplanation,
            train_path: PathBuf::from("data/train.csv"),
            dev_path: None,
            test_path: PathBuf::from("data/test.csv"),
            backend: BackendDescriptor::stub("stub", default_stub_cues()),
            prompt_version: CANONICAL_VERSION.to_string(),
            train: TrainConfig::default(),
            classifier: ClassifierConfig::default(),
            run_seeds: vec![1, 2, 3, 4],
            cache_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_seeds.is_empty() {
            return Err(Error::Config("run_seeds must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.run_seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!("run seed {dup} is repeated")));
        }
        self.train.validate()?;
        self.backend.validate()?;
        self.template()?.validate()
    }

    pub fn template(&self) -> Result<PromptTemplate> {
        PromptTemplate::by_version(&self.prompt_version)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::json("experiment config", e))
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("experiment config", e))
    }

    /// Apply `dotted.key=value` overrides on top of this config.
    /// Values parse as JSON when possible, otherwise as strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut tree = serde_json::to_value(self).map_err(|e| Error::json("experiment config", e))?;
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("override `{raw}` is not key=value")))?;
            let value = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.into()));
            set_dotted(&mut tree, key, value)?;
        }
        serde_json::from_value(tree).map_err(|e| Error::json("experiment config after overrides", e))
    }
}

fn set_dotted(tree: &mut serde_json::Value, key: &str, value: serde_json::Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Argument(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    for part in path {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Argument(format!("override `{key}`: `{part}` is not an object")))?;
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
        if node.is_null() {
            *node = serde_json::Value::Object(Default::default());
        }
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Argument(format!("override `{key}`: parent is not an object")))?
        .insert(last.to_string(), value);
    Ok(())
}
