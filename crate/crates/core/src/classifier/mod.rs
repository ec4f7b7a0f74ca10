//! Reference multi-label classifier: hashed n-gram counts feeding five
//! independent sigmoid heads, trained with binary cross-entropy and
//! mini-batch gradient descent.
//!
//! Other classifiers plug in through [`ClassifierBackend`], selected by
//! `classifier.backend = "reference" | "external:<name>"`.

mod features;
mod model;
mod train;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use features::{featurize, hash_index, tokenize, FeatureVector};
pub use model::{bce_loss_and_grad, decide, predict_proba, sigmoid, ModelParams, SparseGradient};
pub use train::{fit_features, train, train_with_history, TrainConfig, TrainOutcome};

use crate::corpus::{EmotionLabelSet, NUM_LABELS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "lotus-reference-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct PredictionRecord<T> {
    pub example_id: String,
    pub probabilities: [T; NUM_LABELS],
    pub decisions: EmotionLabelSet,
}

/// Trained parameters together with the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub params: ModelParams<T>,
    pub config: TrainConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct ModelFile<T> {
    format: String,
    version: u32,
    feature_dim: usize,
    ngram_max: u8,
    bias: [T; NUM_LABELS],
    /// Rows with at least one non-zero weight, ascending by index.
    weights: Vec<(usize, [T; NUM_LABELS])>,
    train_config: TrainConfig,
}

impl<T: Scalar> TrainedModel<T> {
    pub fn predict_proba(&self, text: &str) -> [T; NUM_LABELS] {
        predict_proba(&self.params, &self.config.featurize_text(text))
    }

    pub fn threshold(&self) -> T {
        T::from_f64_lossy(self.config.threshold)
    }

    pub fn predict_record(&self, example_id: &str, text: &str) -> PredictionRecord<T> {
        let probabilities = self.predict_proba(text);
        PredictionRecord {
            example_id: example_id.to_string(),
            decisions: decide(&probabilities, self.threshold()),
            probabilities,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            feature_dim: self.params.feature_dim(),
            ngram_max: self.config.ngram_max,
            bias: self.params.bias,
            weights: self
                .params
                .weights
                .iter()
                .enumerate()
                .filter(|(_, row)| row.iter().any(|w| !w.is_zero()))
                .map(|(i, row)| (i, *row))
                .collect(),
            train_config: self.config.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::json("model", e))
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_str(raw).map_err(|e| Error::json("model", e))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if file.feature_dim != file.train_config.feature_dim || file.ngram_max != file.train_config.ngram_max {
            return Err(Error::Config("model header disagrees with its train_config".into()));
        }
        let mut params = ModelParams::zeros(file.feature_dim);
        params.bias = file.bias;
        for (i, row) in file.weights {
            let slot = params
                .weights
                .get_mut(i)
                .ok_or_else(|| Error::Config(format!("weight index {i} out of range")))?;
            *slot = row;
        }
        Ok(TrainedModel {
            params,
            config: file.train_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_file(path.as_ref(), self.to_json()? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }
}

/// A trained classifier as seen by the pipeline.
pub trait Predictor<T>: Send + Sync {
    fn predict_proba(&self, text: &str) -> Result<[T; NUM_LABELS]>;
}

impl<T: Scalar> Predictor<T> for TrainedModel<T> {
    fn predict_proba(&self, text: &str) -> Result<[T; NUM_LABELS]> {
        Ok(TrainedModel::predict_proba(self, text))
    }
}

/// Train/predict contract shared by the reference model and external adapters.
/// Texts arrive already transformed (augmented or not).
pub trait ClassifierBackend<T>: Send + Sync {
    fn name(&self) -> &str;

    fn train(
        &self,
        dataset: &[(String, EmotionLabelSet)],
        config: &TrainConfig,
    ) -> Result<Box<dyn Predictor<T>>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

impl<T: Scalar> ClassifierBackend<T> for ReferenceBackend {
    fn name(&self) -> &str {
        "reference"
    }

    fn train(
        &self,
        dataset: &[(String, EmotionLabelSet)],
        config: &TrainConfig,
    ) -> Result<Box<dyn Predictor<T>>> {
        let params = train(dataset, config, |s| Ok(s.to_string()))?;
        Ok(Box::new(TrainedModel {
            params,
            config: config.clone(),
        }))
    }
}

/// Value of the `classifier.backend` config key.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ClassifierSelection {
    #[default]
    Reference,
    External(String),
}

impl FromStr for ClassifierSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(ClassifierSelection::Reference),
            _ => match s.strip_prefix("external:") {
                Some(name) if !name.is_empty() => Ok(ClassifierSelection::External(name.to_string())),
                _ => Err(Error::Config(format!(
                    "classifier.backend `{s}` must be `reference` or `external:<name>`"
                ))),
            },
        }
    }
}

impl fmt::Display for ClassifierSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierSelection::Reference => f.write_str("reference"),
            ClassifierSelection::External(name) => write!(f, "external:{name}"),
        }
    }
}

impl Serialize for ClassifierSelection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClassifierSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Named external classifier adapters.
pub struct ClassifierRegistry<T> {
    external: HashMap<String, Arc<dyn ClassifierBackend<T>>>,
}

impl<T> Default for ClassifierRegistry<T> {
    fn default() -> Self {
        ClassifierRegistry {
            external: HashMap::new(),
        }
    }
}

impl<T: Scalar> ClassifierRegistry<T> {
    pub fn register(&mut self, name: impl Into<String>, backend: Arc<dyn ClassifierBackend<T>>) {
        self.external.insert(name.into(), backend);
    }

    pub fn resolve(&self, selection: &ClassifierSelection) -> Result<Arc<dyn ClassifierBackend<T>>> {
        match selection {
            ClassifierSelection::Reference => Ok(Arc::new(ReferenceBackend)),
            ClassifierSelection::External(name) => self.external.get(name).cloned().ok_or_else(|| {
                Error::Config(format!("no external classifier registered as `{name}`"))
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trips_exactly() {
        let data: Vec<(String, EmotionLabelSet)> = (0..30)
            .map(|i| {
                (
                    format!("word{} other{}", i % 5, i % 4),
                    EmotionLabelSet::from_bits([(i % 2) as u8, 0, (i % 5 == 1) as u8, 1, 0]).unwrap(),
                )
            })
            .collect();
        let config = TrainConfig {
            feature_dim: 1 << 12,
            epochs: 3,
            ..TrainConfig::default()
        };
        let params = train::<f64, _, _>(&data, &config, |s| Ok(s.to_string())).unwrap();
        let model = TrainedModel { params, config };
        let back = TrainedModel::<f64>::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);

        let model32 = TrainedModel {
            params: train::<f32, _, _>(&data, &model.config, |s| Ok(s.to_string())).unwrap(),
            config: model.config.clone(),
        };
        assert_eq!(TrainedModel::<f32>::from_json(&model32.to_json().unwrap()).unwrap(), model32);
    }

    #[test]
    fn rejects_foreign_format() {
        let raw = r#"{"format":"other","version":1,"feature_dim":4,"ngram_max":2,"bias":[0,0,0,0,0],"weights":[],"train_config":{}}"#;
        assert!(TrainedModel::<f64>::from_json(raw).is_err());
    }

    #[test]
    fn selection_parsing() {
        assert_eq!("reference".parse::<ClassifierSelection>().unwrap(), ClassifierSelection::Reference);
        assert_eq!(
            "external:roberta".parse::<ClassifierSelection>().unwrap(),
            ClassifierSelection::External("roberta".into())
        );
        assert!("external:".parse::<ClassifierSelection>().is_err());
        assert!("bert".parse::<ClassifierSelection>().is_err());
        let reg = ClassifierRegistry::<f64>::default();
        assert!(reg.resolve(&ClassifierSelection::External("x".into())).is_err());
        assert_eq!(reg.resolve(&ClassifierSelection::Reference).unwrap().name(), "reference");
    }

    #[test]
    fn prediction_record_json() {
        let r = PredictionRecord {
            example_id: "a".into(),
            probabilities: [0.25f64, 0.5, 0.75, 0.0, 1.0],
            decisions: decide(&[0.25, 0.5, 0.75, 0.0, 1.0], 0.5),
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"example_id":"a","probabilities":[0.25,0.5,0.75,0.0,1.0],"decisions":[0,1,1,0,1]}"#
        );
    }
}
