use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{featurize, tokenize, FeatureVector};
use super::model::{bce_loss_and_grad, ModelParams};
use crate::corpus::{EmotionLabelSet, NUM_LABELS};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub feature_dim: usize,
    pub ngram_max: u8,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Tokens kept (prefix) after tokenizing the possibly augmented text.
    pub max_tokens: usize,
}

impl Default for TrainConfig {
    /// Reference-model profile.
    fn default() -> Self {
        TrainConfig {
            feature_dim: 1 << 18,
            ngram_max: 2,
            batch_size: 8,
            learning_rate: 0.1,
            epochs: 3,
            seed: 0,
            threshold: 0.5,
            max_tokens: 512,
        }
    }
}

impl TrainConfig {
    /// Profile for fine-tuned encoder backends: batch 8, lr 5e-5, 3 epochs.
    pub fn external_profile() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train config: {m}")));
        if self.feature_dim < 2 {
            return bad("feature_dim must be at least 2");
        }
        if !matches!(self.ngram_max, 1 | 2) {
            return bad("ngram_max must be 1 or 2");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.max_tokens == 0 {
            return bad("batch_size, epochs and max_tokens must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1]");
        }
        Ok(())
    }

    /// Tokenize, truncate to `max_tokens`, hash.
    pub fn featurize_text(&self, text: &str) -> FeatureVector {
        let mut tokens = tokenize(text);
        tokens.truncate(self.max_tokens);
        featurize(&tokens, self.feature_dim, self.ngram_max)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    /// Mean per-example loss observed during each epoch's pass.
    pub epoch_losses: Vec<T>,
}

/// Mini-batch gradient descent on summed BCE, batch-mean gradients, no momentum.
///
/// Epoch `e` visits examples in the order of a [`SplitMix64`] shuffle seeded
/// with `config.seed ^ e`. Weights start at zero.
pub fn train<T, S, F>(
    dataset: &[(S, EmotionLabelSet)],
    config: &TrainConfig,
    text_transform: F,
) -> Result<ModelParams<T>>
where
    T: Scalar,
    S: AsRef<str>,
    F: Fn(&str) -> Result<String>,
{
    train_with_history(dataset, config, text_transform).map(|o| o.params)
}

pub fn train_with_history<T, S, F>(
    dataset: &[(S, EmotionLabelSet)],
    config: &TrainConfig,
    text_transform: F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    S: AsRef<str>,
    F: Fn(&str) -> Result<String>,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let rows: Vec<(FeatureVector, EmotionLabelSet)> = dataset
        .iter()
        .map(|(text, labels)| Ok((config.featurize_text(&text_transform(text.as_ref())?), *labels)))
        .collect::<Result<_>>()?;
    fit_features(&rows, config)
}

/// Train on pre-featurized rows.
pub fn fit_features<T: Scalar>(
    rows: &[(FeatureVector, EmotionLabelSet)],
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let lr = T::from_f64_lossy(config.learning_rate);
    let mut params = ModelParams::<T>::zeros(config.feature_dim);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.sort_unstable();
        SplitMix64::new(config.seed ^ epoch as u64).shuffle(&mut order);
        let mut epoch_loss = T::zero();

        for batch in order.chunks(config.batch_size) {
            let mut bias_grad = [T::zero(); NUM_LABELS];
            let mut weight_grad: BTreeMap<usize, [T; NUM_LABELS]> = BTreeMap::new();
            for &r in batch {
                let (fv, labels) = &rows[r];
                let (loss, grad) = bce_loss_and_grad(&params, fv, labels);
                epoch_loss = epoch_loss + loss;
                add_assign(&mut bias_grad, &grad.bias);
                for (i, g) in grad.weights {
                    add_assign(weight_grad.entry(i).or_insert([T::zero(); NUM_LABELS]), &g);
                }
            }
            let step = lr / T::from_count(batch.len() as u64);
            for (b, g) in params.bias.iter_mut().zip(bias_grad) {
                *b = *b - step * g;
            }
            for (i, g) in &weight_grad {
                for (w, gk) in params.weights[*i].iter_mut().zip(g) {
                    *w = *w - step * *gk;
                }
            }
            let touched_finite = params.bias.iter().all(|b| b.is_finite())
                && weight_grad
                    .keys()
                    .all(|&i| params.weights[i].iter().all(|w| w.is_finite()));
            if !touched_finite {
                return Err(Error::Consistency(format!(
                    "non-finite parameters in epoch {epoch}; lower the learning rate"
                )));
            }
        }
        epoch_losses.push(epoch_loss / T::from_count(rows.len() as u64));
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

fn add_assign<T: Scalar>(acc: &mut [T; NUM_LABELS], g: &[T; NUM_LABELS]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a = *a + *b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(s: &str) -> Result<String> {
        Ok(s.to_string())
    }

    #[test]
    fn empty_dataset_rejected() {
        let data: Vec<(String, EmotionLabelSet)> = vec![];
        let r = train::<f64, _, _>(&data, &TrainConfig::default(), identity);
        assert!(matches!(r, Err(Error::Argument(_))));
    }

    #[test]
    fn single_example_memorized() {
        let labels = EmotionLabelSet::from_bits([1, 1, 0, 0, 0]).unwrap();
        let data = vec![("Dad on the warpath.", labels)];
        let config = TrainConfig {
            epochs: 1000,
            ..TrainConfig::default()
        };
        let out = train_with_history::<f64, _, _>(&data, &config, identity).unwrap();
        let losses = &out.epoch_losses;
        let stop = losses.iter().position(|&l| l < 0.01).expect("loss reaches 0.01");
        for w in losses[..=stop].windows(2) {
            assert!(w[1] < w[0], "loss did not decrease: {w:?}");
        }
        assert!(out.params.is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let data: Vec<(String, EmotionLabelSet)> = (0..40)
            .map(|i| {
                (
                    format!("token{} filler{}", i % 7, i % 3),
                    EmotionLabelSet::from_bits([(i % 2) as u8, (i % 3 == 0) as u8, 0, 1, 0]).unwrap(),
                )
            })
            .collect();
        let config = TrainConfig {
            feature_dim: 1 << 10,
            epochs: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train::<f64, _, _>(&data, &config, identity).unwrap();
        let b = train::<f64, _, _>(&data, &config, identity).unwrap();
        let bits = |m: &ModelParams<f64>| {
            m.weights.iter().flatten().chain(&m.bias).map(|x| x.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = train::<f64, _, _>(&data, &TrainConfig { seed: 12, ..config }, identity).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn transform_errors_propagate() {
        let data = vec![("x", EmotionLabelSet::EMPTY)];
        let r = train::<f64, _, _>(&data, &TrainConfig::default(), |_| {
            Err(Error::Consistency("no explanation".into()))
        });
        assert!(matches!(r, Err(Error::Consistency(_))));
    }

    #[test]
    fn truncation_keeps_prefix() {
        let config = TrainConfig {
            max_tokens: 2,
            ngram_max: 1,
            feature_dim: 1 << 12,
            ..TrainConfig::default()
        };
        assert_eq!(config.featurize_text("a b c d"), config.featurize_text("a b"));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { threshold: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { ngram_max: 3, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert_eq!(TrainConfig::external_profile().learning_rate, 5e-5);
        assert_eq!(TrainConfig::external_profile().batch_size, 8);
        assert_eq!(TrainConfig::external_profile().epochs, 3);
    }
}
