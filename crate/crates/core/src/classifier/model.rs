use crate::corpus::{EmotionLabelSet, NUM_LABELS};
use crate::scalar::Scalar;

use super::features::FeatureVector;

/// Dense `feature_dim × 5` weights plus one bias per label.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub weights: Vec<[T; NUM_LABELS]>,
    pub bias: [T; NUM_LABELS],
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(feature_dim: usize) -> Self {
        ModelParams {
            weights: vec![[T::zero(); NUM_LABELS]; feature_dim],
            bias: [T::zero(); NUM_LABELS],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.iter().all(|b| b.is_finite())
            && self.weights.iter().flatten().all(|w| w.is_finite())
    }

    pub fn logits(&self, fv: &FeatureVector) -> [T; NUM_LABELS] {
        let mut z = self.bias;
        for (i, count) in fv.iter() {
            let c = T::from_count(u64::from(count));
            for (zk, wk) in z.iter_mut().zip(&self.weights[i]) {
                *zk = *zk + c * *wk;
            }
        }
        z
    }
}

/// Logistic function, evaluated as `e^z / (1 + e^z)` for negative `z`.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn predict_proba<T: Scalar>(model: &ModelParams<T>, fv: &FeatureVector) -> [T; NUM_LABELS] {
    model.logits(fv).map(sigmoid)
}

/// `flag_k = 1` iff `p_k >= threshold`.
pub fn decide<T: Scalar>(probabilities: &[T; NUM_LABELS], threshold: T) -> EmotionLabelSet {
    EmotionLabelSet::new(probabilities.map(|p| p >= threshold))
}

/// Gradient restricted to the bias and the weight rows a feature vector touches.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient<T> {
    pub bias: [T; NUM_LABELS],
    pub weights: Vec<(usize, [T; NUM_LABELS])>,
}

/// Summed binary cross-entropy over the five heads and its gradient.
///
/// Probabilities inside the logarithms are clamped to
/// `[T::PROB_CLAMP, 1 - T::PROB_CLAMP]`; the gradient uses the unclamped
/// `p_k - y_k`.
pub fn bce_loss_and_grad<T: Scalar>(
    model: &ModelParams<T>,
    fv: &FeatureVector,
    labels: &EmotionLabelSet,
) -> (T, SparseGradient<T>) {
    let p = predict_proba(model, fv);
    let y = labels.flags().map(|b| if b { T::one() } else { T::zero() });
    let lo = T::PROB_CLAMP;
    let hi = T::one() - T::PROB_CLAMP;
    let mut loss = T::zero();
    let mut dz = [T::zero(); NUM_LABELS];
    for k in 0..NUM_LABELS {
        let pc = p[k].max(lo).min(hi);
        loss = loss - (y[k] * pc.ln() + (T::one() - y[k]) * (T::one() - pc).ln());
        dz[k] = p[k] - y[k];
    }
    let weights = fv
        .iter()
        .map(|(i, count)| {
            let c = T::from_count(u64::from(count));
            (i, dz.map(|d| d * c))
        })
        .collect();
    (loss, SparseGradient { bias: dz, weights })
}
