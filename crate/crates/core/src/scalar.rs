use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type the classifier and metrics are generic over.
pub trait Scalar:
    Float + FromPrimitive + Sum + Debug + Display + Default + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Probabilities entering a logarithm are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    const PROB_CLAMP: Self;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).unwrap_or_else(Self::nan)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const PROB_CLAMP: Self = 1e-12;
}

// 1 - 1e-12 rounds to 1.0 in single precision, so the clamp sits at machine epsilon.
impl Scalar for f32 {
    const PROB_CLAMP: Self = f32::EPSILON;
}
