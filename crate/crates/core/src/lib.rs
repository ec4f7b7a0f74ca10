//! Explain-then-classify harness for multi-label emotion detection.
//!
//! Sentences are optionally augmented with a generated explanation, a
//! multi-label classifier is trained on the (augmented) text, and runs are
//! evaluated with per-label, macro and micro precision/recall/F1 over
//! several seeds.
//!
//! The numeric core ([`classifier`], [`metrics`]) is generic over
//! [`Scalar`]; the aliases below fix it to `f64`, which the pipeline uses.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod explainer;
pub mod hash;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = classifier::ModelParams<f64>;
pub type TrainedModel = classifier::TrainedModel<f64>;
pub type PredictionRecord = classifier::PredictionRecord<f64>;
pub type MetricsReport = metrics::MetricsReport<f64>;
pub type Prf = metrics::Prf<f64>;
pub type MeanStd = metrics::MeanStd<f64>;

pub type ModelF32 = classifier::ModelParams<f32>;
pub type MetricsReportF32 = metrics::MetricsReport<f32>;
