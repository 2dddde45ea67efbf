//! Test-time augmentation toolkit: deterministic augmentation policies,
//! learned nonnegative aggregation of per-augmentation predictions,
//! standard baselines, diagnostic metrics and binary interchange formats.

pub mod aggregate;
pub mod augment;
pub mod error;
pub mod io;
pub mod metrics;
pub mod scores;
pub mod simulate;

pub use error::{Result, TtaError};
pub use scores::{
    argmax_class, softmax, to_probabilities, AggregationWeights, LabeledSet, PredictionTensor,
    ScoreKind, WeightMode,
};
