#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tta_core::scores::{LabeledSet, PredictionTensor, ScoreKind};

pub fn random_probs(rng: &mut ChaCha8Rng, n: usize, m: usize, c: usize) -> PredictionTensor {
    let mut values = Vec::with_capacity(n * m * c);
    for _ in 0..n * m {
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        values.extend(raw.iter().map(|v| (v / s) as f32));
    }
    PredictionTensor::new(n, m, c, ScoreKind::Probabilities, values).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> LabeledSet {
    LabeledSet::new((0..n).map(|_| rng.random_range(0..c)).collect(), c).unwrap()
}

/// Argmax with the lowest index winning ties, written independently of the
/// library's helper.
pub fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}
