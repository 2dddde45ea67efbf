//! Score tensors, labels and aggregation weights shared by every other module.
//!
//! Scores are stored as `f32` (the interchange precision); anything that
//! accumulates over scores does so in `f64`.

use crate::error::{Result, TtaError};

/// Whether a tensor holds raw logits or normalized class probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Logits,
    Probabilities,
}

/// Tolerance on the row sum of a probability row.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-4;

/// Model outputs for `n` inputs under `m` augmentations over `c` classes.
///
/// Layout is input-major, then augmentation, then class. Augmentation 0 is
/// always the identity view.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    n: usize,
    m: usize,
    c: usize,
    kind: ScoreKind,
    values: Vec<f32>,
}

impl PredictionTensor {
    pub fn new(n: usize, m: usize, c: usize, kind: ScoreKind, values: Vec<f32>) -> Result<Self> {
        if n < 1 || m < 1 || c < 2 {
            return Err(TtaError::InvariantViolation(format!(
                "need n >= 1, m >= 1, c >= 2; got n={n}, m={m}, c={c}"
            )));
        }
        let expected = n
            .checked_mul(m)
            .and_then(|x| x.checked_mul(c))
            .ok_or_else(|| TtaError::InvariantViolation("tensor size overflows".into()))?;
        if values.len() != expected {
            return Err(TtaError::DimensionMismatch(format!(
                "{} values for a {n}x{m}x{c} tensor",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TtaError::NonFiniteInput);
        }
        if kind == ScoreKind::Probabilities {
            for (k, row) in values.chunks_exact(c).enumerate() {
                let sum: f64 = row.iter().map(|&v| v as f64).sum();
                if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                    return Err(TtaError::InvariantViolation(format!(
                        "probability row (input {}, augmentation {}) sums to {sum}",
                        k / m,
                        k % m
                    )));
                }
            }
        }
        Ok(Self {
            n,
            m,
            c,
            kind,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Scores of input `i` under augmentation `aug`.
    pub fn row(&self, i: usize, aug: usize) -> &[f32] {
        let start = (i * self.m + aug) * self.c;
        &self.values[start..start + self.c]
    }

    /// The `m × c` block of input `i`.
    pub fn input(&self, i: usize) -> &[f32] {
        let block = self.m * self.c;
        &self.values[i * block..(i + 1) * block]
    }

    /// New tensor keeping only the listed augmentations, in the listed order.
    pub fn select_augmentations(&self, augs: &[usize]) -> Result<Self> {
        if augs.is_empty() {
            return Err(TtaError::DimensionMismatch(
                "no augmentations selected".into(),
            ));
        }
        if let Some(&bad) = augs.iter().find(|&&a| a >= self.m) {
            return Err(TtaError::DimensionMismatch(format!(
                "augmentation {bad} out of range for m={}",
                self.m
            )));
        }
        let mut values = Vec::with_capacity(self.n * augs.len() * self.c);
        for i in 0..self.n {
            for &a in augs {
                values.extend_from_slice(self.row(i, a));
            }
        }
        Self::new(self.n, augs.len(), self.c, self.kind, values)
    }

    /// New tensor keeping only the listed inputs.
    pub fn select_inputs(&self, inputs: &[usize]) -> Result<Self> {
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.n) {
            return Err(TtaError::DimensionMismatch(format!(
                "input {bad} out of range for n={}",
                self.n
            )));
        }
        let mut values = Vec::with_capacity(inputs.len() * self.m * self.c);
        for &i in inputs {
            values.extend_from_slice(self.input(i));
        }
        Self::new(inputs.len(), self.m, self.c, self.kind, values)
    }
}

/// Ground-truth labels aligned with a [`PredictionTensor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSet {
    labels: Vec<usize>,
    c: usize,
}

impl LabeledSet {
    pub fn new(labels: Vec<usize>, c: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(TtaError::LabelOutOfRange {
                label: bad as u64,
                classes: c as u64,
            });
        }
        Ok(Self { labels, c })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| TtaError::DimensionMismatch(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, self.c)
    }

    /// Checks that these labels pair with `preds`.
    pub fn check_pairs_with(&self, preds: &PredictionTensor) -> Result<()> {
        if self.labels.len() != preds.n() || self.c != preds.c() {
            return Err(TtaError::DimensionMismatch(format!(
                "labels (n={}, c={}) vs predictions (n={}, c={})",
                self.labels.len(),
                self.c,
                preds.n(),
                preds.c()
            )));
        }
        Ok(())
    }
}

/// Parameterization of the learned aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum WeightMode {
    /// One weight per augmentation (AugTTA).
    PerAugmentation,
    /// One weight per (augmentation, class) pair (ClassTTA).
    PerAugmentationClass,
}

impl WeightMode {
    /// Number of parameters for `m` augmentations and `c` classes.
    pub fn param_count(self, m: usize, c: usize) -> usize {
        match self {
            WeightMode::PerAugmentation => m,
            WeightMode::PerAugmentationClass => m * c,
        }
    }
}

/// Nonnegative aggregation weights, row-major `m × c` for the class mode.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationWeights {
    mode: WeightMode,
    m: usize,
    c: usize,
    values: Vec<f32>,
}

impl AggregationWeights {
    pub fn new(mode: WeightMode, m: usize, c: usize, values: Vec<f32>) -> Result<Self> {
        if m < 1 || c < 2 {
            return Err(TtaError::InvariantViolation(format!(
                "weights need m >= 1 and c >= 2, got m={m}, c={c}"
            )));
        }
        let expected = mode.param_count(m, c);
        if values.len() != expected {
            return Err(TtaError::DimensionMismatch(format!(
                "{} weights, expected {expected}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TtaError::NonFiniteInput);
        }
        if let Some(&neg) = values.iter().find(|&&v| v < 0.0) {
            return Err(TtaError::NegativeWeight(neg));
        }
        Ok(Self { mode, m, c, values })
    }

    /// All weights equal to `1/m`.
    pub fn uniform(mode: WeightMode, m: usize, c: usize) -> Result<Self> {
        let w = (1.0 / m as f64) as f32;
        Self::new(mode, m, c, vec![w; mode.param_count(m, c)])
    }

    /// Rounds `f64` training parameters to storage precision.
    pub fn from_f64(mode: WeightMode, m: usize, c: usize, values: &[f64]) -> Result<Self> {
        Self::new(mode, m, c, values.iter().map(|&v| v as f32).collect())
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(TtaError::EmptyVector);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(TtaError::NonFiniteInput);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the maximum score; ties go to the lowest index.
pub fn argmax_class<T: Copy + PartialOrd>(scores: &[T]) -> Result<usize> {
    let (first, rest) = scores.split_first().ok_or(TtaError::EmptyVector)?;
    let mut best = 0;
    let mut best_val = *first;
    for (k, &v) in rest.iter().enumerate() {
        if v > best_val {
            best = k + 1;
            best_val = v;
        }
    }
    Ok(best)
}

/// Converts a logit tensor to probabilities row by row; probability tensors
/// pass through untouched.
pub fn to_probabilities(t: &PredictionTensor) -> Result<PredictionTensor> {
    if t.kind() == ScoreKind::Probabilities {
        return Ok(t.clone());
    }
    let mut values = Vec::with_capacity(t.values().len());
    let mut buf = vec![0.0f64; t.c()];
    for row in t.values().chunks_exact(t.c()) {
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = v as f64;
        }
        values.extend(softmax(&buf)?.into_iter().map(|p| p as f32));
    }
    PredictionTensor::new(t.n(), t.m(), t.c(), ScoreKind::Probabilities, values)
}
