//! Aggregation of per-augmentation predictions.
//!
//! The learned aggregator scores class `c` as `Σ_m θ[m][c] · p[m][c]`
//! (per augmentation-class weights) or `Σ_m θ[m] · p[m][c]` (per augmentation
//! weights), with `θ ≥ 0`. Weights are fit by minibatch SGD with momentum on
//! the cross-entropy of the normalized scores, projecting onto `θ ≥ 0` after
//! every step. Raw, Mean and greedy policy search (GPS) are the baselines.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TtaError};
use crate::metrics::accuracy;
use crate::scores::{
    argmax_class, to_probabilities, AggregationWeights, LabeledSet, PredictionTensor, WeightMode,
};

/// Optimizer settings for [`train`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Floor added to every class score before normalizing.
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 256,
            seed: 0,
            epsilon: 1e-12,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TtaError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be > 0");
        }
        Ok(())
    }
}

/// How an [`Aggregator`] turns an `m × c` prediction block into class scores.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// The identity view (augmentation 0) alone.
    Raw,
    /// Mean of the stored scores over all augmentations.
    Mean,
    /// Mean of the stored scores over the selected augmentations (with repeats).
    Gps(Vec<usize>),
    /// Weighted sum of probabilities.
    Learned(AggregationWeights),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregator {
    method: Method,
    m: usize,
    c: usize,
}

impl Aggregator {
    pub fn new(method: Method, m: usize, c: usize) -> Result<Self> {
        match &method {
            Method::Gps(sel) => {
                if sel.is_empty() {
                    return Err(TtaError::EmptySelectionPool);
                }
                if let Some(&bad) = sel.iter().find(|&&a| a >= m) {
                    return Err(TtaError::DimensionMismatch(format!(
                        "GPS index {bad} out of range for m={m}"
                    )));
                }
            }
            Method::Learned(w) => {
                if w.m() != m || w.c() != c {
                    return Err(TtaError::DimensionMismatch(format!(
                        "weights are {}x{}, aggregator is {m}x{c}",
                        w.m(),
                        w.c()
                    )));
                }
            }
            Method::Raw | Method::Mean => {}
        }
        Ok(Self { method, m, c })
    }

    pub fn raw(m: usize, c: usize) -> Self {
        Self {
            method: Method::Raw,
            m,
            c,
        }
    }

    pub fn mean(m: usize, c: usize) -> Self {
        Self {
            method: Method::Mean,
            m,
            c,
        }
    }

    pub fn learned(weights: AggregationWeights) -> Self {
        let (m, c) = (weights.m(), weights.c());
        Self {
            method: Method::Learned(weights),
            m,
            c,
        }
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn weights(&self) -> Option<&AggregationWeights> {
        match &self.method {
            Method::Learned(w) => Some(w),
            _ => None,
        }
    }

    /// Short label for reports.
    pub fn label(&self) -> &'static str {
        match &self.method {
            Method::Raw => "raw",
            Method::Mean => "mean",
            Method::Gps(_) => "gps",
            Method::Learned(w) => match w.mode() {
                WeightMode::PerAugmentation => "aug_tta",
                WeightMode::PerAugmentationClass => "class_tta",
            },
        }
    }
}

fn check_block(
    theta_len: usize,
    expected_theta: usize,
    preds: &[f32],
    m: usize,
    c: usize,
) -> Result<()> {
    if preds.len() != m * c {
        return Err(TtaError::DimensionMismatch(format!(
            "prediction block has {} entries, expected {m}x{c}",
            preds.len()
        )));
    }
    if theta_len != expected_theta {
        return Err(TtaError::DimensionMismatch(format!(
            "theta has {theta_len} entries, expected {expected_theta}"
        )));
    }
    Ok(())
}

/// `out[c] = Σ_m theta[m][c] · preds[m][c]` for row-major `m × c` blocks.
pub fn forward_class(theta: &[f64], preds: &[f32], m: usize, c: usize) -> Result<Vec<f64>> {
    check_block(theta.len(), m * c, preds, m, c)?;
    let mut out = vec![0.0; c];
    accumulate(WeightMode::PerAugmentationClass, theta, preds, c, &mut out);
    Ok(out)
}

/// `out[c] = Σ_m theta[m] · preds[m][c]`.
pub fn forward_aug(theta: &[f64], preds: &[f32], m: usize, c: usize) -> Result<Vec<f64>> {
    check_block(theta.len(), m, preds, m, c)?;
    let mut out = vec![0.0; c];
    accumulate(WeightMode::PerAugmentation, theta, preds, c, &mut out);
    Ok(out)
}

/// Unchecked forward pass into `out` (length `c`, overwritten).
#[inline]
fn accumulate(mode: WeightMode, theta: &[f64], block: &[f32], c: usize, out: &mut [f64]) {
    out.fill(0.0);
    for (aug, row) in block.chunks_exact(c).enumerate() {
        match mode {
            WeightMode::PerAugmentation => {
                let w = theta[aug];
                for (o, &p) in out.iter_mut().zip(row) {
                    *o += w * p as f64;
                }
            }
            WeightMode::PerAugmentationClass => {
                let ws = &theta[aug * c..(aug + 1) * c];
                for ((o, &w), &p) in out.iter_mut().zip(ws).zip(row) {
                    *o += w * p as f64;
                }
            }
        }
    }
}

fn check_batch(
    mode: WeightMode,
    theta: &[f64],
    preds: &PredictionTensor,
    labels: &LabeledSet,
) -> Result<()> {
    labels.check_pairs_with(preds)?;
    let expected = mode.param_count(preds.m(), preds.c());
    if theta.len() != expected {
        return Err(TtaError::DimensionMismatch(format!(
            "theta has {} entries, expected {expected}",
            theta.len()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over `idx` plus the L2 term; adds the gradient of the
/// same objective into `grad` when given.
#[allow(clippy::too_many_arguments)]
fn objective(
    mode: WeightMode,
    theta: &[f64],
    preds: &PredictionTensor,
    labels: &[usize],
    idx: &[usize],
    epsilon: f64,
    weight_decay: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let c = preds.c();
    let scale = 1.0 / idx.len() as f64;
    let mut g = vec![0.0; c];
    let mut total = 0.0;
    for &i in idx {
        let block = preds.input(i);
        let y = labels[i];
        accumulate(mode, theta, block, c, &mut g);
        let norm: f64 = g.iter().map(|v| v + epsilon).sum();
        let true_score = g[y] + epsilon;
        total += norm.ln() - true_score.ln();
        if let Some(grad) = grad.as_deref_mut() {
            // d loss / d g[k] = 1/norm - [k == y] / true_score
            let inv_norm = scale / norm;
            let inv_true = scale / true_score;
            for (aug, row) in block.chunks_exact(c).enumerate() {
                match mode {
                    WeightMode::PerAugmentation => {
                        let row_sum: f64 = row.iter().map(|&p| p as f64).sum();
                        grad[aug] += inv_norm * row_sum - inv_true * row[y] as f64;
                    }
                    WeightMode::PerAugmentationClass => {
                        let gr = &mut grad[aug * c..(aug + 1) * c];
                        for (gk, &p) in gr.iter_mut().zip(row) {
                            *gk += inv_norm * p as f64;
                        }
                        gr[y] -= inv_true * row[y] as f64;
                    }
                }
            }
        }
    }
    let l2: f64 = theta.iter().map(|t| t * t).sum();
    if let Some(grad) = grad {
        for (gk, t) in grad.iter_mut().zip(theta) {
            *gk += weight_decay * t;
        }
    }
    total * scale + 0.5 * weight_decay * l2
}

/// Training objective over the whole set:
/// `mean_i -ln((g_i[y_i] + ε) / Σ_c (g_i[c] + ε)) + (weight_decay / 2) ‖θ‖²`.
pub fn loss(
    mode: WeightMode,
    theta: &[f64],
    preds: &PredictionTensor,
    labels: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<f64> {
    check_batch(mode, theta, preds, labels)?;
    let idx: Vec<usize> = (0..preds.n()).collect();
    Ok(objective(
        mode,
        theta,
        preds,
        labels.labels(),
        &idx,
        cfg.epsilon,
        cfg.weight_decay,
        None,
    ))
}

/// Analytic gradient of [`loss`] with respect to `theta`.
pub fn gradient(
    mode: WeightMode,
    theta: &[f64],
    preds: &PredictionTensor,
    labels: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    check_batch(mode, theta, preds, labels)?;
    let idx: Vec<usize> = (0..preds.n()).collect();
    let mut grad = vec![0.0; theta.len()];
    objective(
        mode,
        theta,
        preds,
        labels.labels(),
        &idx,
        cfg.epsilon,
        cfg.weight_decay,
        Some(&mut grad),
    );
    Ok(grad)
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// The checkpoint with the best validation accuracy.
    pub aggregator: Aggregator,
    /// Epoch of that checkpoint; 0 is the uniform initialization.
    pub best_epoch: usize,
    /// Validation accuracy after each epoch, index 0 being the initialization.
    pub val_accuracy: Vec<f64>,
    /// Smallest weight observed after any projected update.
    pub min_weight_seen: f64,
    pub steps: usize,
}

/// Fits aggregation weights and returns the best validation checkpoint.
pub fn train(
    train_preds: &PredictionTensor,
    train_labels: &LabeledSet,
    val_preds: &PredictionTensor,
    val_labels: &LabeledSet,
    mode: WeightMode,
    cfg: &TrainConfig,
) -> Result<Aggregator> {
    train_with_report(train_preds, train_labels, val_preds, val_labels, mode, cfg)
        .map(|r| r.aggregator)
}

/// [`train`], also returning the per-epoch trace.
pub fn train_with_report(
    train_preds: &PredictionTensor,
    train_labels: &LabeledSet,
    val_preds: &PredictionTensor,
    val_labels: &LabeledSet,
    mode: WeightMode,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_labels.is_empty() {
        return Err(TtaError::EmptyTrainingSet);
    }
    train_labels.check_pairs_with(train_preds)?;
    val_labels.check_pairs_with(val_preds)?;
    if val_preds.m() != train_preds.m() {
        return Err(TtaError::DimensionMismatch(format!(
            "train has m={}, validation has m={}",
            train_preds.m(),
            val_preds.m()
        )));
    }
    let (m, c) = (train_preds.m(), train_preds.c());
    let train_probs = to_probabilities(train_preds)?;
    let val_probs = to_probabilities(val_preds)?;
    let labels = train_labels.labels();

    let count = mode.param_count(m, c);
    let mut theta = vec![1.0 / m as f64; count];
    let mut velocity = vec![0.0; count];
    let mut grad = vec![0.0; count];

    let evaluate = |theta: &[f64]| -> Result<(Aggregator, f64)> {
        let agg = Aggregator::learned(AggregationWeights::from_f64(mode, m, c, theta)?);
        let acc = accuracy(&predict_probabilities(&agg, &val_probs)?, val_labels)?;
        Ok((agg, acc))
    };

    let (mut best, best_acc) = evaluate(&theta)?;
    let mut best_acc = best_acc;
    let mut best_epoch = 0;
    let mut history = vec![best_acc];
    let mut min_weight_seen = f64::INFINITY;
    let mut steps = 0;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_preds.n()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            objective(
                mode,
                &theta,
                &train_probs,
                labels,
                batch,
                cfg.epsilon,
                cfg.weight_decay,
                Some(&mut grad),
            );
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *t -= cfg.learning_rate * *v;
                if *t <= 0.0 {
                    *t = 0.0;
                }
            }
            let min = theta.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min >= 0.0, "projection failed: min weight {min}");
            if !theta.iter().all(|t| t.is_finite()) {
                return Err(TtaError::NonFiniteInput);
            }
            min_weight_seen = min_weight_seen.min(min);
            steps += 1;
        }
        let (agg, acc) = evaluate(&theta)?;
        history.push(acc);
        if acc > best_acc {
            best_acc = acc;
            best = agg;
            best_epoch = epoch;
        }
    }

    Ok(TrainReport {
        aggregator: best,
        best_epoch,
        val_accuracy: history,
        min_weight_seen,
        steps,
    })
}

/// Picks whichever learned aggregator is more accurate on the validation set;
/// ties go to the per-augmentation one.
pub fn select_mode(
    class_agg: &Aggregator,
    aug_agg: &Aggregator,
    val_preds: &PredictionTensor,
    val_labels: &LabeledSet,
) -> Result<Aggregator> {
    if class_agg.m() != aug_agg.m() || class_agg.c() != aug_agg.c() {
        return Err(TtaError::DimensionMismatch(
            "aggregators were trained on different shapes".into(),
        ));
    }
    let class_acc = accuracy(&predict(class_agg, val_preds)?, val_labels)?;
    let aug_acc = accuracy(&predict(aug_agg, val_preds)?, val_labels)?;
    Ok(if class_acc > aug_acc {
        class_agg.clone()
    } else {
        aug_agg.clone()
    })
}

/// Per-input mean of the stored score rows (whatever their kind).
pub fn baseline_mean(preds: &PredictionTensor) -> Vec<Vec<f64>> {
    let all: Vec<usize> = (0..preds.m()).collect();
    (0..preds.n()).map(|i| mean_of(preds, i, &all)).collect()
}

/// The identity-view slice.
pub fn baseline_raw(preds: &PredictionTensor) -> Vec<Vec<f64>> {
    (0..preds.n())
        .map(|i| preds.row(i, 0).iter().map(|&v| v as f64).collect())
        .collect()
}

/// Mean of the rows of input `i` at `augs`, summed in the order given.
fn mean_of(preds: &PredictionTensor, i: usize, augs: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; preds.c()];
    for &a in augs {
        for (s, &v) in sum.iter_mut().zip(preds.row(i, a)) {
            *s += v as f64;
        }
    }
    let k = augs.len() as f64;
    sum.iter_mut().for_each(|s| *s /= k);
    sum
}

/// Greedy policy search: repeatedly appends (with replacement) the
/// augmentation that maximizes accuracy of the running mean, `size` times.
/// Ties go to the lowest augmentation index.
pub fn gps_search(
    preds: &PredictionTensor,
    labels: &LabeledSet,
    size: usize,
) -> Result<Aggregator> {
    labels.check_pairs_with(preds)?;
    if size == 0 || preds.m() == 0 {
        return Err(TtaError::EmptySelectionPool);
    }
    let (n, c) = (preds.n(), preds.c());
    let truth = labels.labels();
    let mut selected: Vec<usize> = Vec::with_capacity(size);
    let mut sums = vec![0.0f64; n * c];
    let mut candidate = vec![0.0f64; c];
    for _ in 0..size {
        let k = (selected.len() + 1) as f64;
        let mut best: Option<(usize, usize)> = None;
        for aug in 0..preds.m() {
            let mut correct = 0;
            for i in 0..n {
                let base = &sums[i * c..(i + 1) * c];
                for ((out, &s), &v) in candidate.iter_mut().zip(base).zip(preds.row(i, aug)) {
                    *out = (s + v as f64) / k;
                }
                if argmax_class(&candidate)? == truth[i] {
                    correct += 1;
                }
            }
            if best.is_none_or(|(_, b)| correct > b) {
                best = Some((aug, correct));
            }
        }
        let (aug, _) = best.ok_or(TtaError::EmptySelectionPool)?;
        for i in 0..n {
            for (s, &v) in sums[i * c..(i + 1) * c].iter_mut().zip(preds.row(i, aug)) {
                *s += v as f64;
            }
        }
        selected.push(aug);
    }
    Aggregator::new(Method::Gps(selected), preds.m(), c)
}

/// Class predictions of `agg` on every input.
pub fn predict(agg: &Aggregator, preds: &PredictionTensor) -> Result<Vec<usize>> {
    if preds.m() != agg.m() || preds.c() != agg.c() {
        return Err(TtaError::DimensionMismatch(format!(
            "aggregator expects m={}, c={}; tensor has m={}, c={}",
            agg.m(),
            agg.c(),
            preds.m(),
            preds.c()
        )));
    }
    match agg.method() {
        Method::Learned(_) => predict_probabilities(agg, &to_probabilities(preds)?),
        _ => scores(agg, preds)?
            .iter()
            .map(|s| argmax_class(s))
            .collect(),
    }
}

/// Per-input class scores of `agg`. Learned methods score probabilities.
pub fn scores(agg: &Aggregator, preds: &PredictionTensor) -> Result<Vec<Vec<f64>>> {
    match agg.method() {
        Method::Raw => Ok(baseline_raw(preds)),
        Method::Mean => Ok(baseline_mean(preds)),
        Method::Gps(sel) => Ok((0..preds.n()).map(|i| mean_of(preds, i, sel)).collect()),
        Method::Learned(w) => {
            let probs = to_probabilities(preds)?;
            let theta = w.to_f64();
            Ok((0..probs.n())
                .map(|i| {
                    let mut out = vec![0.0; probs.c()];
                    accumulate(w.mode(), &theta, probs.input(i), probs.c(), &mut out);
                    out
                })
                .collect())
        }
    }
}

fn predict_probabilities(agg: &Aggregator, probs: &PredictionTensor) -> Result<Vec<usize>> {
    let w = agg.weights().expect("learned aggregator");
    let theta = w.to_f64();
    let mut out = vec![0.0; probs.c()];
    (0..probs.n())
        .map(|i| {
            accumulate(w.mode(), &theta, probs.input(i), probs.c(), &mut out);
            argmax_class(&out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::ScoreKind;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_probs(rng: &mut ChaCha8Rng, n: usize, m: usize, c: usize) -> PredictionTensor {
        let logits: Vec<f32> = (0..n * m * c)
            .map(|_| rng.random_range(-3.0f32..3.0))
            .collect();
        let l = PredictionTensor::new(n, m, c, ScoreKind::Logits, logits).unwrap();
        to_probabilities(&l).unwrap()
    }

    fn random_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> LabeledSet {
        LabeledSet::new((0..n).map(|_| rng.random_range(0..c)).collect(), c).unwrap()
    }

    #[test]
    fn forward_class_examples() {
        let out = forward_class(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        assert_eq!(out, vec![1.0, 0.0]);
        let preds = [0.2f32, 0.3, 0.5, 0.6, 0.1, 0.3, 0.1, 0.8, 0.1];
        let out = forward_class(&[1.0 / 3.0; 9], &preds, 3, 3).unwrap();
        for k in 0..3 {
            let mean = (0..3).map(|a| preds[a * 3 + k] as f64).sum::<f64>() / 3.0;
            assert!((out[k] - mean).abs() < 1e-15);
        }
        assert!(forward_class(&[1.0; 3], &preds, 3, 3).is_err());
    }

    #[test]
    fn forward_class_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, c) = (3, 4);
        let theta: Vec<f64> = (0..m * c).map(|_| rng.random_range(0.0..2.0)).collect();
        let preds: Vec<f32> = (0..m * c).map(|_| rng.random_range(0.0f32..1.0)).collect();
        let out = forward_class(&theta, &preds, m, c).unwrap();
        for k in 0..c {
            let mut expected = 0.0;
            for a in 0..m {
                expected += theta[a * c + k] * preds[a * c + k] as f64;
            }
            assert!((out[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_aug_examples() {
        let out = forward_aug(&[0.5, 0.5], &[0.8, 0.2, 0.2, 0.8], 2, 2).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-7 && (out[1] - 0.5).abs() < 1e-7);
        let out = forward_aug(&[1.0, 0.0], &[0.8, 0.2, 0.2, 0.8], 2, 2).unwrap();
        assert_eq!(out, vec![0.8f32 as f64, 0.2f32 as f64]);
    }

    #[test]
    fn loss_examples() {
        let cfg = TrainConfig::default();
        // one-hot on the true class, theta picks it
        let preds =
            PredictionTensor::new(2, 1, 2, ScoreKind::Probabilities, vec![1.0, 0.0, 0.0, 1.0])
                .unwrap();
        let labels = LabeledSet::new(vec![0, 1], 2).unwrap();
        let l = loss(WeightMode::PerAugmentation, &[1.0], &preds, &labels, &cfg).unwrap();
        assert!((l - 0.5 * cfg.weight_decay).abs() < 1e-9);

        let preds = PredictionTensor::new(2, 2, 2, ScoreKind::Probabilities, vec![0.5; 8]).unwrap();
        let cfg0 = TrainConfig {
            weight_decay: 0.0,
            ..cfg.clone()
        };
        let l = loss(
            WeightMode::PerAugmentation,
            &[0.5, 0.5],
            &preds,
            &labels,
            &cfg0,
        )
        .unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradient_symmetric_when_rows_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base = random_probs(&mut rng, 6, 1, 3);
        let labels = random_labels(&mut rng, 6, 3);
        let tied = base.select_augmentations(&[0, 0, 0]).unwrap();
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let g = gradient(
            WeightMode::PerAugmentationClass,
            &[0.3; 9],
            &tied,
            &labels,
            &cfg,
        )
        .unwrap();
        for k in 0..3 {
            assert!((g[k] - g[3 + k]).abs() < 1e-15 && (g[k] - g[6 + k]).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_of_zero_predictions_is_weight_decay() {
        let preds = PredictionTensor::new(3, 2, 2, ScoreKind::Logits, vec![0.0; 12]).unwrap();
        let labels = LabeledSet::new(vec![0, 1, 1], 2).unwrap();
        let cfg = TrainConfig::default();
        let theta = [0.2, 0.7, 1.5, 0.0];
        let g = gradient(
            WeightMode::PerAugmentationClass,
            &theta,
            &preds,
            &labels,
            &cfg,
        )
        .unwrap();
        for (gk, t) in g.iter().zip(theta) {
            assert!((gk - cfg.weight_decay * t).abs() < 1e-18);
        }
    }

    #[test]
    fn dimension_errors() {
        let preds = PredictionTensor::new(2, 2, 2, ScoreKind::Probabilities, vec![0.5; 8]).unwrap();
        let labels = LabeledSet::new(vec![0, 1], 2).unwrap();
        let short = LabeledSet::new(vec![0], 2).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            loss(WeightMode::PerAugmentation, &[0.5], &preds, &labels, &cfg),
            Err(TtaError::DimensionMismatch(_))
        ));
        assert!(matches!(
            gradient(
                WeightMode::PerAugmentation,
                &[0.5, 0.5],
                &preds,
                &short,
                &cfg
            ),
            Err(TtaError::DimensionMismatch(_))
        ));
        assert!(matches!(
            predict(&Aggregator::raw(3, 2), &preds),
            Err(TtaError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn train_rejects_bad_config() {
        let preds = PredictionTensor::new(2, 2, 2, ScoreKind::Probabilities, vec![0.5; 8]).unwrap();
        let labels = LabeledSet::new(vec![0, 1], 2).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            train(
                &preds,
                &labels,
                &preds,
                &labels,
                WeightMode::PerAugmentation,
                &cfg
            ),
            Err(TtaError::InvalidConfig(_))
        ));
    }

    #[test]
    fn one_epoch_keeps_weights_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let preds = random_probs(&mut rng, 300, 4, 3);
        let labels = random_labels(&mut rng, 300, 3);
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 5.0,
            ..Default::default()
        };
        for mode in [
            WeightMode::PerAugmentation,
            WeightMode::PerAugmentationClass,
        ] {
            let report = train_with_report(&preds, &labels, &preds, &labels, mode, &cfg).unwrap();
            assert!(report.min_weight_seen >= 0.0);
            let w = report.aggregator.weights().unwrap();
            assert!(w.values().iter().all(|&v| v >= 0.0));
            assert_eq!(report.val_accuracy.len(), 2);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let preds = random_probs(&mut rng, 400, 3, 3);
        let labels = random_labels(&mut rng, 400, 3);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 77,
            ..Default::default()
        };
        let a = train(
            &preds,
            &labels,
            &preds,
            &labels,
            WeightMode::PerAugmentationClass,
            &cfg,
        )
        .unwrap();
        let b = train(
            &preds,
            &labels,
            &preds,
            &labels,
            WeightMode::PerAugmentationClass,
            &cfg,
        )
        .unwrap();
        let bits = |agg: &Aggregator| -> Vec<u32> {
            agg.weights()
                .unwrap()
                .values()
                .iter()
                .map(|v| v.to_bits())
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn select_mode_rules() {
        // 2 inputs, m=2, c=2: aug 0 right on input 0 only, aug 1 right on input 1 only
        let preds = PredictionTensor::new(
            2,
            2,
            2,
            ScoreKind::Probabilities,
            vec![0.9, 0.1, 0.1, 0.9, 0.2, 0.8, 0.8, 0.2],
        )
        .unwrap();
        let labels = LabeledSet::new(vec![0, 0], 2).unwrap();
        let only = |mode, values: Vec<f32>| {
            Aggregator::learned(AggregationWeights::new(mode, 2, 2, values).unwrap())
        };
        // class weights following aug 0 on input 0 and aug 1 on input 1 -> both right
        let class = only(WeightMode::PerAugmentationClass, vec![1.0, 0.0, 1.0, 0.0]);
        let aug = only(WeightMode::PerAugmentation, vec![1.0, 0.0]);
        assert_eq!(select_mode(&class, &aug, &preds, &labels).unwrap(), class);
        // equal accuracy -> aug
        let class_tie = only(WeightMode::PerAugmentationClass, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(select_mode(&class_tie, &aug, &preds, &labels).unwrap(), aug);
    }

    #[test]
    fn baselines() {
        let preds =
            PredictionTensor::new(1, 2, 2, ScoreKind::Logits, vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(baseline_mean(&preds), vec![vec![1.0, 1.0]]);
        assert_eq!(baseline_raw(&preds), vec![vec![2.0, 0.0]]);
        let single = preds.select_augmentations(&[1]).unwrap();
        assert_eq!(baseline_mean(&single), baseline_raw(&single));
    }

    #[test]
    fn gps_single_augmentation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let preds = random_probs(&mut rng, 20, 1, 3);
        let labels = random_labels(&mut rng, 20, 3);
        let agg = gps_search(&preds, &labels, 3).unwrap();
        assert_eq!(agg.method(), &Method::Gps(vec![0, 0, 0]));
        assert!(matches!(
            gps_search(&preds, &labels, 0),
            Err(TtaError::EmptySelectionPool)
        ));
    }

    #[test]
    fn predict_raw_is_slice_zero_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let preds = random_probs(&mut rng, 50, 4, 5);
        let labels = predict(&Aggregator::raw(4, 5), &preds).unwrap();
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(y, argmax_class(preds.row(i, 0)).unwrap());
        }
    }

    proptest! {
        #[test]
        fn aug_is_tied_class(seed in any::<u64>(), m in 1usize..6, c in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..3.0)).collect();
            let preds: Vec<f32> = (0..m * c).map(|_| rng.random_range(0.0f32..1.0)).collect();
            let tied: Vec<f64> = theta.iter().flat_map(|&t| std::iter::repeat_n(t, c)).collect();
            let a = forward_aug(&theta, &preds, m, c).unwrap();
            let b = forward_class(&tied, &preds, m, c).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
