//! Synthetic black-box classifiers with planted per-(augmentation, class)
//! behavior, a small linear softmax classifier for image experiments, and an
//! IDX reader for MNIST-format files.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::{AugmentationPolicy, Image};
use crate::error::{Result, TtaError};
use crate::scores::{AggregationWeights, LabeledSet, PredictionTensor, ScoreKind, WeightMode};

/// Smallest peak sharpness an emitted row may have; keeps the planted
/// argmax strict after rounding to `f32`.
const MIN_PEAK: f64 = 1e-3;

/// A simulated classifier evaluated under `m` augmentations.
///
/// For an input of class `y`, view `a` predicts `y` with probability
/// `correct_prob[a][y]` and `confusion_target[a][y]` otherwise. Views are
/// conditionally independent given the class unless `tied_slices` is set,
/// in which case every view repeats view 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    c: usize,
    m: usize,
    correct_prob: Vec<f64>,
    confusion_target: Vec<usize>,
    concentration: f64,
    seed: u64,
    tied_slices: bool,
}

impl SyntheticWorld {
    /// `correct_prob` and `confusion_target` are row-major `m × c`.
    pub fn new(
        c: usize,
        m: usize,
        correct_prob: Vec<f64>,
        confusion_target: Vec<usize>,
        concentration: f64,
        seed: u64,
    ) -> Result<Self> {
        if c < 2 || m < 1 {
            return Err(TtaError::InvariantViolation(format!(
                "world needs c >= 2, m >= 1 (c={c}, m={m})"
            )));
        }
        if correct_prob.len() != m * c || confusion_target.len() != m * c {
            return Err(TtaError::DimensionMismatch(
                "world tables must be m x c".into(),
            ));
        }
        if correct_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(TtaError::InvariantViolation(
                "correct_prob outside [0, 1]".into(),
            ));
        }
        for (k, &target) in confusion_target.iter().enumerate() {
            if target >= c || target == k % c {
                return Err(TtaError::InvariantViolation(format!(
                    "confusion target {target} invalid for class {}",
                    k % c
                )));
            }
        }
        if !(concentration > 0.0 && concentration.is_finite()) {
            return Err(TtaError::InvariantViolation(
                "concentration must be > 0".into(),
            ));
        }
        Ok(Self {
            c,
            m,
            correct_prob,
            confusion_target,
            concentration,
            seed,
            tied_slices: false,
        })
    }

    /// Every view correct with probability `p`; mistakes go to the next class.
    pub fn uniform(c: usize, m: usize, p: f64, concentration: f64, seed: u64) -> Result<Self> {
        let confusion = (0..m)
            .flat_map(|_| (0..c).map(move |y| (y + 1) % c))
            .collect();
        Self::new(c, m, vec![p; m * c], confusion, concentration, seed)
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn tied_slices(&self) -> bool {
        self.tied_slices
    }

    pub fn correct_prob(&self, aug: usize, class: usize) -> f64 {
        self.correct_prob[aug * self.c + class]
    }

    pub fn confusion_target(&self, aug: usize, class: usize) -> usize {
        self.confusion_target[aug * self.c + class]
    }

    /// Same world, different emission seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Probability that view `aug` votes `vote` for an input of class `y`.
    pub fn vote_prob(&self, aug: usize, y: usize, vote: usize) -> f64 {
        let p = self.correct_prob(aug, y);
        if vote == y {
            p
        } else if vote == self.confusion_target(aug, y) {
            1.0 - p
        } else {
            0.0
        }
    }

    /// Accuracy of view 0 alone.
    pub fn raw_accuracy(&self) -> f64 {
        (0..self.c).map(|y| self.correct_prob(0, y)).sum::<f64>() / self.c as f64
    }

    /// Accuracy of the Bayes-optimal rule on the vote pattern, by
    /// enumerating all `c^m` patterns (uniform class prior).
    pub fn bayes_vote_accuracy(&self) -> f64 {
        let views = if self.tied_slices { 1 } else { self.m };
        let patterns = self.c.pow(views as u32);
        let mut total = 0.0;
        for code in 0..patterns {
            let mut votes = Vec::with_capacity(views);
            let mut rest = code;
            for _ in 0..views {
                votes.push(rest % self.c);
                rest /= self.c;
            }
            let best = (0..self.c)
                .map(|y| {
                    votes
                        .iter()
                        .enumerate()
                        .map(|(a, &v)| self.vote_prob(a, y, v))
                        .product::<f64>()
                })
                .fold(0.0, f64::max);
            total += best / self.c as f64;
        }
        total
    }
}

/// Samples `n` labeled inputs and the probability rows every view emits.
///
/// Each row puts `1/c + (1 - 1/c)·t` on the voted class and splits the rest
/// evenly, with `t = u^(1/concentration)` for `u ~ U(0, 1]`.
pub fn emit(world: &SyntheticWorld, n: usize) -> Result<(PredictionTensor, LabeledSet)> {
    if n == 0 {
        return Err(TtaError::EmptySet);
    }
    let (m, c) = (world.m, world.c);
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * m * c);
    let mut row = vec![0f32; c];
    for _ in 0..n {
        let y = rng.random_range(0..c);
        labels.push(y);
        let fresh_views = if world.tied_slices { 1 } else { m };
        let start = values.len();
        for aug in 0..fresh_views {
            let vote = if rng.random::<f64>() < world.correct_prob(aug, y) {
                y
            } else {
                world.confusion_target(aug, y)
            };
            let u = 1.0 - rng.random::<f64>();
            let t = u.powf(1.0 / world.concentration).max(MIN_PEAK);
            let top = 1.0 / c as f64 + (1.0 - 1.0 / c as f64) * t;
            let rest = ((1.0 - top) / (c - 1) as f64) as f32;
            row.fill(rest);
            row[vote] = top as f32;
            values.extend_from_slice(&row);
        }
        for _ in fresh_views..m {
            values.extend_from_within(start..start + c);
        }
    }
    Ok((
        PredictionTensor::new(n, m, c, ScoreKind::Probabilities, values)?,
        LabeledSet::new(labels, c)?,
    ))
}

/// The degenerate world where every view repeats the identity view.
pub fn invariant_world(base: &SyntheticWorld) -> SyntheticWorld {
    SyntheticWorld {
        tied_slices: true,
        ..base.clone()
    }
}

/// Two classes, two views. The identity view is strong on class 0 and weak
/// on class 1; the second view is better on class 1 but much worse on
/// class 0. Averaging the views hurts, a single global weight cannot beat
/// the identity view, and per-class weights can.
pub fn planted_class_asymmetry(seed: u64) -> SyntheticWorld {
    SyntheticWorld::new(
        2,
        2,
        vec![
            0.98, 0.40, // identity view
            0.72, 0.60, // second view
        ],
        vec![1, 0, 1, 0],
        8.0,
        seed,
    )
    .expect("planted world is valid")
}

/// Per-(view, class) weights realizing the Bayes vote rule of a two-class
/// world in the limit of one-hot rows: the log-likelihood ratio of each
/// view's vote. Views whose votes carry no positive evidence get weight 0.
pub fn bayes_optimal_weights(world: &SyntheticWorld) -> Result<AggregationWeights> {
    if world.c != 2 || world.tied_slices {
        return Err(TtaError::InvariantViolation(
            "closed-form weights need an untied two-class world".into(),
        ));
    }
    let mut values = Vec::with_capacity(world.m * 2);
    for aug in 0..world.m {
        for class in 0..2 {
            let other = 1 - class;
            // evidence for `class` carried by a vote for `class`
            let ratio = world.vote_prob(aug, class, class) / world.vote_prob(aug, other, class);
            let w = if ratio.is_finite() {
                ratio.ln().max(0.0)
            } else {
                f64::from(f32::MAX).ln()
            };
            values.push(w as f32);
        }
    }
    AggregationWeights::new(WeightMode::PerAugmentationClass, world.m, 2, values)
}

/// Settings for [`train_toy`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToyConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Linear softmax classifier over `pixel / 255` features.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    width: u32,
    height: u32,
    channels: u8,
    classes: usize,
    /// Row-major `classes × features`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    config: ToyConfig,
    train_indices: Vec<usize>,
}

impl ToyClassifier {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    /// Indices of the images the classifier was fit on.
    pub fn train_indices(&self) -> &[usize] {
        &self.train_indices
    }

    pub fn logits(&self, img: &Image) -> Result<Vec<f64>> {
        if (img.width(), img.height(), img.channels()) != (self.width, self.height, self.channels) {
            return Err(TtaError::DimensionMismatch(format!(
                "classifier expects {}x{}x{}, got {}x{}x{}",
                self.width,
                self.height,
                self.channels,
                img.width(),
                img.height(),
                img.channels()
            )));
        }
        Ok(self.logits_of(&features(img)))
    }

    fn logits_of(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        (0..self.classes)
            .map(|k| {
                let w = &self.weights[k * d..(k + 1) * d];
                self.bias[k] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, img: &Image) -> Result<usize> {
        crate::scores::argmax_class(&self.logits(img)?)
    }
}

fn features(img: &Image) -> Vec<f64> {
    img.pixels().iter().map(|&p| p as f64 / 255.0).collect()
}

/// Fits a [`ToyClassifier`] by minibatch gradient descent on a seeded
/// `train_fraction` of the images. The subset for a smaller fraction is a
/// prefix of the subset for a larger one under the same seed.
pub fn train_toy(
    images: &[Image],
    labels: &LabeledSet,
    train_fraction: f64,
    cfg: &ToyConfig,
) -> Result<ToyClassifier> {
    if images.is_empty() {
        return Err(TtaError::EmptyTrainingSet);
    }
    if images.len() != labels.len() {
        return Err(TtaError::LengthMismatch {
            left: images.len(),
            right: labels.len(),
        });
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(TtaError::InvalidConfig(format!(
            "train_fraction {train_fraction} outside (0, 1]"
        )));
    }
    if cfg.epochs == 0
        || cfg.batch_size == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate <= 0.0
    {
        return Err(TtaError::InvalidConfig(
            "toy config needs positive epochs, batch size and rate".into(),
        ));
    }
    let first = &images[0];
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    if images
        .iter()
        .any(|im| (im.width(), im.height(), im.channels()) != (w, h, ch))
    {
        return Err(TtaError::DimensionMismatch("images differ in shape".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut rng);
    let size = ((train_fraction * images.len() as f64).round() as usize).max(1);
    let mut subset = order[..size].to_vec();

    let classes = labels.c();
    let d = first.pixels().len();
    let xs: Vec<Vec<f64>> = subset.iter().map(|&i| features(&images[i])).collect();
    let ys: Vec<usize> = subset.iter().map(|&i| labels.labels()[i]).collect();

    let mut clf = ToyClassifier {
        width: w,
        height: h,
        channels: ch,
        classes,
        weights: vec![0.0; classes * d],
        bias: vec![0.0; classes],
        config: cfg.clone(),
        train_indices: Vec::new(),
    };
    let mut local: Vec<usize> = (0..size).collect();
    let mut grad_w = vec![0.0; classes * d];
    let mut grad_b = vec![0.0; classes];
    for _ in 0..cfg.epochs {
        local.shuffle(&mut rng);
        for batch in local.chunks(cfg.batch_size) {
            grad_w.fill(0.0);
            grad_b.fill(0.0);
            for &j in batch {
                let probs = crate::scores::softmax(&clf.logits_of(&xs[j]))?;
                for (k, p) in probs.iter().enumerate() {
                    let err = p - if k == ys[j] { 1.0 } else { 0.0 };
                    grad_b[k] += err;
                    for (g, x) in grad_w[k * d..(k + 1) * d].iter_mut().zip(&xs[j]) {
                        *g += err * x;
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (wt, g) in clf.weights.iter_mut().zip(&grad_w) {
                *wt -= step * g;
            }
            for (b, g) in clf.bias.iter_mut().zip(&grad_b) {
                *b -= step * g;
            }
        }
    }
    if clf.weights.iter().chain(&clf.bias).any(|v| !v.is_finite()) {
        return Err(TtaError::NonFiniteInput);
    }
    subset.sort_unstable();
    clf.train_indices = subset;
    Ok(clf)
}

/// Runs the classifier over every policy view of every image and packs the
/// logits (identity view at index 0).
pub fn toy_logits(
    clf: &ToyClassifier,
    images: &[Image],
    policy: &AugmentationPolicy,
) -> Result<PredictionTensor> {
    let (m, c) = (policy.len(), clf.classes);
    let mut values = Vec::with_capacity(images.len() * m * c);
    for img in images {
        for spec in policy.specs() {
            let view = spec.apply(img)?;
            values.extend(clf.logits(&view)?.into_iter().map(|v| v as f32));
        }
    }
    PredictionTensor::new(images.len(), m, c, ScoreKind::Logits, values)
}

/// Single-channel images whose class templates are symmetric under both
/// horizontal and vertical flips, plus independent Gaussian pixel noise.
pub fn symmetric_blobs(
    n: usize,
    classes: usize,
    side: u32,
    noise_std: f64,
    seed: u64,
) -> Result<(Vec<Image>, LabeledSet)> {
    if classes < 2 || side == 0 {
        return Err(TtaError::InvalidConfig(
            "need >= 2 classes and a positive side".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = side.div_ceil(2);
    let templates: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..half * half)
                .map(|_| rng.random_range(40.0..215.0))
                .collect()
        })
        .collect();
    let noise =
        Normal::new(0.0, noise_std).map_err(|e| TtaError::InvalidConfig(format!("noise: {e}")))?;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..classes);
        let template = &templates[y];
        let img = Image::from_fn(side, side, 1, |x, yy, _| {
            let qx = x.min(side - 1 - x);
            let qy = yy.min(side - 1 - yy);
            let v = template[(qy * half + qx) as usize] + noise.sample(&mut rng);
            v.round().clamp(0.0, 255.0) as u8
        })?;
        images.push(img);
        labels.push(y);
    }
    Ok((images, LabeledSet::new(labels, classes)?))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(TtaError::TruncatedFile {
            needed: at + 4,
            have: buf.len(),
        })
}

/// Decodes an IDX3 `u8` image file (16-byte header, big-endian dims).
pub fn decode_idx_images(buf: &[u8]) -> Result<Vec<Image>> {
    let magic = be_u32(buf, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(TtaError::BadMagic {
            expected: IDX_IMAGES_MAGIC.to_be_bytes(),
            found: magic.to_be_bytes(),
        });
    }
    let count = be_u32(buf, 4)? as usize;
    let rows = be_u32(buf, 8)?;
    let cols = be_u32(buf, 12)?;
    let per = rows as usize * cols as usize;
    let needed = 16 + count * per;
    if buf.len() < needed {
        return Err(TtaError::TruncatedFile {
            needed,
            have: buf.len(),
        });
    }
    buf[16..needed]
        .chunks_exact(per.max(1))
        .take(count)
        .map(|px| Image::new(cols, rows, 1, px.to_vec()))
        .collect()
}

/// Decodes an IDX1 `u8` label file (8-byte header).
pub fn decode_idx_labels(buf: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(buf, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(TtaError::BadMagic {
            expected: IDX_LABELS_MAGIC.to_be_bytes(),
            found: magic.to_be_bytes(),
        });
    }
    let count = be_u32(buf, 4)? as usize;
    let needed = 8 + count;
    if buf.len() < needed {
        return Err(TtaError::TruncatedFile {
            needed,
            have: buf.len(),
        });
    }
    Ok(buf[8..needed].to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<Vec<Image>> {
    decode_idx_images(&std::fs::read(path)?)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    decode_idx_labels(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::flips_policy;
    use crate::scores::argmax_class;

    fn slice_accuracy(preds: &PredictionTensor, labels: &LabeledSet, aug: usize) -> f64 {
        let hits = (0..preds.n())
            .filter(|&i| argmax_class(preds.row(i, aug)).unwrap() == labels.labels()[i])
            .count();
        hits as f64 / preds.n() as f64
    }

    #[test]
    fn perfect_world_is_always_right() {
        let world = SyntheticWorld::uniform(4, 3, 1.0, 2.0, 1).unwrap();
        let (preds, labels) = emit(&world, 500).unwrap();
        for aug in 0..3 {
            assert_eq!(slice_accuracy(&preds, &labels, aug), 1.0);
        }
    }

    #[test]
    fn planted_accuracy_is_respected() {
        let world = SyntheticWorld::uniform(3, 2, 0.7, 3.0, 11).unwrap();
        let (preds, labels) = emit(&world, 10_000).unwrap();
        for aug in 0..2 {
            assert!((slice_accuracy(&preds, &labels, aug) - 0.7).abs() <= 0.02);
        }
    }

    #[test]
    fn emission_is_deterministic() {
        let world = planted_class_asymmetry(5);
        assert_eq!(emit(&world, 300).unwrap(), emit(&world, 300).unwrap());
        assert_ne!(
            emit(&world, 300).unwrap().0,
            emit(&world.with_seed(6), 300).unwrap().0
        );
    }

    #[test]
    fn invariant_world_slices_identical() {
        let world = invariant_world(&SyntheticWorld::uniform(3, 4, 0.6, 2.0, 3).unwrap());
        let (preds, _) = emit(&world, 200).unwrap();
        for i in 0..preds.n() {
            for aug in 1..4 {
                let a: Vec<u32> = preds.row(i, 0).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = preds.row(i, aug).iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
        }
        assert_eq!(crate::metrics::agreement(&preds), vec![1.0; 4]);
    }

    #[test]
    fn world_validation() {
        assert!(SyntheticWorld::new(2, 1, vec![0.5, 1.5], vec![1, 0], 1.0, 0).is_err());
        assert!(SyntheticWorld::new(2, 1, vec![0.5, 0.5], vec![0, 0], 1.0, 0).is_err());
        assert!(SyntheticWorld::new(2, 1, vec![0.5, 0.5], vec![1, 0], 0.0, 0).is_err());
    }

    #[test]
    fn planted_world_shape() {
        let w = planted_class_asymmetry(0);
        assert!(w.correct_prob(1, 1) > w.correct_prob(0, 1));
        assert!(w.correct_prob(1, 0) < w.correct_prob(0, 0));
        assert!(w.bayes_vote_accuracy() > w.raw_accuracy() + 0.03);
    }

    #[test]
    fn bayes_weights_closed_form() {
        let w = planted_class_asymmetry(0);
        let weights = bayes_optimal_weights(&w).unwrap();
        let v = weights.values();
        let close = |a: f32, b: f64| (a as f64 - b).abs() < 1e-6;
        assert!(close(v[0], (0.98f64 / 0.60).ln()));
        assert!(close(v[1], (0.40f64 / 0.02).ln()));
        assert!(close(v[2], (0.72f64 / 0.40).ln()));
        assert!(close(v[3], (0.60f64 / 0.28).ln()));
    }

    #[test]
    fn toy_separates_blobs() {
        let (images, labels) = symmetric_blobs(400, 3, 8, 10.0, 2).unwrap();
        let clf = train_toy(&images, &labels, 1.0, &ToyConfig::default()).unwrap();
        let hits = images
            .iter()
            .zip(labels.labels())
            .filter(|(im, &y)| clf.predict(im).unwrap() == y)
            .count();
        assert!(hits as f64 / 400.0 >= 0.95);
        let again = train_toy(&images, &labels, 1.0, &ToyConfig::default()).unwrap();
        assert_eq!(clf, again);

        let logits = toy_logits(&clf, &images[..10], &flips_policy()).unwrap();
        assert_eq!((logits.n(), logits.m(), logits.c()), (10, 3, 3));
        assert_eq!(logits.kind(), ScoreKind::Logits);
    }

    #[test]
    fn toy_subsets_are_nested() {
        let (images, labels) = symmetric_blobs(200, 2, 4, 30.0, 8).unwrap();
        let cfg = ToyConfig {
            epochs: 1,
            ..Default::default()
        };
        let small = train_toy(&images, &labels, 0.1, &cfg).unwrap();
        let large = train_toy(&images, &labels, 0.5, &cfg).unwrap();
        assert_eq!(small.train_indices().len(), 20);
        assert!(small
            .train_indices()
            .iter()
            .all(|i| large.train_indices().contains(i)));
        assert!(matches!(
            train_toy(&[], &labels, 0.5, &cfg),
            Err(TtaError::EmptyTrainingSet)
        ));
        assert!(train_toy(&images, &labels, 0.0, &cfg).is_err());
    }

    #[test]
    fn idx_roundtrip() {
        let mut buf = Vec::new();
        buf.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        buf.extend_from_slice(&2u32.to_be_bytes());
        buf.extend_from_slice(&2u32.to_be_bytes());
        buf.extend_from_slice(&3u32.to_be_bytes());
        buf.extend((0..12).map(|v| v as u8));
        let imgs = decode_idx_images(&buf).unwrap();
        assert_eq!(imgs.len(), 2);
        assert_eq!((imgs[1].width(), imgs[1].height()), (3, 2));
        assert_eq!(imgs[1].pixels(), &[6, 7, 8, 9, 10, 11]);
        assert!(matches!(
            decode_idx_images(&buf[..20]),
            Err(TtaError::TruncatedFile { .. })
        ));

        let mut lbl = Vec::new();
        lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&3u32.to_be_bytes());
        lbl.extend_from_slice(&[7, 1, 9]);
        assert_eq!(decode_idx_labels(&lbl).unwrap(), vec![7, 1, 9]);
        assert!(matches!(
            decode_idx_labels(&buf),
            Err(TtaError::BadMagic { .. })
        ));
    }
}
