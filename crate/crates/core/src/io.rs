//! Binary interchange formats and dataset splitting.
//!
//! All formats are little-endian:
//!
//! * predictions (`TTAP`): magic, `u32` version, `u8` kind (0 logits,
//!   1 probabilities), 3 zero bytes, `u64` N, M, C, then N·M·C `f32`.
//! * labels (`TTAL`): magic, `u32` version, `u64` N, `u64` C, then N `u32`.
//! * weights (`TTAW`): magic, `u32` version, `u8` mode (0 per augmentation,
//!   1 per augmentation-class), `u64` M, `u64` C, then M or M·C `f32`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TtaError};
use crate::scores::{AggregationWeights, LabeledSet, PredictionTensor, ScoreKind, WeightMode};

pub const PREDICTIONS_MAGIC: [u8; 4] = *b"TTAP";
pub const LABELS_MAGIC: [u8; 4] = *b"TTAL";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"TTAW";
pub const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or(TtaError::TruncatedFile {
            needed: usize::MAX,
            have: self.buf.len(),
        })?;
        if end > self.buf.len() {
            return Err(TtaError::TruncatedFile {
                needed: end,
                have: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != expected {
            return Err(TtaError::BadMagic { expected, found });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(TtaError::UnsupportedVersion(v));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .map_err(|_| TtaError::InvariantViolation(format!("dimension {v} too large")))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| TtaError::InvariantViolation("payload size overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(TtaError::InvariantViolation(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| TtaError::InvariantViolation("payload size overflows".into()))
}

pub fn encode_predictions(t: &PredictionTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + t.values().len() * 4);
    out.extend_from_slice(&PREDICTIONS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match t.kind() {
        ScoreKind::Logits => 0,
        ScoreKind::Probabilities => 1,
    });
    out.extend_from_slice(&[0, 0, 0]);
    for d in [t.n(), t.m(), t.c()] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_predictions(buf: &[u8]) -> Result<PredictionTensor> {
    let mut r = Reader::new(buf);
    r.magic(PREDICTIONS_MAGIC)?;
    r.version()?;
    let kind = match r.u8()? {
        0 => ScoreKind::Logits,
        1 => ScoreKind::Probabilities,
        other => {
            return Err(TtaError::InvariantViolation(format!(
                "score kind byte {other}"
            )))
        }
    };
    if r.take(3)? != [0, 0, 0] {
        return Err(TtaError::InvariantViolation("nonzero padding".into()));
    }
    let (n, m, c) = (r.dim()?, r.dim()?, r.dim()?);
    let values = r.f32s(product(&[n, m, c])?)?;
    r.finish()?;
    match PredictionTensor::new(n, m, c, kind, values) {
        Err(TtaError::NonFiniteInput) => Err(TtaError::InvariantViolation(
            "non-finite score in payload".into(),
        )),
        other => other,
    }
}

pub fn encode_labels(labels: &LabeledSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + labels.len() * 4);
    out.extend_from_slice(&LABELS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    out.extend_from_slice(&(labels.c() as u64).to_le_bytes());
    for &y in labels.labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    out
}

pub fn decode_labels(buf: &[u8]) -> Result<LabeledSet> {
    let mut r = Reader::new(buf);
    r.magic(LABELS_MAGIC)?;
    r.version()?;
    let n = r.dim()?;
    let c = r.u64()?;
    if n == 0 {
        return Err(TtaError::EmptySet);
    }
    let bytes = product(&[n, 4])?;
    let labels: Vec<usize> = r
        .take(bytes)?
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .map(|y| {
            if u64::from(y) >= c {
                Err(TtaError::LabelOutOfRange {
                    label: y.into(),
                    classes: c,
                })
            } else {
                Ok(y as usize)
            }
        })
        .collect::<Result<_>>()?;
    r.finish()?;
    if c < 2 {
        return Err(TtaError::InvariantViolation(format!("{c} classes")));
    }
    LabeledSet::new(labels, c as usize)
}

pub fn encode_weights(w: &AggregationWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(25 + w.values().len() * 4);
    out.extend_from_slice(&WEIGHTS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match w.mode() {
        WeightMode::PerAugmentation => 0,
        WeightMode::PerAugmentationClass => 1,
    });
    out.extend_from_slice(&(w.m() as u64).to_le_bytes());
    out.extend_from_slice(&(w.c() as u64).to_le_bytes());
    for v in w.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_weights(buf: &[u8]) -> Result<AggregationWeights> {
    let mut r = Reader::new(buf);
    r.magic(WEIGHTS_MAGIC)?;
    r.version()?;
    let mode = match r.u8()? {
        0 => WeightMode::PerAugmentation,
        1 => WeightMode::PerAugmentationClass,
        other => return Err(TtaError::UnsupportedMode(other)),
    };
    let (m, c) = (r.dim()?, r.dim()?);
    let count = match mode {
        WeightMode::PerAugmentation => m,
        WeightMode::PerAugmentationClass => product(&[m, c])?,
    };
    let values = r.f32s(count)?;
    r.finish()?;
    if let Some(&neg) = values.iter().find(|&&v| v < 0.0) {
        return Err(TtaError::NegativeWeight(neg));
    }
    match AggregationWeights::new(mode, m, c, values) {
        Err(TtaError::NonFiniteInput) => Err(TtaError::InvariantViolation(
            "non-finite weight in payload".into(),
        )),
        other => other,
    }
}

pub fn write_predictions(path: &Path, t: &PredictionTensor) -> Result<()> {
    std::fs::write(path, encode_predictions(t))?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<PredictionTensor> {
    decode_predictions(&std::fs::read(path)?)
}

pub fn write_labels(path: &Path, labels: &LabeledSet) -> Result<()> {
    std::fs::write(path, encode_labels(labels))?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<LabeledSet> {
    decode_labels(&std::fs::read(path)?)
}

pub fn write_weights(path: &Path, w: &AggregationWeights) -> Result<()> {
    std::fs::write(path, encode_weights(w))?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<AggregationWeights> {
    decode_weights(&std::fs::read(path)?)
}

/// Train / validation / test fractions for [`split_dataset`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    /// 40% train, 10% validation, 50% test.
    pub fn standard(seed: u64) -> Self {
        Self {
            train: 0.4,
            val: 0.1,
            test: 0.5,
            seed,
            stratified: false,
        }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(TtaError::DegenerateSplit(
                "fractions must be nonnegative".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TtaError::DegenerateSplit(format!("fractions sum to {sum}")));
        }
        Ok(())
    }
}

/// Disjoint, exhaustive index lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `0..n` by `spec`. Train and validation sizes are rounded
/// fractions of `n`; the remainder goes to test.
pub fn split_dataset(n: usize, labels: Option<&LabeledSet>, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if n < 3 {
        return Err(TtaError::DegenerateSplit(format!(
            "need at least 3 items, got {n}"
        )));
    }
    let train_size = ((spec.train * n as f64).round() as usize).min(n);
    let val_size = ((spec.val * n as f64).round() as usize).min(n - train_size);
    let test_size = n - train_size - val_size;
    for (name, frac, size) in [
        ("train", spec.train, train_size),
        ("val", spec.val, val_size),
        ("test", spec.test, test_size),
    ] {
        if frac > 0.0 && size == 0 {
            return Err(TtaError::DegenerateSplit(format!("{name} part is empty")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let order: Vec<usize> = match (spec.stratified, labels) {
        (true, Some(labels)) => {
            if labels.len() != n {
                return Err(TtaError::LengthMismatch {
                    left: labels.len(),
                    right: n,
                });
            }
            stratified_order(labels, &mut rng)
        }
        (true, None) => {
            return Err(TtaError::InvalidConfig(
                "stratified split needs labels".into(),
            ));
        }
        (false, _) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        }
    };

    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(Split {
        train: sorted(&order[..train_size]),
        val: sorted(&order[train_size..train_size + val_size]),
        test: sorted(&order[train_size + val_size..]),
    })
}

/// Interleaves shuffled classes so that any prefix holds each class in
/// proportion to its frequency.
fn stratified_order(labels: &LabeledSet, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.c()];
    for (i, &y) in labels.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(rng);
        let count = members.len() as f64;
        for (j, &i) in members.iter().enumerate() {
            keyed.push(((j as f64 + 0.5) / count, class, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Nested subsets of `indices` for dataset-size sweeps: one list per
/// increment, holding the first `round(f · len)` items of a seeded
/// permutation, so each list contains the previous one.
pub fn subsample_training(
    indices: &[usize],
    increments: &[f64],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if increments.iter().any(|f| !(0.0..=1.0).contains(f))
        || increments.windows(2).any(|w| w[1] < w[0])
    {
        return Err(TtaError::NonMonotoneIncrements);
    }
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(increments
        .iter()
        .map(|f| {
            let size = (f * order.len() as f64).round() as usize;
            order[..size].to_vec()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor() -> PredictionTensor {
        let vals: Vec<f32> = (0..12).map(|k| k as f32 * 0.25 - 1.0).collect();
        PredictionTensor::new(2, 3, 2, ScoreKind::Logits, vals).unwrap()
    }

    #[test]
    fn prediction_header_layout() {
        let bytes = encode_predictions(&tensor());
        assert_eq!(&bytes[..4], b"TTAP");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[0, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &2u64.to_le_bytes());
        assert_eq!(&bytes[20..28], &3u64.to_le_bytes());
        assert_eq!(&bytes[28..36], &2u64.to_le_bytes());
        assert_eq!(bytes.len(), 36 + 12 * 4);
        assert_eq!(&bytes[36..40], &(-1.0f32).to_le_bytes());
    }

    #[test]
    fn prediction_errors() {
        let mut bytes = encode_predictions(&tensor());
        assert_eq!(decode_predictions(&bytes).unwrap(), tensor());

        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_predictions(&bad),
            Err(TtaError::BadMagic { .. })
        ));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            decode_predictions(&bad),
            Err(TtaError::UnsupportedVersion(2))
        ));

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            decode_predictions(truncated),
            Err(TtaError::TruncatedFile { .. })
        ));
        assert!(matches!(
            decode_predictions(&bytes[..10]),
            Err(TtaError::TruncatedFile { .. })
        ));

        let at = bytes.len() - 4;
        bytes[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_predictions(&bytes),
            Err(TtaError::InvariantViolation(_))
        ));
    }

    #[test]
    fn label_errors() {
        let labels = LabeledSet::new(vec![0, 2, 1], 3).unwrap();
        let bytes = encode_labels(&labels);
        assert_eq!(decode_labels(&bytes).unwrap(), labels);

        let mut bad = bytes.clone();
        bad[24..28].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(
            decode_labels(&bad),
            Err(TtaError::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));

        let mut empty = Vec::new();
        empty.extend_from_slice(b"TTAL");
        empty.extend_from_slice(&1u32.to_le_bytes());
        empty.extend_from_slice(&0u64.to_le_bytes());
        empty.extend_from_slice(&3u64.to_le_bytes());
        assert!(matches!(decode_labels(&empty), Err(TtaError::EmptySet)));

        let mut bad = bytes;
        bad[0] = b'Z';
        assert!(matches!(
            decode_labels(&bad),
            Err(TtaError::BadMagic { .. })
        ));
    }

    #[test]
    fn weight_errors() {
        let w = AggregationWeights::new(
            WeightMode::PerAugmentationClass,
            2,
            2,
            vec![0.1, 0.0, 2.0, 0.5],
        )
        .unwrap();
        let bytes = encode_weights(&w);
        assert_eq!(bytes.len(), 4 + 4 + 1 + 8 + 8 + 16);
        assert_eq!(decode_weights(&bytes).unwrap(), w);

        let mut neg = bytes.clone();
        let at = neg.len() - 4;
        neg[at..].copy_from_slice(&(-0.1f32).to_le_bytes());
        assert!(matches!(decode_weights(&neg), Err(TtaError::NegativeWeight(v)) if v == -0.1));

        let mut mode = bytes.clone();
        mode[8] = 7;
        assert!(matches!(
            decode_weights(&mode),
            Err(TtaError::UnsupportedMode(7))
        ));

        let mut magic = bytes;
        magic[3] = b'P';
        assert!(matches!(
            decode_weights(&magic),
            Err(TtaError::BadMagic { .. })
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ttap");
        write_predictions(&p, &tensor()).unwrap();
        assert_eq!(read_predictions(&p).unwrap(), tensor());
        assert!(matches!(
            read_predictions(&dir.path().join("missing")),
            Err(TtaError::Io(_))
        ));
    }

    #[test]
    fn split_sizes() {
        let s = split_dataset(100, None, &SplitSpec::standard(1)).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (40, 10, 50));
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(
            s,
            split_dataset(100, None, &SplitSpec::standard(1)).unwrap()
        );
        assert_ne!(
            s,
            split_dataset(100, None, &SplitSpec::standard(2)).unwrap()
        );

        let all_train = SplitSpec {
            train: 1.0,
            val: 0.0,
            test: 0.0,
            seed: 0,
            stratified: false,
        };
        let s = split_dataset(10, None, &all_train).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 0, 0));

        let tiny_val = SplitSpec {
            train: 0.5,
            val: 0.01,
            test: 0.49,
            seed: 0,
            stratified: false,
        };
        assert!(matches!(
            split_dataset(10, None, &tiny_val),
            Err(TtaError::DegenerateSplit(_))
        ));
        let bad_sum = SplitSpec {
            train: 0.5,
            val: 0.1,
            test: 0.1,
            seed: 0,
            stratified: false,
        };
        assert!(split_dataset(10, None, &bad_sum).is_err());
        assert!(split_dataset(2, None, &SplitSpec::standard(0)).is_err());
    }

    #[test]
    fn stratified_split_balances_classes() {
        let labels: Vec<usize> = (0..200).map(|i| if i < 150 { 0 } else { 1 }).collect();
        let labels = LabeledSet::new(labels, 2).unwrap();
        let spec = SplitSpec {
            stratified: true,
            ..SplitSpec::standard(3)
        };
        let s = split_dataset(200, Some(&labels), &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 20, 100));
        let ones = |part: &[usize]| part.iter().filter(|&&i| labels.labels()[i] == 1).count();
        assert_eq!(ones(&s.train), 20);
        assert_eq!(ones(&s.val), 5);
        assert_eq!(ones(&s.test), 25);
    }

    #[test]
    fn nested_subsamples() {
        let pool: Vec<usize> = (100..200).collect();
        let base = subsample_training(&pool, &[0.0], 5).unwrap();
        assert_eq!(base, vec![Vec::<usize>::new()]);

        let increments: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let nested = subsample_training(&pool, &increments, 5).unwrap();
        for (k, set) in nested.iter().enumerate() {
            assert_eq!(set.len(), 10 * k);
            if k > 0 {
                assert!(nested[k - 1].iter().all(|i| set.contains(i)));
            }
        }
        let two = subsample_training(&pool, &[0.5, 1.0], 5).unwrap();
        assert!(two[0].iter().all(|i| two[1].contains(i)));
        assert!(matches!(
            subsample_training(&pool, &[0.5, 0.2], 5),
            Err(TtaError::NonMonotoneIncrements)
        ));
        assert!(subsample_training(&pool, &[1.5], 5).is_err());
    }
}
