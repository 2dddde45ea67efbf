//! Accuracy, prediction-change diagnostics, augmentation agreement and
//! paired significance testing over test-set subsamples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TtaError};
use crate::scores::{argmax_class, LabeledSet, PredictionTensor};

/// Version of the JSON evaluation report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(TtaError::LengthMismatch { left, right });
    }
    Ok(())
}

/// Fraction of predictions equal to the truth. Empty input scores 0.
pub fn accuracy(pred: &[usize], truth: &LabeledSet) -> Result<f64> {
    check_len(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let correct = pred
        .iter()
        .zip(truth.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / pred.len() as f64)
}

/// Predictions changed by TTA relative to the raw model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    /// Raw wrong, TTA right (percent of all inputs).
    pub corrected_pct: f64,
    /// Raw right, TTA wrong (percent of all inputs).
    pub corrupted_pct: f64,
    pub net_pct: f64,
    pub corrected_indices: Vec<usize>,
    pub corrupted_indices: Vec<usize>,
}

pub fn corrections_corruptions(
    raw: &[usize],
    tta: &[usize],
    truth: &LabeledSet,
) -> Result<ChangeReport> {
    check_len(raw.len(), tta.len())?;
    check_len(raw.len(), truth.len())?;
    let mut corrected_indices = Vec::new();
    let mut corrupted_indices = Vec::new();
    for (i, ((&r, &t), &y)) in raw.iter().zip(tta).zip(truth.labels()).enumerate() {
        match (r == y, t == y) {
            (false, true) => corrected_indices.push(i),
            (true, false) => corrupted_indices.push(i),
            _ => {}
        }
    }
    let pct = |k: usize| {
        if raw.is_empty() {
            0.0
        } else {
            100.0 * k as f64 / raw.len() as f64
        }
    };
    let corrected_pct = pct(corrected_indices.len());
    let corrupted_pct = pct(corrupted_indices.len());
    Ok(ChangeReport {
        corrected_pct,
        corrupted_pct,
        net_pct: corrected_pct - corrupted_pct,
        corrected_indices,
        corrupted_indices,
    })
}

/// For each augmentation, the fraction of inputs whose predicted class
/// matches the identity view's.
pub fn agreement(preds: &PredictionTensor) -> Vec<f64> {
    let n = preds.n();
    let base: Vec<usize> = (0..n)
        .map(|i| argmax_class(preds.row(i, 0)).expect("c >= 2"))
        .collect();
    (0..preds.m())
        .map(|aug| {
            let same = (0..n)
                .filter(|&i| argmax_class(preds.row(i, aug)).expect("c >= 2") == base[i])
                .count();
            same as f64 / n as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub dof: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_difference: f64,
    /// Sample standard deviation of the differences.
    pub std_difference: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult> {
    check_len(a.len(), b.len())?;
    let k = a.len();
    if k < 2 {
        return Err(TtaError::TooFewSamples { needed: 2, got: k });
    }
    let kf = k as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / kf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    if var <= 0.0 {
        return Err(TtaError::DegenerateVariance);
    }
    let sd = var.sqrt();
    let t = mean / (sd / kf.sqrt());
    let dof = k - 1;
    Ok(SignificanceResult {
        t_statistic: t,
        p_value: student_t_two_sided_p(t, dof as f64),
        dof,
        mean_a: a.iter().sum::<f64>() / kf,
        mean_b: b.iter().sum::<f64>() / kf,
        mean_difference: mean,
        std_difference: sd,
    })
}

/// `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = dof / (dof + t * t);
    regularized_incomplete_beta(x, dof / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Lanczos approximation (g = 7, 9 terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (k, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + k as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` via the continued fraction (modified Lentz).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(TtaError::TooFewSamples {
            needed: 2,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(TtaError::NonFiniteInput);
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(TtaError::DegenerateVariance);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Accuracy of one method across the shared subsamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleAccuracy {
    pub method: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (k - 1 denominator).
    pub std: f64,
}

/// Scores every method on the same `k` seeded subsamples (without
/// replacement) of `round(frac · n)` inputs each.
pub fn subsample_eval(
    methods: &[(&str, &[usize])],
    truth: &LabeledSet,
    k: usize,
    frac: f64,
    seed: u64,
) -> Result<Vec<SubsampleAccuracy>> {
    if k < 2 {
        return Err(TtaError::TooFewSamples { needed: 2, got: k });
    }
    if !(0.0..=1.0).contains(&frac) {
        return Err(TtaError::InvalidConfig(format!(
            "subsample fraction {frac} outside [0, 1]"
        )));
    }
    for (_, pred) in methods {
        check_len(pred.len(), truth.len())?;
    }
    let n = truth.len();
    let size = (frac * n as f64).round() as usize;
    if size == 0 {
        return Err(TtaError::EmptySubsample);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let samples: Vec<Vec<usize>> = (0..k)
        .map(|_| {
            order.shuffle(&mut rng);
            order[..size].to_vec()
        })
        .collect();
    let y = truth.labels();
    Ok(methods
        .iter()
        .map(|(name, pred)| {
            let accuracies: Vec<f64> = samples
                .iter()
                .map(|s| s.iter().filter(|&&i| pred[i] == y[i]).count() as f64 / size as f64)
                .collect();
            let mean = accuracies.iter().sum::<f64>() / k as f64;
            let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            SubsampleAccuracy {
                method: name.to_string(),
                accuracies,
                mean,
                std: var.sqrt(),
            }
        })
        .collect())
}

/// JSON evaluation report written by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub c: usize,
    pub accuracy: f64,
    pub raw_accuracy: f64,
    pub change_vs_raw: ChangeReport,
    pub agreement: Vec<f64>,
    pub subsamples: Vec<SubsampleAccuracy>,
    /// Paired test of the method against raw over the subsamples; absent
    /// when the differences have zero variance.
    pub significance_vs_raw: Option<SignificanceResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gps_selection: Option<Vec<usize>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::ScoreKind;
    use proptest::prelude::*;

    fn labels(v: &[usize], c: usize) -> LabeledSet {
        LabeledSet::new(v.to_vec(), c).unwrap()
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(
            spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0
        );
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]).unwrap(), -1.0);
        // scipy.stats.spearmanr([1,2,3,4],[1,3,3,2]) = 0.3162277660168379
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 3.0, 2.0]).unwrap();
        assert!((r - 0.316_227_766_016_837_9).abs() < 1e-12);
        assert!(matches!(
            spearman(&[1.0, 2.0], &[5.0, 5.0]),
            Err(TtaError::DegenerateVariance)
        ));
    }

    #[test]
    fn accuracy_cases() {
        let t = labels(&[0, 0, 1, 1], 2);
        assert_eq!(accuracy(&[0, 0, 1, 1], &t).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 0, 0], &t).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &t).unwrap(), 0.5);
        assert!(matches!(
            accuracy(&[0], &t),
            Err(TtaError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn change_report_cases() {
        let t = labels(&[0, 0, 1, 1], 2);
        let same = corrections_corruptions(&[0, 1, 1, 0], &[0, 1, 1, 0], &t).unwrap();
        assert_eq!(
            (same.corrected_pct, same.corrupted_pct, same.net_pct),
            (0.0, 0.0, 0.0)
        );

        let r = corrections_corruptions(&[0, 1, 1, 0], &[0, 0, 0, 0], &t).unwrap();
        assert_eq!(r.corrected_pct, 25.0);
        assert_eq!(r.corrupted_pct, 25.0);
        assert_eq!(r.net_pct, 0.0);
        assert_eq!(r.corrected_indices, vec![1]);
        assert_eq!(r.corrupted_indices, vec![2]);

        let all = corrections_corruptions(&[1, 1, 0, 0], &[0, 0, 1, 1], &t).unwrap();
        assert_eq!(all.corrected_pct, 100.0);
        assert!(corrections_corruptions(&[0], &[0, 1], &t).is_err());
    }

    #[test]
    fn agreement_cases() {
        let same = PredictionTensor::new(
            2,
            3,
            2,
            ScoreKind::Logits,
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(agreement(&same), vec![1.0, 1.0, 1.0]);

        // 3 inputs, aug 1 flips the argmax on input 2 only
        let t = PredictionTensor::new(
            3,
            2,
            2,
            ScoreKind::Logits,
            vec![2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 0.0, 2.0, 1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let a = agreement(&t);
        assert_eq!(a[0], 1.0);
        assert!((a[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn t_test_degenerate_and_zero_mean() {
        assert!(matches!(
            paired_t_test(&[0.5, 0.6, 0.7], &[0.5, 0.6, 0.7]),
            Err(TtaError::DegenerateVariance)
        ));
        let b = [0.0; 6];
        let r = paired_t_test(&[1.0, -1.0, 1.0, -1.0, 0.0, 0.0], &b).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.dof, 5);
        assert!(matches!(
            paired_t_test(&[1.0], &[0.0]),
            Err(TtaError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn t_test_matches_high_precision_reference() {
        // mpmath (50 digits): diffs = [0.5, 0.6, 0.4, 0.5, 0.5]
        let r = paired_t_test(&[0.5, 0.6, 0.4, 0.5, 0.5], &[0.0; 5]).unwrap();
        assert!((r.t_statistic - 15.811_388_300_841_896).abs() < 1e-6);
        assert!((r.p_value - 9.349_274_639_994_456e-5).abs() < 1e-6);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_edges() {
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 3.0), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 3.0), 1.0);
        // I_x(1, 1) = x
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
        // dof = 1: p = 1 - 2 atan(|t|) / pi
        let p = student_t_two_sided_p(1.0, 1.0);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subsample_cases() {
        let t = labels(&[0, 1, 0, 1, 0, 1, 0, 1], 2);
        let constant = vec![0; 8];
        let res = subsample_eval(&[("c", &constant)], &t, 5, 0.5, 3).unwrap();
        assert_eq!(res[0].accuracies.len(), 5);

        let all_right = t.labels().to_vec();
        let res = subsample_eval(&[("r", &all_right)], &t, 4, 0.5, 3).unwrap();
        assert_eq!(res[0].std, 0.0);
        assert_eq!(res[0].mean, 1.0);

        let pred = vec![0, 0, 0, 1, 1, 1, 0, 0];
        let full = subsample_eval(&[("p", &pred)], &t, 3, 1.0, 9).unwrap();
        assert_eq!(full[0].std, 0.0);
        assert_eq!(full[0].mean, accuracy(&pred, &t).unwrap());

        assert!(matches!(
            subsample_eval(&[("p", &pred)], &t, 3, 0.01, 9),
            Err(TtaError::EmptySubsample)
        ));
        assert!(subsample_eval(&[("p", &pred)], &t, 1, 0.5, 9).is_err());
    }

    #[test]
    fn subsample_replays_manual_resample() {
        let t = labels(&[0, 1, 0, 1, 1, 1], 2);
        let pred = vec![0, 0, 0, 1, 0, 1];
        let res = subsample_eval(&[("p", &pred)], &t, 2, 0.5, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut order: Vec<usize> = (0..6).collect();
        for s in 0..2 {
            order.shuffle(&mut rng);
            let hits = order[..3]
                .iter()
                .filter(|&&i| pred[i] == t.labels()[i])
                .count();
            assert_eq!(res[0].accuracies[s], hits as f64 / 3.0);
        }
    }

    proptest! {
        #[test]
        fn t_test_antisymmetric(a in prop::collection::vec(0.0f64..1.0, 2..10), shift in prop::collection::vec(-0.2f64..0.2, 10)) {
            let b: Vec<f64> = a.iter().zip(&shift).map(|(x, s)| x + s).collect();
            if let (Ok(ab), Ok(ba)) = (paired_t_test(&a, &b), paired_t_test(&b, &a)) {
                prop_assert!((ab.t_statistic + ba.t_statistic).abs() < 1e-9 * (1.0 + ab.t_statistic.abs()));
                prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&ab.p_value));
            }
        }

        #[test]
        fn changes_partition(raw in prop::collection::vec(0usize..3, 1..40), seed in any::<u64>()) {
            let n = raw.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng;
            let tta: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let truth = LabeledSet::new((0..n).map(|_| rng.random_range(0..3)).collect(), 3).unwrap();
            let r = corrections_corruptions(&raw, &tta, &truth).unwrap();
            prop_assert!(r.corrected_pct + r.corrupted_pct <= 100.0 + 1e-9);
            prop_assert!((r.net_pct - (r.corrected_pct - r.corrupted_pct)).abs() < 1e-9);
            for i in &r.corrected_indices {
                prop_assert!(!r.corrupted_indices.contains(i));
                prop_assert!(raw[*i] != tta[*i]);
            }
            for i in &r.corrupted_indices {
                prop_assert!(raw[*i] != tta[*i]);
            }
        }

        #[test]
        fn agreement_ignores_monotone_rescaling(vals in prop::collection::vec(-5.0f32..5.0, 24)) {
            let t = PredictionTensor::new(2, 4, 3, ScoreKind::Logits, vals.clone()).unwrap();
            let mapped: Vec<f32> = vals.iter().map(|v| 4.0 * v).collect();
            let u = PredictionTensor::new(2, 4, 3, ScoreKind::Logits, mapped).unwrap();
            prop_assert_eq!(agreement(&t), agreement(&u));
        }
    }
}
