use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use tta_core::aggregate::{self, Aggregator, TrainConfig};
use tta_core::augment::{
    expanded_policy, flips_policy, resize_bilinear, standard_policy, AugmentationPolicy, Image,
};
use tta_core::io;
use tta_core::metrics::{self, EvalReport, REPORT_SCHEMA_VERSION};
use tta_core::simulate::{self, SyntheticWorld, ToyConfig};
use tta_core::{LabeledSet, PredictionTensor, TtaError, WeightMode};

use crate::manifest::ManifestBuilder;
use crate::{
    thread_pool, write_json, AugmentArgs, EvalArgs, Failure, LearnArgs, MethodArg, ModeArg,
    Scenario, SimulateArgs,
};

/// Train fractions of the dataset-size scenario.
pub const DATASIZE_FRACTIONS: [f64; 6] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0];
const DATASIZE_CLASSES: usize = 4;
const DATASIZE_SIDE: u32 = 8;
const DATASIZE_NOISE: f64 = 120.0;

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("manifest.json")
}

fn resolve_policy(name: &str, crop_size: u32) -> Result<AugmentationPolicy, Failure> {
    match name {
        "standard" => Ok(standard_policy(crop_size)?),
        "expanded" => Ok(expanded_policy()),
        "flips" => Ok(flips_policy()),
        other if Path::new(other).is_file() => {
            Ok(AugmentationPolicy::read_manifest(Path::new(other))?)
        }
        other => Err(Failure::Usage(format!(
            "unknown policy {other:?}: not a built-in name or a file"
        ))),
    }
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_at(dir, e))? {
        let path = entry.map_err(|e| io_at(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn augment(a: &AugmentArgs, args: &[String]) -> Result<(), Failure> {
    let mut manifest = ManifestBuilder::new("augment", args);
    let policy = resolve_policy(&a.policy, a.crop_size)?;
    let files = png_files(&a.images)?;
    if files.is_empty() {
        return Err(Failure::Usage(format!(
            "no PNG images in {}",
            a.images.display()
        )));
    }
    if a.resize == Some(0) {
        return Err(Failure::Usage("--resize must be positive".into()));
    }
    std::fs::create_dir_all(&a.out)?;

    let pool = thread_pool()?;
    pool.install(|| {
        files
            .par_iter()
            .try_for_each(|path| -> Result<(), TtaError> {
                let mut img = Image::load_png(path)?;
                if let Some(side) = a.resize {
                    img = resize_bilinear(&img, side, side)?;
                }
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
                for (idx, spec) in policy.specs().iter().enumerate() {
                    spec.apply(&img)?
                        .save_png(&a.out.join(format!("{stem}_{idx:03}.png")))?;
                }
                Ok(())
            })
    })?;

    let policy_path = a.out.join("policy.tsv");
    policy.write_manifest(&policy_path)?;
    manifest
        .config("policy", &a.policy)
        .config("policy_size", policy.len())
        .config("crop_size", a.crop_size)
        .config("resize", a.resize)
        .config("images", files.len())
        .input(&a.images)
        .output(&a.out)
        .output(&policy_path);
    manifest.finish(&a.out.join("run_manifest.json"))?;
    println!(
        "wrote {} views of {} images to {}",
        policy.len(),
        files.len(),
        a.out.display()
    );
    Ok(())
}

fn io_at(path: &Path, err: std::io::Error) -> Failure {
    TtaError::Io(std::io::Error::new(
        err.kind(),
        format!("{}: {err}", path.display()),
    ))
    .into()
}

/// Prefixes I/O errors with the offending path.
fn at_path<T>(path: &Path, r: tta_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        TtaError::Io(err) => io_at(path, err),
        other => other.into(),
    })
}

fn read_pair(preds: &Path, labels: &Path) -> Result<(PredictionTensor, LabeledSet), Failure> {
    let p = at_path(preds, io::read_predictions(preds))?;
    let l = at_path(labels, io::read_labels(labels))?;
    l.check_pairs_with(&p)?;
    Ok((p, l))
}

pub fn learn(a: &LearnArgs, args: &[String]) -> Result<(), Failure> {
    let mut manifest = ManifestBuilder::new("learn", args);
    let (train_p, train_l) = read_pair(&a.preds, &a.labels)?;
    let (val_p, val_l) = read_pair(&a.val_preds, &a.val_labels)?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;

    let fit = |mode| aggregate::train_with_report(&train_p, &train_l, &val_p, &val_l, mode, &cfg);
    let chosen = match a.mode {
        ModeArg::Class => fit(WeightMode::PerAugmentationClass)?,
        ModeArg::Aug => fit(WeightMode::PerAugmentation)?,
        ModeArg::Auto => {
            let pool = thread_pool()?;
            let (class, aug) = pool.install(|| {
                rayon::join(
                    || fit(WeightMode::PerAugmentationClass),
                    || fit(WeightMode::PerAugmentation),
                )
            });
            let (class, aug) = (class?, aug?);
            let picked =
                aggregate::select_mode(&class.aggregator, &aug.aggregator, &val_p, &val_l)?;
            manifest
                .config("class_val_accuracy", class.val_accuracy[class.best_epoch])
                .config("aug_val_accuracy", aug.val_accuracy[aug.best_epoch]);
            if picked.label() == class.aggregator.label() {
                class
            } else {
                aug
            }
        }
    };
    let weights = chosen
        .aggregator
        .weights()
        .expect("training yields learned weights")
        .clone();
    io::write_weights(&a.out, &weights)?;

    manifest
        .config("train", &cfg)
        .config("mode", format!("{:?}", a.mode).to_lowercase())
        .config("selected", chosen.aggregator.label())
        .config("best_epoch", chosen.best_epoch)
        .config("val_accuracy", &chosen.val_accuracy)
        .seed("train", a.seed)
        .input(&a.preds)
        .input(&a.labels)
        .input(&a.val_preds)
        .input(&a.val_labels)
        .output(&a.out);
    manifest.finish(&sidecar(&a.out))?;
    println!(
        "{} weights (epoch {}, val accuracy {:.4}) -> {}",
        chosen.aggregator.label(),
        chosen.best_epoch,
        chosen.val_accuracy[chosen.best_epoch],
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: &EvalArgs, args: &[String]) -> Result<(), Failure> {
    let mut manifest = ManifestBuilder::new("eval", args);
    let (preds, labels) = read_pair(&a.preds, &a.labels)?;
    manifest.input(&a.preds).input(&a.labels);
    let (m, c) = (preds.m(), preds.c());

    let agg = match a.method {
        MethodArg::Raw => Aggregator::raw(m, c),
        MethodArg::Mean => Aggregator::mean(m, c),
        MethodArg::Gps => {
            if a.gps_size == 0 {
                return Err(Failure::Usage("--gps-size must be at least 1".into()));
            }
            match (&a.gps_preds, &a.gps_labels) {
                (Some(gp), Some(gl)) => {
                    let (fit_p, fit_l) = read_pair(gp, gl)?;
                    if fit_p.m() != m || fit_p.c() != c {
                        return Err(TtaError::DimensionMismatch(
                            "GPS selection data differs in shape from evaluation data".into(),
                        )
                        .into());
                    }
                    manifest.input(gp).input(gl);
                    aggregate::gps_search(&fit_p, &fit_l, a.gps_size)?
                }
                _ => aggregate::gps_search(&preds, &labels, a.gps_size)?,
            }
        }
        MethodArg::Learned => {
            let path = a
                .weights
                .as_ref()
                .ok_or_else(|| Failure::Usage("--method learned needs --weights".into()))?;
            manifest.input(path);
            Aggregator::learned(at_path(path, io::read_weights(path))?)
        }
    };

    let raw = aggregate::predict(&Aggregator::raw(m, c), &preds)?;
    let pred = aggregate::predict(&agg, &preds)?;
    let accuracy = metrics::accuracy(&pred, &labels)?;
    let raw_accuracy = metrics::accuracy(&raw, &labels)?;
    let subsamples = metrics::subsample_eval(
        &[(agg.label(), &pred), ("raw", &raw)],
        &labels,
        a.subsamples,
        a.subsample_frac,
        a.seed,
    )?;
    let significance_vs_raw =
        match metrics::paired_t_test(&subsamples[0].accuracies, &subsamples[1].accuracies) {
            Ok(s) => Some(s),
            Err(TtaError::DegenerateVariance) => None,
            Err(e) => return Err(e.into()),
        };
    let gps_selection = match agg.method() {
        aggregate::Method::Gps(sel) => Some(sel.clone()),
        _ => None,
    };
    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        method: agg.label().to_string(),
        n: preds.n(),
        m,
        c,
        accuracy,
        raw_accuracy,
        change_vs_raw: metrics::corrections_corruptions(&raw, &pred, &labels)?,
        agreement: metrics::agreement(&preds),
        subsamples,
        significance_vs_raw,
        gps_selection,
    };
    write_json(&a.report, &report)?;

    manifest
        .config("method", agg.label())
        .config("gps_size", a.gps_size)
        .config("subsamples", a.subsamples)
        .config("subsample_frac", a.subsample_frac)
        .seed("subsample", a.seed)
        .output(&a.report);
    manifest.finish(&sidecar(&a.report))?;
    println!(
        "{}: accuracy {:.4} (raw {:.4}), net {:+.2}%",
        report.method, report.accuracy, report.raw_accuracy, report.change_vs_raw.net_pct
    );
    Ok(())
}

/// Distinct emission seeds for the train / val / test draws of one run.
fn split_seed(seed: u64, part: u64) -> u64 {
    seed.wrapping_mul(3).wrapping_add(part)
}

fn world_json(w: &SyntheticWorld) -> serde_json::Value {
    let table = |f: &dyn Fn(usize, usize) -> serde_json::Value| -> Vec<Vec<serde_json::Value>> {
        (0..w.m())
            .map(|a| (0..w.c()).map(|y| f(a, y)).collect())
            .collect()
    };
    json!({
        "c": w.c(),
        "m": w.m(),
        "correct_prob": table(&|a, y| json!(w.correct_prob(a, y))),
        "confusion_target": table(&|a, y| json!(w.confusion_target(a, y))),
        "concentration": w.concentration(),
        "tied_slices": w.tied_slices(),
    })
}

fn emit_splits(
    world: &SyntheticWorld,
    n: usize,
    seed: u64,
    out: &Path,
    manifest: &mut ManifestBuilder,
) -> Result<serde_json::Value, Failure> {
    let sizes = [("train", n), ("val", (n / 5).max(1)), ("test", n)];
    for (part, (name, size)) in sizes.iter().enumerate() {
        let (p, l) = simulate::emit(&world.with_seed(split_seed(seed, part as u64)), *size)?;
        let (pp, lp) = (
            out.join(format!("{name}.ttap")),
            out.join(format!("{name}.ttal")),
        );
        io::write_predictions(&pp, &p)?;
        io::write_labels(&lp, &l)?;
        manifest
            .output(&pp)
            .output(&lp)
            .seed(name, split_seed(seed, part as u64));
    }
    Ok(json!(sizes
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect::<serde_json::Map<_, _>>()))
}

pub fn simulate(a: &SimulateArgs, args: &[String]) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let mut manifest = ManifestBuilder::new("simulate", args);
    std::fs::create_dir_all(&a.out)?;
    let expected = match a.scenario {
        Scenario::Invariant => {
            let world =
                simulate::invariant_world(&SyntheticWorld::uniform(10, 4, 0.7, 3.0, a.seed)?);
            let sizes = emit_splits(&world, a.n, a.seed, &a.out, &mut manifest)?;
            json!({
                "scenario": "invariant",
                "world": world_json(&world),
                "sizes": sizes,
                "expect": {
                    "corrections": 0,
                    "corruptions": 0,
                    "agreement": vec![1.0; world.m()],
                },
            })
        }
        Scenario::Planted => {
            let world = simulate::planted_class_asymmetry(a.seed);
            let sizes = emit_splits(&world, a.n, a.seed, &a.out, &mut manifest)?;
            let weights_path = a.out.join("bayes_weights.ttaw");
            let bayes = simulate::bayes_optimal_weights(&world)?;
            io::write_weights(&weights_path, &bayes)?;
            manifest.output(&weights_path);
            json!({
                "scenario": "planted",
                "world": world_json(&world),
                "sizes": sizes,
                "expect": {
                    "raw_accuracy": world.raw_accuracy(),
                    "bayes_vote_accuracy": world.bayes_vote_accuracy(),
                    "bayes_weights": bayes.values(),
                    "ordering": ["class_tta > raw", "class_tta >= aug_tta", "aug_tta >= mean"],
                },
            })
        }
        Scenario::Datasize => datasize(a, &mut manifest)?,
    };
    let expected_path = a.out.join("expected.json");
    write_json(&expected_path, &expected)?;
    manifest
        .config("scenario", a.scenario)
        .config("n", a.n)
        .seed("world", a.seed)
        .output(&expected_path);
    manifest.finish(&a.out.join("run_manifest.json"))?;
    println!("{:?} scenario written to {}", a.scenario, a.out.display());
    Ok(())
}

fn datasize(
    a: &SimulateArgs,
    manifest: &mut ManifestBuilder,
) -> Result<serde_json::Value, Failure> {
    let (images, labels) = simulate::symmetric_blobs(
        2 * a.n,
        DATASIZE_CLASSES,
        DATASIZE_SIDE,
        DATASIZE_NOISE,
        a.seed,
    )?;
    let (pool, test) = images.split_at(a.n);
    let pool_labels = labels.select(&(0..a.n).collect::<Vec<_>>())?;
    let test_labels = labels.select(&(a.n..2 * a.n).collect::<Vec<_>>())?;
    let labels_path = a.out.join("test.ttal");
    io::write_labels(&labels_path, &test_labels)?;
    manifest.output(&labels_path);

    let cfg = ToyConfig {
        seed: a.seed,
        ..ToyConfig::default()
    };
    let policy = flips_policy();
    let (m, c) = (policy.len(), DATASIZE_CLASSES);
    let mut splits = Vec::new();
    let mut nets = Vec::new();
    for (k, &fraction) in DATASIZE_FRACTIONS.iter().enumerate() {
        let clf = simulate::train_toy(pool, &pool_labels, fraction, &cfg)?;
        let logits = simulate::toy_logits(&clf, test, &policy)?;
        let path = a.out.join(format!("logits_{k}.ttap"));
        io::write_predictions(&path, &logits)?;
        manifest.output(&path);
        let raw = aggregate::predict(&Aggregator::raw(m, c), &logits)?;
        let mean = aggregate::predict(&Aggregator::mean(m, c), &logits)?;
        let change = metrics::corrections_corruptions(&raw, &mean, &test_labels)?;
        nets.push(change.net_pct);
        splits.push(json!({
            "fraction": fraction,
            "train_indices": clf.train_indices(),
            "logits": path.file_name().and_then(|s| s.to_str()),
            "raw_accuracy": metrics::accuracy(&raw, &test_labels)?,
            "mean_net_pct": change.net_pct,
        }));
    }
    let splits_path = a.out.join("splits.json");
    write_json(&splits_path, &splits)?;
    manifest.output(&splits_path).config("toy", &cfg);
    let rho = metrics::spearman(&DATASIZE_FRACTIONS, &nets).ok();
    Ok(json!({
        "scenario": "datasize",
        "classes": DATASIZE_CLASSES,
        "side": DATASIZE_SIDE,
        "noise_std": DATASIZE_NOISE,
        "policy": policy.name(),
        "fractions": DATASIZE_FRACTIONS,
        "mean_net_pct": nets,
        "spearman_rho": rho,
        "expect": { "spearman_rho_at_most": 0.0 },
    }))
}
