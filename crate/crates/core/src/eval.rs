//! Leave-one-subject-out evaluation of the full pipeline, with or without
//! the enhancement front end, and sweeps over rates and classifiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ase::{build_config, train, TrainSpec};
use crate::classify::{Classifier, ClassifierKind, FdModel, KnnModel, SvmModel, SvmParams, Standardizer, DEFAULT_K};
use crate::error::{Error, Result};
use crate::features::frame_features;
use crate::ingest::{partition_loso, DatasetManifest, Fold, Label};
use crate::preprocess::{check_alpha, denormalize, frame_pair, resample_nearest, Frame, WindowSpec, AXES, FRAME_LEN};

/// Confusion counts with falls as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "TP")]
    pub tp: u64,
    #[serde(rename = "TN")]
    pub tn: u64,
    #[serde(rename = "FP")]
    pub fp: u64,
    #[serde(rename = "FN")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Fall, Label::Fall) => self.tp += 1,
            (Label::Adl, Label::Adl) => self.tn += 1,
            (Label::Adl, Label::Fall) => self.fp += 1,
            (Label::Fall, Label::Adl) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(
            self.tp + other.tp,
            self.tn + other.tn,
            self.fp + other.fp,
            self.fn_ + other.fn_,
        )
    }
}

/// Accuracy, sensitivity, specificity and precision. `None` marks a metric
/// whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub pre: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    Metrics {
        acc: ratio(cm.tp + cm.tn, cm.total()),
        sen: ratio(cm.tp, cm.tp + cm.fn_),
        spe: ratio(cm.tn, cm.tn + cm.fp),
        pre: ratio(cm.tp, cm.tp + cm.fp),
    }
}

/// Mean of the defined values and how many were left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averaged {
    pub mean: Option<f64>,
    pub excluded: usize,
}

impl Averaged {
    fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let (mut sum, mut n, mut excluded) = (0.0, 0usize, 0usize);
        for v in values {
            match v {
                Some(v) => {
                    sum += v;
                    n += 1;
                }
                None => excluded += 1,
            }
        }
        Averaged {
            mean: (n > 0).then(|| sum / n as f64),
            excluded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub acc: Averaged,
    pub sen: Averaged,
    pub spe: Averaged,
    pub pre: Averaged,
}

impl AveragedMetrics {
    pub fn of(per_fold: &[Metrics]) -> Self {
        Self {
            acc: Averaged::of(per_fold.iter().map(|m| m.acc)),
            sen: Averaged::of(per_fold.iter().map(|m| m.sen)),
            spe: Averaged::of(per_fold.iter().map(|m| m.spe)),
            pre: Averaged::of(per_fold.iter().map(|m| m.pre)),
        }
    }

    pub fn as_metrics(&self) -> Metrics {
        Metrics {
            acc: self.acc.mean,
            sen: self.sen.mean,
            spe: self.spe.mean,
            pre: self.pre.mean,
        }
    }
}

/// What the classifier sees: low-resolution frames stretched by linear
/// resampling, or the autoencoder's reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEnd {
    Original,
    Ase,
}

impl FrontEnd {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrontEnd::Original => "original",
            FrontEnd::Ase => "ase",
        }
    }
}

impl fmt::Display for FrontEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FrontEnd {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "off" | "none" => Ok(FrontEnd::Original),
            "ase" | "on" => Ok(FrontEnd::Ase),
            _ => Err(Error::InvalidArgument(format!("unknown front end `{s}`"))),
        }
    }
}

/// Records which subjects each training stage consumed within one fold and
/// fails as soon as the held-out subject shows up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageGuard {
    pub test_subject: String,
    pub touched: BTreeMap<String, BTreeSet<String>>,
}

impl LeakageGuard {
    pub const ASE_TRAINING: &'static str = "ase_training";
    pub const STANDARDIZER: &'static str = "standardizer";
    pub const CLASSIFIER: &'static str = "classifier";

    pub fn new(test_subject: &str) -> Self {
        Self {
            test_subject: test_subject.to_string(),
            touched: BTreeMap::new(),
        }
    }

    pub fn touch<'a>(&mut self, stage: &'static str, subjects: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let set = self.touched.entry(stage.to_string()).or_default();
        set.extend(subjects.into_iter().map(str::to_string));
        if set.contains(&self.test_subject) {
            return Err(Error::Leakage {
                stage,
                subject: self.test_subject.clone(),
            });
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.touched.values().all(|s| !s.contains(&self.test_subject))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AseFoldSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub train_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subject: String,
    pub n_train: usize,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub guard: LeakageGuard,
    pub ase: Option<AseFoldSummary>,
    /// Mean absolute error between the normalized front-end output and the
    /// normalized full-rate frame over the test trials.
    pub frontend_mae: f64,
    /// Same error for nearest-neighbour upsampling of the low-resolution frame.
    pub nearest_mae: f64,
    /// `frontend_mae` after denormalizing both sides, in g.
    pub frontend_mae_g: f64,
    /// `nearest_mae` after denormalizing both sides, in g.
    pub nearest_mae_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub classifier: ClassifierKind,
    pub front_end: FrontEnd,
    pub alpha: u32,
    pub rate_hz: f64,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub totals: ConfusionMatrix,
    pub average: AveragedMetrics,
}

impl EvalReport {
    pub fn mean_frontend_mae(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.frontend_mae))
    }

    pub fn mean_nearest_mae(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.nearest_mae))
    }

    pub fn mean_frontend_mae_g(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.frontend_mae_g))
    }

    pub fn mean_nearest_mae_g(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.nearest_mae_g))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub train: TrainSpec,
    pub l2_weight: f64,
    pub dropout_p: f64,
    pub svm: SvmParams,
    pub k: usize,
    /// Worker threads for independent folds and sweep cells; results do not
    /// depend on it.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            train: TrainSpec::default(),
            l2_weight: 0.0,
            dropout_p: 0.0,
            svm: SvmParams::default(),
            k: DEFAULT_K,
            jobs: 1,
        }
    }
}

/// LOSO evaluation of one pipeline setting.
pub fn run_loso(
    manifest: &DatasetManifest,
    alpha: u32,
    classifier: ClassifierKind,
    front_end: FrontEnd,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let mut reports = sweep(manifest, &[alpha], &[classifier], &[front_end], opts)?;
    Ok(reports.remove(0))
}

struct Cell {
    alpha_pos: usize,
    front_end: FrontEnd,
    fold: usize,
}

/// Every combination of `alphas × front_ends × classifiers`, ordered by
/// alpha, then classifier, then front end. Each enhancement model is trained
/// once per fold and shared by all classifiers.
pub fn sweep(
    manifest: &DatasetManifest,
    alphas: &[u32],
    classifiers: &[ClassifierKind],
    front_ends: &[FrontEnd],
    opts: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    if alphas.is_empty() || classifiers.is_empty() || front_ends.is_empty() {
        return Ok(Vec::new());
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    manifest.validate()?;
    opts.train.validate()?;
    let base_rate = manifest.rate_hz().ok_or(Error::EmptyInput("manifest trials"))?;
    let folds = partition_loso(manifest)?;
    for fold in &folds {
        let labels: BTreeSet<Label> = fold.train.iter().map(|&i| manifest.trials[i].label).collect();
        if labels.len() < 2 {
            return Err(Error::SingleClass);
        }
    }
    let window = WindowSpec::new(manifest.window_backward_s, manifest.window_forward_s)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;

    pool.install(|| {
        let pairs: Vec<Vec<(Frame, Frame)>> = alphas
            .iter()
            .map(|&a| {
                manifest
                    .trials
                    .par_iter()
                    .map(|t| frame_pair(t, &window, a))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let n_folds = folds.len();
        let cells: Vec<Cell> = (0..alphas.len())
            .flat_map(|alpha_pos| {
                front_ends.iter().flat_map(move |&front_end| {
                    (0..n_folds).map(move |fold| Cell {
                        alpha_pos,
                        front_end,
                        fold,
                    })
                })
            })
            .collect();
        let results: Vec<Vec<FoldResult>> = cells
            .par_iter()
            .map(|c| {
                run_fold(
                    manifest,
                    &pairs[c.alpha_pos],
                    alphas[c.alpha_pos],
                    c.front_end,
                    c.fold,
                    &folds[c.fold],
                    classifiers,
                    opts,
                )
            })
            .collect::<Result<_>>()?;

        let mut by_key: BTreeMap<(usize, usize, FrontEnd), Vec<FoldResult>> = BTreeMap::new();
        for (cell, per_classifier) in cells.iter().zip(results) {
            for (ci, r) in per_classifier.into_iter().enumerate() {
                by_key.entry((cell.alpha_pos, ci, cell.front_end)).or_default().push(r);
            }
        }
        let mut reports = Vec::new();
        for (ai, &alpha) in alphas.iter().enumerate() {
            for (ci, &classifier) in classifiers.iter().enumerate() {
                for &front_end in front_ends {
                    let folds = by_key.remove(&(ai, ci, front_end)).unwrap_or_default();
                    let per_fold: Vec<Metrics> = folds.iter().map(|f| f.metrics).collect();
                    let totals = folds
                        .iter()
                        .fold(ConfusionMatrix::default(), |acc, f| acc.add(&f.confusion));
                    reports.push(EvalReport {
                        dataset: manifest.dataset_name.as_str().to_string(),
                        classifier,
                        front_end,
                        alpha,
                        rate_hz: base_rate / f64::from(1u32 << alpha),
                        seed: opts.train.seed,
                        average: AveragedMetrics::of(&per_fold),
                        totals,
                        folds,
                    });
                }
            }
        }
        Ok(reports)
    })
}

fn fold_seed(base: u64, fold: usize, alpha: u32) -> u64 {
    base.wrapping_add(1000 * fold as u64 + u64::from(alpha))
}

fn mae(a: &Frame, b: &Frame) -> f64 {
    let n = a.values().len() as f64;
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n
}

fn nearest_upsampled(lr: &Frame) -> Result<Frame> {
    let values = (0..AXES)
        .flat_map(|a| resample_nearest(lr.axis(a), FRAME_LEN))
        .collect();
    Ok(Frame::new(FRAME_LEN, values, lr.source_rate_hz())?.with_norm(lr.norm_params()))
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    manifest: &DatasetManifest,
    pairs: &[(Frame, Frame)],
    alpha: u32,
    front_end: FrontEnd,
    fold_idx: usize,
    fold: &Fold,
    classifiers: &[ClassifierKind],
    opts: &EvalOptions,
) -> Result<Vec<FoldResult>> {
    let trials = &manifest.trials;
    let subject = |i: usize| trials[i].subject_id.as_str();
    let mut guard = LeakageGuard::new(&fold.test_subject);

    // front-end output for every trial of the fold, still normalized
    let all: Vec<usize> = fold.train.iter().chain(&fold.test).copied().collect();
    let (outputs, ase): (Vec<Frame>, Option<AseFoldSummary>) = match front_end {
        FrontEnd::Original => (
            all.iter()
                .map(|&i| pairs[i].0.resampled(FRAME_LEN))
                .collect::<Result<_>>()?,
            None,
        ),
        FrontEnd::Ase => {
            guard.touch(LeakageGuard::ASE_TRAINING, fold.train.iter().map(|&i| subject(i)))?;
            let train_pairs: Vec<(Frame, Frame)> = fold.train.iter().map(|&i| pairs[i].clone()).collect();
            let config = build_config(alpha, opts.l2_weight, opts.dropout_p)?;
            let spec = TrainSpec {
                seed: fold_seed(opts.train.seed, fold_idx, alpha),
                ..opts.train.clone()
            };
            let trained = train(&train_pairs, &config, &spec)?;
            let lr: Vec<&Frame> = all.iter().map(|&i| &pairs[i].0).collect();
            let r = &trained.report;
            (
                trained.model.enhance_batch(&lr)?,
                Some(AseFoldSummary {
                    epochs_run: r.epochs_run,
                    best_epoch: r.best_epoch,
                    best_val_mae: r.best_val_mae,
                    train_mae: r.train_mae,
                }),
            )
        }
    };
    let denorm: Vec<Frame> = outputs.iter().map(denormalize).collect::<Result<_>>()?;
    let features: Vec<Vec<f64>> = denorm
        .iter()
        .map(|f| frame_features(f, manifest.vertical_axis).map(|v| v.as_slice().to_vec()))
        .collect::<Result<_>>()?;
    let n_train = fold.train.len();
    let (x_train, x_test) = features.split_at(n_train);
    let y_train: Vec<Label> = fold.train.iter().map(|&i| trials[i].label).collect();

    // [normalized front end, normalized nearest, g front end, g nearest]
    let mut err = [0.0; 4];
    for (k, &i) in fold.test.iter().enumerate() {
        let hr = &pairs[i].1;
        let nearest = nearest_upsampled(&pairs[i].0)?;
        err[0] += mae(&outputs[n_train + k], hr);
        err[1] += mae(&nearest, hr);
        err[2] += mae(&denorm[n_train + k], &denormalize(hr)?);
        err[3] += mae(&denormalize(&nearest)?, &denormalize(hr)?);
    }
    let n_test = fold.test.len();
    let err = err.map(|e| e / n_test as f64);

    guard.touch(LeakageGuard::STANDARDIZER, fold.train.iter().map(|&i| subject(i)))?;
    let standardizer = Standardizer::fit(x_train)?;
    let z_train = standardizer.apply_all(x_train);
    guard.touch(LeakageGuard::CLASSIFIER, fold.train.iter().map(|&i| subject(i)))?;

    classifiers
        .iter()
        .map(|&kind| {
            let classifier = match kind {
                ClassifierKind::Svm => Classifier::Svm(SvmModel::train(&z_train, &y_train, opts.svm)?),
                ClassifierKind::Knn => Classifier::Knn(KnnModel::train(&z_train, &y_train, opts.k)?),
            };
            let model = FdModel {
                standardizer: standardizer.clone(),
                classifier,
            };
            let mut confusion = ConfusionMatrix::default();
            for (x, &i) in x_test.iter().zip(&fold.test) {
                confusion.record(trials[i].label, model.predict(x));
            }
            Ok(FoldResult {
                fold: fold_idx,
                test_subject: fold.test_subject.clone(),
                n_train,
                n_test,
                confusion,
                metrics: metrics(&confusion),
                guard: guard.clone(),
                ase: ase.clone(),
                frontend_mae: err[0],
                nearest_mae: err[1],
                frontend_mae_g: err[2],
                nearest_mae_g: err[3],
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "UNDEFINED".to_string(), |v| format!("{v:.6}"))
}

pub const REPORT_COLUMNS: [&str; 14] = [
    "dataset", "classifier", "front_end", "alpha", "rate_hz", "fold", "TP", "TN", "FP", "FN", "acc", "sen",
    "spe", "pre",
];

/// Per-fold rows followed by one summary row per report (`fold = mean`,
/// summed counts, fold-averaged metrics).
pub fn write_report_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    let mut row = |r: &EvalReport, fold: &str, cm: &ConfusionMatrix, m: &Metrics| {
        w.write_record([
            r.dataset.clone(),
            r.classifier.as_str().to_string(),
            r.front_end.as_str().to_string(),
            r.alpha.to_string(),
            format_rate(r.rate_hz),
            fold.to_string(),
            cm.tp.to_string(),
            cm.tn.to_string(),
            cm.fp.to_string(),
            cm.fn_.to_string(),
            fmt_opt(m.acc),
            fmt_opt(m.sen),
            fmt_opt(m.spe),
            fmt_opt(m.pre),
        ])
    };
    for r in reports {
        for f in &r.folds {
            row(r, &f.test_subject, &f.confusion, &f.metrics)?;
        }
    }
    for r in reports {
        row(r, "mean", &r.totals, &r.average.as_metrics())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rates rounded to two decimals without trailing zeros (3.125 → 3.13).
pub fn format_rate(rate_hz: f64) -> String {
    let s = format!("{:.2}", (rate_hz * 100.0).round() / 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Accuracy (percent) with rows per classifier and front end and one column
/// per rate, highest rate first.
pub fn write_summary_table(reports: &[EvalReport], path: &Path) -> Result<()> {
    let mut rates: Vec<(u32, f64)> = reports.iter().map(|r| (r.alpha, r.rate_hz)).collect();
    rates.sort_by_key(|r| r.0);
    rates.dedup_by_key(|r| r.0);
    let mut rows: Vec<(ClassifierKind, FrontEnd)> =
        reports.iter().map(|r| (r.classifier, r.front_end)).collect();
    rows.sort();
    rows.dedup();

    let mut out = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("classifier,front_end");
    for (_, rate) in &rates {
        text.push(',');
        text.push_str(&format_rate(*rate));
    }
    text.push('\n');
    for (c, fe) in rows {
        text.push_str(&format!("{},{}", c.as_str(), fe.as_str()));
        for (alpha, _) in &rates {
            let cell = reports
                .iter()
                .find(|r| r.classifier == c && r.front_end == fe && r.alpha == *alpha)
                .and_then(|r| r.average.acc.mean)
                .map_or_else(String::new, |a| format!("{:.2}", 100.0 * a));
            text.push(',');
            text.push_str(&cell);
        }
        text.push('\n');
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_report_json(reports: &[EvalReport], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(file, reports)?;
    Ok(())
}
