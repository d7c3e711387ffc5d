use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::AseConfig;
use super::model::{stack, AseModel, Params};
use crate::error::{Error, Result};
use crate::preprocess::Frame;

/// Fraction of pairs held out for validation (9:1 split).
pub const VAL_FRACTION: f64 = 0.1;
pub const MIN_PAIRS: usize = 10;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            batch_size: 32,
            step_size: 1e-3,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "epochs, batch size and patience must be positive".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Validation set size for `n` pairs: `ceil(n / 10)`.
pub fn validation_size(n: usize) -> usize {
    n.div_ceil(10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean minibatch objective during the epoch (dropout active).
    pub train_loss: f64,
    pub val_mae: f64,
    /// Best validation MAE seen so far.
    pub best_val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_val: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    /// MAE of the returned model on the training split.
    pub train_mae: f64,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct TrainedAse {
    pub model: AseModel,
    pub report: TrainReport,
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(config: &AseConfig) -> Self {
        Self {
            m: Params::zeros(config),
            v: Params::zeros(config),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for (((w, _), (g, _)), ((m, _), (v, _))) in tensors {
            for i in 0..w.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Mean absolute error of `model` over the given pairs (dropout off, raw outputs).
pub fn dataset_mae(model: &AseModel, pairs: &[(&Frame, &Frame)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let config = model.config();
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in pairs.chunks(64) {
        let lr: Vec<&Frame> = chunk.iter().map(|p| p.0).collect();
        let hr: Vec<&Frame> = chunk.iter().map(|p| p.1).collect();
        let out = model.forward_batch(stack(&lr, config.in_len()));
        let target = stack(&hr, config.decoder_dense_width());
        total += (&out - &target).iter().map(|d| d.abs()).sum::<f64>();
        count += out.len();
    }
    total / count as f64
}

/// Minibatch Adam on the MAE objective with a seeded 9:1 train/validation
/// split and early stopping on validation MAE. Returns the best-validation
/// snapshot.
pub fn train(pairs: &[(Frame, Frame)], config: &AseConfig, spec: &TrainSpec) -> Result<TrainedAse> {
    config.validate()?;
    spec.validate()?;
    if pairs.len() < MIN_PAIRS {
        return Err(Error::TooFewPairs {
            needed: MIN_PAIRS,
            found: pairs.len(),
        });
    }
    for (lr, hr) in pairs {
        if lr.per_axis_len() != config.in_per_axis {
            return Err(Error::GeometryMismatch {
                expected: config.in_per_axis,
                found: lr.per_axis_len(),
            });
        }
        if hr.per_axis_len() != config.out_per_axis {
            return Err(Error::GeometryMismatch {
                expected: config.out_per_axis,
                found: hr.per_axis_len(),
            });
        }
        if !lr.is_normalized() || !hr.is_normalized() {
            return Err(Error::NotNormalized);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = validation_size(pairs.len());
    let (val_idx, train_idx) = order.split_at(n_val);
    let as_refs = |idx: &[usize]| -> Vec<(&Frame, &Frame)> {
        idx.iter().map(|&i| (&pairs[i].0, &pairs[i].1)).collect()
    };
    let val = as_refs(val_idx);
    let train_set = as_refs(train_idx);

    let mut model = AseModel::new(config.clone(), spec.seed.wrapping_add(1))?;
    let mut adam = Adam::new(config);
    let mut best = model.clone();
    let mut best_val = dataset_mae(&model, &val);
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut batch_order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=spec.max_epochs {
        batch_order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in batch_order.chunks(spec.batch_size) {
            let lr: Vec<&Frame> = chunk.iter().map(|&i| train_set[i].0).collect();
            let hr: Vec<&Frame> = chunk.iter().map(|&i| train_set[i].1).collect();
            let x: Array2<f64> = stack(&lr, config.in_len());
            let t = stack(&hr, config.decoder_dense_width());
            let dropout = (config.dropout_p > 0.0).then_some(&mut rng);
            let (data, reg, grads) = model.step_gradients(x, &t, dropout);
            let loss = data + reg;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(model.params_mut(), &grads, spec.step_size);
            loss_sum += loss;
            batches += 1;
        }
        if !model.params().all_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let val_mae = dataset_mae(&model, &val);
        if !val_mae.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if val_mae < best_val {
            best_val = val_mae;
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_mae,
            best_val_mae: best_val,
        });
        if stale >= spec.patience {
            break;
        }
    }

    best.params_mut().round_to_f32();
    let report = TrainReport {
        n_train: train_set.len(),
        n_val,
        epochs_run: history.len(),
        best_epoch,
        best_val_mae: dataset_mae(&best, &val),
        train_mae: dataset_mae(&best, &train_set),
        history,
    };
    Ok(TrainedAse { model: best, report })
}
