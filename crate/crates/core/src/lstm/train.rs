use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward_tape, forward_tape, LstmModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::util::derive_seed;

const SHUFFLE_STREAM: u64 = 0x7368_7566;
const VALIDATION_STREAM: u64 = 0x7661_6c;
const INIT_STREAM: u64 = 0x696e_6974;
const ADAM_EPS: f64 = 1e-8;
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    /// Share of the training partition held out for validation.
    pub validation_fraction: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_size: 100,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            validation_fraction: 0.1,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("train.learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.hidden_size == 0 {
            return Err(Error::invalid("train.batch_size and train.hidden_size must be at least 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::invalid("train.clip_norm must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::invalid("train.beta1 and train.beta2 must lie in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("train.validation_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Losses after an epoch; epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: LstmModel,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
}

/// Normalized inputs and targets for a subset of samples.
struct Matrix {
    x: Vec<f64>,
    y: Vec<f64>,
    rows: usize,
}

fn gather(ds: &Dataset, idx: &[usize]) -> Result<Matrix> {
    let norm = &ds.meta.norm;
    let mut x = Vec::with_capacity(idx.len() * ds.meta.feature_len());
    let mut y = Vec::with_capacity(idx.len() * ds.meta.label_len());
    for &i in idx {
        let mut f = ds.samples[i].features.clone();
        norm.normalize_features(&mut f)?;
        let mut l = ds.samples[i].labels.clone();
        norm.normalize_labels(&mut l)?;
        x.extend(f);
        y.extend(l);
    }
    Ok(Matrix { x, y, rows: idx.len() })
}

fn full_loss(model: &LstmModel, data: &Matrix) -> f64 {
    let (fin, fout) = (model.input_len(), model.output_len());
    let layout = model.layout();
    let mut sum = 0.0;
    let mut start = 0;
    while start < data.rows {
        let b = EVAL_CHUNK.min(data.rows - start);
        let tape = forward_tape(&model.params, layout, model.meta.n, &data.x[start * fin..(start + b) * fin], b);
        sum += tape
            .outputs
            .iter()
            .zip(&data.y[start * fout..(start + b) * fout])
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>();
        start += b;
    }
    sum / (data.rows * fout) as f64
}

/// Mini-batch Adam with global-norm clipping on the training partition.
/// Single-threaded and fully determined by `seed`.
pub fn train(ds: &Dataset, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let (train_idx, _) = ds.partition();
    let mut fit_idx = train_idx;
    fit_idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, VALIDATION_STREAM)));
    let n_val = ((config.validation_fraction * fit_idx.len() as f64).round() as usize).max(1);
    if n_val >= fit_idx.len() {
        return Err(Error::invalid("training partition too small for a validation split"));
    }
    let val_idx = fit_idx.split_off(fit_idx.len() - n_val);
    let fit = gather(ds, &fit_idx)?;
    let val = gather(ds, &val_idx)?;

    let mut model = LstmModel::init(ds.meta.clone(), config.hidden_size, derive_seed(seed, INIT_STREAM))?;
    let layout = model.layout();
    let (fin, fout) = (model.input_len(), model.output_len());
    let n = model.meta.n;

    let mut history = vec![EpochLoss {
        epoch: 0,
        train: full_loss(&model, &fit),
        validation: full_loss(&model, &val),
    }];
    let mut best = (history[0].validation, 0usize, model.params.clone());

    let mut m1 = vec![0.0; layout.len];
    let mut m2 = vec![0.0; layout.len];
    let mut grad = vec![0.0; layout.len];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..fit.rows).collect();
    let mut xb = Vec::with_capacity(config.batch_size * fin);
    let mut yb = Vec::with_capacity(config.batch_size * fout);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed ^ SHUFFLE_STREAM, epoch as u64)));
        for chunk in order.chunks(config.batch_size) {
            xb.clear();
            yb.clear();
            for &r in chunk {
                xb.extend_from_slice(&fit.x[r * fin..(r + 1) * fin]);
                yb.extend_from_slice(&fit.y[r * fout..(r + 1) * fout]);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let tape = forward_tape(&model.params, layout, n, &xb, chunk.len());
            let loss = backward_tape(&model.params, layout, n, &xb, &tape, &yb, 1.0, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let clip = if norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };

            step += 1;
            let bc1 = 1.0 - config.beta1.powi(step);
            let bc2 = 1.0 - config.beta2.powi(step);
            for (((p, g), a), b) in model.params.iter_mut().zip(&grad).zip(&mut m1).zip(&mut m2) {
                let g = g * clip;
                *a = config.beta1 * *a + (1.0 - config.beta1) * g;
                *b = config.beta2 * *b + (1.0 - config.beta2) * g * g;
                *p -= config.learning_rate * (*a / bc1) / ((*b / bc2).sqrt() + ADAM_EPS);
            }
        }
        let record = EpochLoss {
            epoch,
            train: full_loss(&model, &fit),
            validation: full_loss(&model, &val),
        };
        if !(record.train.is_finite() && record.validation.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: record.train,
            });
        }
        if record.validation < best.0 {
            best = (record.validation, epoch, model.params.clone());
        }
        history.push(record);
    }
    model.params = best.2;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.1,
    })
}
