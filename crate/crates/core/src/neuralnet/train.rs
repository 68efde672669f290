use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Model, Tape, TrainMeta};
use super::{ArchSpec, Classifier};
use crate::error::{invalid, Result};
use crate::rng::seeded;
use crate::signal::{to_real, ClassLabel, IqMatrix, LabeledFrame};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("train_cfg.epochs and train_cfg.batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return Err(invalid("train_cfg.learning_rate and train_cfg.adam_eps must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(invalid("train_cfg.adam_beta1/adam_beta2 must lie in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(invalid("train_cfg.validation_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n_params: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(beta1),
            beta2: T::lit(beta2),
            eps: T::lit(eps),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }

    pub fn from_config(n_params: usize, cfg: &TrainConfig) -> Self {
        Self::new(n_params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let alpha = self.lr * c2.sqrt() / c1;
        let eps_hat = self.eps * c2.sqrt();
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            *p -= alpha * *m / (v.sqrt() + eps_hat);
        }
    }
}

/// Fraction of frames whose predicted label matches.
pub fn accuracy<T: Scalar, C: Classifier<T> + ?Sized>(model: &C, data: &[LabeledFrame<T>]) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("accuracy of an empty dataset"));
    }
    let mut hits = 0usize;
    for lf in data {
        if model.classify(&lf.frame)? == lf.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

fn accuracy_on<T: Scalar>(model: &Model<T>, rows: &[(IqMatrix<T>, ClassLabel)], idx: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    for &i in idx {
        if model.classify_matrix(&rows[i].0)? == rows[i].1 {
            hits += 1;
        }
    }
    Ok(hits as f64 / idx.len().max(1) as f64)
}

/// Trains a fresh model with mini-batch Adam on cross-entropy.
///
/// A seeded shuffle holds out `validation_fraction` of the data; the
/// remaining frames are reshuffled every epoch. Identical inputs give a
/// bit-identical model.
pub fn train<T: Scalar>(data: &[LabeledFrame<T>], arch: &ArchSpec, cfg: &TrainConfig) -> Result<Model<T>> {
    arch.validate()?;
    cfg.validate()?;
    if data.len() < cfg.batch_size {
        return Err(invalid(format!(
            "dataset has {} frames, fewer than batch size {}",
            data.len(),
            cfg.batch_size
        )));
    }
    if !ClassLabel::ALL.iter().all(|c| data.iter().any(|lf| lf.label == *c)) {
        return Err(invalid("training data must contain both classes"));
    }
    if let Some(bad) = data.iter().find(|lf| lf.frame.len() != arch.frame_len) {
        return Err(invalid(format!("frame of length {} does not match arch", bad.frame.len())));
    }

    let mut rng = seeded(cfg.seed);
    let mut model = Model::<T>::init(arch, &mut rng)?;
    let rows: Vec<(IqMatrix<T>, ClassLabel)> = data.iter().map(|lf| (to_real(&lf.frame), lf.label)).collect();

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((rows.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, rows.len() - 1);
    let (val_idx, train_part) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_part.to_vec();

    let mut adam = Adam::from_config(model.param_count(), cfg);
    let mut grads = vec![T::zero(); model.param_count()];
    let mut tape = Tape::default();
    for _ in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            grads.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                let (x, y) = &rows[i];
                model.accumulate_gradient(x.as_slice(), *y, &mut tape, &mut grads, Some(&mut rng));
            }
            let inv = T::one() / T::from_count(batch.len());
            grads.iter_mut().for_each(|g| *g *= inv);
            adam.step(model.params_mut(), &grads);
        }
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(invalid("training diverged to non-finite parameters"));
    }
    let meta = TrainMeta {
        train_accuracy: accuracy_on(&model, &rows, &train_idx)?,
        validation_accuracy: accuracy_on(&model, &rows, &val_idx)?,
        epochs: cfg.epochs,
    };
    model.set_meta(meta);
    Ok(model)
}
