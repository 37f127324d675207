//! Minibatch Adam training of the pixel regressor.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::regressor::{loss_and_gradient, PixelRegressor, PixelSample, UncertaintyHead};
use crate::error::{Error, Result};
use crate::math;

pub const MIN_TRAIN_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam optimizer state for a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, params: usize) -> Self {
        Self { config, m: alloc::vec![0.0; params], v: alloc::vec![0.0; params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = self.config;
        self.t += 1;
        let bias1 = 1.0 - libm::pow(c.beta1, f64::from(self.t));
        let bias2 = 1.0 - libm::pow(c.beta2, f64::from(self.t));
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= c.learning_rate * m_hat / (math::sqrt(v_hat) + c.epsilon);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub head: UncertaintyHead,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            head: UncertaintyHead::Aleatoric,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Sample-weighted mean minibatch loss seen during the epoch.
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MAE.
    pub best: PixelRegressor,
    pub best_epoch: usize,
    pub last: PixelRegressor,
    pub history: Vec<EpochRecord>,
}

/// Mean absolute depth error over `samples`.
pub fn validation_mae(model: &PixelRegressor, samples: &[PixelSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let errs = samples
        .iter()
        .map(|p| model.forward(p.z).map(|(r_hat, _)| math::abs(r_hat - p.r)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(math::pairwise_sum(&errs) / errs.len() as f64)
}

pub fn train_regressor(
    model: PixelRegressor,
    train: &[PixelSample],
    validation: &[PixelSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if train.len() < MIN_TRAIN_SAMPLES {
        return Err(Error::invalid(alloc::format!(
            "training needs at least {MIN_TRAIN_SAMPLES} samples, got {}",
            train.len()
        )));
    }
    if validation.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    if !(config.optimizer.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }

    let mut model = model;
    let mut adam = Adam::new(config.optimizer, model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, PixelRegressor)> = None;

    for epoch in 1..=config.epochs {
        // Fisher-Yates with the run's seeded stream.
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut weighted = Vec::with_capacity(order.len() / config.batch_size + 1);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            let (loss, grad) = loss_and_gradient(&model, &batch, config.head);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.step(model.params_mut(), &grad);
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            weighted.push(loss * chunk.len() as f64);
        }
        let train_loss = math::pairwise_sum(&weighted) / train.len() as f64;
        let val_mae = validation_mae(&model, validation)?;
        if !train_loss.is_finite() || !val_mae.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochRecord { epoch, train_loss, val_mae });
        if best.as_ref().is_none_or(|(mae, _, _)| val_mae < *mae) {
            best = Some((val_mae, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { best, best_epoch, last: model, history })
}
