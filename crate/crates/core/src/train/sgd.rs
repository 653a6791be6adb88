//! Seeded mini-batch SGD on softmax cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::TrainError;
use crate::dataset::Label;
use crate::rng;
use crate::scalar::Scalar;

/// A training input with its label.
pub type Example<T> = (Vec<T>, Label);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hidden layer widths; the output layer (2 logits) is implicit.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            hidden: vec![128],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(TrainError::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Mean loss per epoch, measured on the inputs actually trained on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

pub(crate) fn check_data<T: Scalar>(data: &[Example<T>]) -> Result<usize, TrainError> {
    let dim = data.first().ok_or(TrainError::EmptyData)?.0.len();
    for (x, _) in data {
        if x.len() != dim {
            return Err(TrainError::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
    }
    for label in [Label::Neg, Label::Pos] {
        if !data.iter().any(|(_, l)| *l == label) {
            return Err(TrainError::MissingClass(label));
        }
    }
    Ok(dim)
}

/// Shared loop: `substitute` may replace an example's input (by index)
/// before its gradient is taken.
pub(crate) fn train_loop<T, F>(
    data: &[Example<T>],
    cfg: &TrainConfig,
    mut substitute: F,
) -> Result<(Network<T>, TrainLog), TrainError>
where
    T: Scalar,
    F: FnMut(&Network<T>, usize, u64) -> Result<Option<Vec<T>>, TrainError>,
{
    cfg.validate()?;
    let dim = check_data(data)?;
    let mut net = Network::init(dim, &cfg.hidden, cfg.seed)?;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, "shuffle", epoch as u64);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros_like(&net);
            for &i in batch {
                let (x, label) = &data[i];
                let g = match substitute(&net, i, step)? {
                    Some(adv) => net.grad(&adv, *label)?,
                    None => net.grad(x, *label)?,
                };
                step += 1;
                acc.accumulate(&g);
            }
            total += acc.loss.to_f();
            let rate = T::of(cfg.learning_rate / batch.len() as f64);
            net.step(&acc, rate);
        }
        log.epoch_loss.push(total / data.len() as f64);
    }
    Ok((net, log))
}

pub fn sgd_train<T: Scalar>(data: &[Example<T>], cfg: &TrainConfig) -> Result<Network<T>, TrainError> {
    sgd_train_logged(data, cfg).map(|(n, _)| n)
}

pub fn sgd_train_logged<T: Scalar>(
    data: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<(Network<T>, TrainLog), TrainError> {
    train_loop(data, cfg, |_, _, _| Ok(None))
}

/// Training on the original examples plus extra (perturbation) examples.
pub fn augment_train<T: Scalar>(
    data: &[Example<T>],
    extra: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<Network<T>, TrainError> {
    let mut all = data.to_vec();
    all.extend_from_slice(extra);
    sgd_train(&all, cfg)
}

/// Fraction of examples classified correctly.
pub fn accuracy<T: Scalar>(net: &Network<T>, data: &[Example<T>]) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut correct = 0;
    for (x, label) in data {
        if net.classify(x)? == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
