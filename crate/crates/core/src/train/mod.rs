//! Small ReLU classifiers: construction, backprop, SGD, augmentation and
//! PGD adversarial training over subspaces.

mod network;
mod pgd;
mod sgd;

use thiserror::Error;

use crate::dataset::Label;

pub use network::{argmax, cross_entropy, softmax, Activation, Gradients, Layer, Network, CLASSES};
pub use pgd::{pgd_attack, pgd_train, pgd_train_logged, Attack, PgdConfig, PgdInit};
pub use sgd::{accuracy, augment_train, sgd_train, sgd_train_logged, Example, TrainConfig, TrainLog};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("input has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training data has no '{0}' example")]
    MissingClass(Label),
    #[error("no training data")]
    EmptyData,
}
