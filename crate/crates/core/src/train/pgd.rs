//! Projected gradient attacks over subspaces and adversarial training.
//!
//! Steps are taken in rect coordinates with a per-dimension step
//! `γ_j = step_fraction · (upper_j − lower_j)`, so narrow dimensions get
//! proportionally small steps and zero-width dimensions never move.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::sgd::{train_loop, Example, TrainConfig, TrainLog};
use super::TrainError;
use crate::dataset::Label;
use crate::geometry::Subspace;
use crate::rng;
use crate::scalar::{sign, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgdInit {
    /// Start at the supplied point (the original embedding).
    #[default]
    Origin,
    /// Start uniformly inside the rect.
    RandomInRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgdConfig {
    pub iterations: usize,
    pub step_fraction: f64,
    pub init: PgdInit,
    /// Total starts; the first follows `init`, the rest are random.
    pub restarts: usize,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            iterations: 10,
            step_fraction: 0.1,
            init: PgdInit::Origin,
            restarts: 1,
        }
    }
}

impl PgdConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.iterations == 0 {
            return Err(TrainError::InvalidConfig("pgd iterations must be at least 1".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "step_fraction must lie in (0, 1], got {}",
                self.step_fraction
            )));
        }
        if self.restarts == 0 {
            return Err(TrainError::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attack<T> {
    /// Highest-loss point found, in embedding coordinates.
    pub point: Vec<T>,
    pub loss: T,
    pub misclassified: bool,
}

/// Maximizes the cross-entropy of `label` over `sub`, returning the best
/// iterate across all restarts. `start` is the `Origin` starting point and
/// is projected onto the subspace first.
pub fn pgd_attack<T: Scalar>(
    net: &Network<T>,
    sub: &Subspace<T>,
    label: Label,
    start: &[T],
    cfg: &PgdConfig,
    seed: u64,
) -> Result<Attack<T>, TrainError> {
    cfg.validate()?;
    let m = sub.dim();
    for found in [net.input_dim(), start.len()] {
        if found != m {
            return Err(TrainError::DimensionMismatch { expected: m, found });
        }
    }
    let rect = sub.rect();
    let gamma: Vec<T> = (0..m).map(|j| T::of(cfg.step_fraction) * rect.width(j)).collect();
    let mut best: Option<(Vec<T>, T)> = None;

    for restart in 0..cfg.restarts {
        let mut y = if restart == 0 && cfg.init == PgdInit::Origin {
            let mut y = sub.to_local(start);
            rect.clamp(&mut y);
            y
        } else {
            let mut r = rng::stream(seed, "pgd", restart as u64);
            (0..m)
                .map(|j| {
                    let t = T::of(r.gen_range(0.0..=1.0));
                    (rect.lower()[j] + t * rect.width(j)).min(rect.upper()[j])
                })
                .collect()
        };
        for it in 0..=cfg.iterations {
            let x = sub.to_global(&y);
            let g = net.grad(&x, label)?;
            if best.as_ref().is_none_or(|(_, l)| g.loss > *l) {
                best = Some((x, g.loss));
            }
            if it == cfg.iterations {
                break;
            }
            let gy = match sub.rotation() {
                Some(a) => a.apply(&g.input),
                None => g.input,
            };
            for j in 0..m {
                y[j] += gamma[j] * sign(gy[j]);
            }
            rect.clamp(&mut y);
            debug_assert!(sub.contains(&sub.to_global(&y)).unwrap_or(false));
        }
    }
    let (point, loss) = best.expect("at least one iterate");
    let misclassified = net.classify(&point)? != label;
    Ok(Attack {
        point,
        loss,
        misclassified,
    })
}

/// SGD where each example with a subspace is replaced, at every visit, by
/// a PGD point against the current network. `subspaces[i]` belongs to
/// `data[i]`.
pub fn pgd_train<T: Scalar>(
    data: &[Example<T>],
    subspaces: &[Option<&Subspace<T>>],
    train_cfg: &TrainConfig,
    pgd_cfg: &PgdConfig,
) -> Result<Network<T>, TrainError> {
    pgd_train_logged(data, subspaces, train_cfg, pgd_cfg).map(|(n, _)| n)
}

pub fn pgd_train_logged<T: Scalar>(
    data: &[Example<T>],
    subspaces: &[Option<&Subspace<T>>],
    train_cfg: &TrainConfig,
    pgd_cfg: &PgdConfig,
) -> Result<(Network<T>, TrainLog), TrainError> {
    pgd_cfg.validate()?;
    if subspaces.len() != data.len() {
        return Err(TrainError::InvalidConfig(format!(
            "{} subspaces supplied for {} examples",
            subspaces.len(),
            data.len()
        )));
    }
    for (sub, (x, _)) in subspaces.iter().zip(data) {
        if let Some(s) = sub {
            if s.dim() != x.len() {
                return Err(TrainError::DimensionMismatch {
                    expected: x.len(),
                    found: s.dim(),
                });
            }
        }
    }
    train_loop(data, train_cfg, |net, i, step| match subspaces[i] {
        None => Ok(None),
        Some(sub) => {
            let (x, label) = &data[i];
            let seed = rng::sub_seed(train_cfg.seed, "pgd-train", step);
            pgd_attack(net, sub, *label, x, pgd_cfg, seed).map(|a| Some(a.point))
        }
    })
}
