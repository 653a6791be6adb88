//! Deciding whether a network maps a whole subspace to its class: sound
//! IBP bounding, and branch and bound over input splits with attack-based
//! falsification.

mod bab;
mod ibp;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::geometry::{AxisRect, GeometryError, Subspace};
use crate::scalar::Scalar;
use crate::train::{Activation, Layer, Network, TrainError};

pub use bab::{bab_verify, BabConfig, SplitRule};
pub use ibp::{ibp_bounds, margin_at, margin_lower_bound, Interval};

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("network takes {expected} inputs but the subspace has dimension {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no queries to verify")]
    EmptySuite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("counterexample is {0}")]
    InvalidCounterexample(&'static str),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A network, a subspace and the class every point must receive.
#[derive(Debug, Clone, Copy)]
pub struct VerifQuery<'a, T: Scalar> {
    pub net: &'a Network<T>,
    pub sub: &'a Subspace<T>,
    pub target: Label,
}

impl<'a, T: Scalar> VerifQuery<'a, T> {
    pub fn new(net: &'a Network<T>, sub: &'a Subspace<T>, target: Label) -> Result<Self, VerifyError> {
        if net.input_dim() != sub.dim() {
            return Err(VerifyError::DimensionMismatch {
                expected: net.input_dim(),
                found: sub.dim(),
            });
        }
        Ok(VerifQuery { net, sub, target })
    }

    /// Query for the subspace's own class.
    pub fn for_subspace(net: &'a Network<T>, sub: &'a Subspace<T>) -> Result<Self, VerifyError> {
        Self::new(net, sub, sub.class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Verified,
    Falsified,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status<T> {
    Verified,
    Falsified(Vec<T>),
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifResult<T> {
    status: Status<T>,
    /// Regions bounded (1 for plain IBP).
    pub regions: usize,
    pub millis: u64,
}

impl<T: Scalar> VerifResult<T> {
    pub(crate) fn verified(regions: usize, started: Instant) -> Self {
        VerifResult {
            status: Status::Verified,
            regions,
            millis: started.elapsed().as_millis() as u64,
        }
    }

    pub(crate) fn unknown(regions: usize, started: Instant) -> Self {
        VerifResult {
            status: Status::Unknown,
            regions,
            millis: started.elapsed().as_millis() as u64,
        }
    }

    /// Accepts `x` only if it lies in the query's subspace and is
    /// classified as something other than the target.
    pub fn falsified(q: &VerifQuery<'_, T>, x: Vec<T>, regions: usize, started: Instant) -> Result<Self, VerifyError> {
        if !q.sub.contains(&x)? {
            return Err(VerifyError::InvalidCounterexample("outside the subspace"));
        }
        if q.net.classify(&x)? == q.target {
            return Err(VerifyError::InvalidCounterexample("classified as the target"));
        }
        Ok(VerifResult {
            status: Status::Falsified(x),
            regions,
            millis: started.elapsed().as_millis() as u64,
        })
    }

    pub fn status(&self) -> &Status<T> {
        &self.status
    }

    pub fn outcome(&self) -> Outcome {
        match self.status {
            Status::Verified => Outcome::Verified,
            Status::Falsified(_) => Outcome::Falsified,
            Status::Unknown => Outcome::Unknown,
        }
    }

    pub fn counterexample(&self) -> Option<&[T]> {
        match &self.status {
            Status::Falsified(x) => Some(x),
            _ => None,
        }
    }

    pub fn to_record(&self) -> ResultRecord {
        ResultRecord {
            status: self.outcome(),
            counterexample: self.counterexample().map(|x| x.iter().map(|v| v.to_f()).collect()),
            regions: self.regions,
            millis: self.millis,
        }
    }
}

/// One line of a results JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub status: Outcome,
    pub counterexample: Option<Vec<f64>>,
    pub regions: usize,
    pub millis: u64,
}

/// Folds the subspace's change of basis into the first layer, returning a
/// network over rect coordinates together with the rect:
/// `net'(y) = net(y·Aᵀ + center)`.
pub fn compose_rotation<T: Scalar>(net: &Network<T>, sub: &Subspace<T>) -> Result<(Network<T>, AxisRect<T>), VerifyError> {
    if net.input_dim() != sub.dim() {
        return Err(VerifyError::DimensionMismatch {
            expected: net.input_dim(),
            found: sub.dim(),
        });
    }
    let Some(a) = sub.rotation() else {
        return Ok((net.clone(), sub.rect().clone()));
    };
    let m = sub.dim();
    let first = &net.layers()[0];
    // W' = W·A, b' = W·center + b.
    let mut weights = Vec::with_capacity(first.outputs() * m);
    let mut bias = Vec::with_capacity(first.outputs());
    for o in 0..first.outputs() {
        let w = first.row(o);
        for j in 0..m {
            weights.push((0..m).map(|i| w[i] * a.get(i, j)).sum());
        }
        let shift: T = match sub.center() {
            Some(c) => w.iter().zip(c).map(|(&wi, &ci)| wi * ci).sum(),
            None => T::zero(),
        };
        bias.push(first.bias()[o] + shift);
    }
    let mut layers = vec![Layer::new(m, weights, bias, first.activation)?];
    layers.extend(net.layers()[1..].iter().cloned());
    debug_assert!(layers.last().map(|l| l.activation) == Some(Activation::None));
    Ok((Network::new(layers)?, sub.rect().clone()))
}

/// Single-shot IBP: Verified when the margin bound is positive, Falsified
/// when the rect center is misclassified, Unknown otherwise.
pub fn ibp_verify<T: Scalar>(q: &VerifQuery<'_, T>) -> Result<VerifResult<T>, VerifyError> {
    let started = Instant::now();
    let (net, rect) = compose_rotation(q.net, q.sub)?;
    if margin_lower_bound(&net, &rect, q.target)? > T::zero() {
        return Ok(VerifResult::verified(1, started));
    }
    let center = q.sub.to_global(&rect.center());
    if q.net.classify(&center)? != q.target {
        return VerifResult::falsified(q, center, 1, started);
    }
    Ok(VerifResult::unknown(1, started))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum VerifyMode {
    #[default]
    Ibp,
    Bab(BabConfig),
}

/// Verifies every query independently (in parallel); results keep the
/// query order.
pub fn verify_suite<T: Scalar>(queries: &[VerifQuery<'_, T>], mode: &VerifyMode) -> Result<Vec<VerifResult<T>>, VerifyError> {
    if queries.is_empty() {
        return Err(VerifyError::EmptySuite);
    }
    queries
        .par_iter()
        .map(|q| match mode {
            VerifyMode::Ibp => ibp_verify(q),
            VerifyMode::Bab(cfg) => bab_verify(q, cfg),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingMatrix;
    use crate::geometry::{RotationMode, SubspaceMeta};
    use rand::Rng as _;

    fn point(x: &[f64], class: Label) -> Subspace<f64> {
        Subspace::axis_aligned(class, AxisRect::point(x), SubspaceMeta::default())
    }

    #[test]
    fn point_queries() {
        let net = Network::<f64>::init(3, &[5], 0).unwrap();
        let x = [0.1, 0.2, 0.3];
        let label = net.classify(&x).unwrap();
        let good = point(&x, label);
        let bad = point(&x, label.other());
        let r = ibp_verify(&VerifQuery::for_subspace(&net, &good).unwrap()).unwrap();
        assert_eq!((r.outcome(), r.regions), (Outcome::Verified, 1));
        let r = ibp_verify(&VerifQuery::for_subspace(&net, &bad).unwrap()).unwrap();
        assert_eq!(r.outcome(), Outcome::Falsified);
        assert_eq!(r.counterexample().unwrap(), x);
    }

    #[test]
    fn counterexamples_are_checked() {
        let net = Network::<f64>::init(2, &[4], 1).unwrap();
        let x = [0.0, 0.0];
        let label = net.classify(&x).unwrap();
        let sub = point(&x, label);
        let q = VerifQuery::for_subspace(&net, &sub).unwrap();
        let now = Instant::now();
        assert!(VerifResult::falsified(&q, x.to_vec(), 1, now).is_err());
        assert!(VerifResult::falsified(&q, vec![1.0, 1.0], 1, now).is_err());
    }

    fn diagonal() -> Subspace<f64> {
        let rows = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![0.1, -0.1], vec![-0.1, 0.1]];
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        Subspace::enclosing(&x, Label::Pos, RotationMode::Centered, SubspaceMeta::default()).unwrap()
    }

    #[test]
    fn composed_network_matches_on_rect_points() {
        let sub = diagonal();
        let net = Network::<f64>::init(2, &[6], 3).unwrap();
        let (composed, rect) = compose_rotation(&net, &sub).unwrap();
        let mut r = crate::rng::stream(0, "compose", 0);
        for _ in 0..100 {
            let y: Vec<f64> = (0..2)
                .map(|j| rect.lower()[j] + r.gen::<f64>() * rect.width(j))
                .collect();
            let a = composed.forward(&y).unwrap();
            let b = net.forward(&sub.to_global(&y)).unwrap();
            for k in 0..2 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
        let plain = Subspace::axis_aligned(Label::Pos, rect.clone(), SubspaceMeta::default());
        assert_eq!(compose_rotation(&net, &plain).unwrap().0, net);
    }

    #[test]
    fn suite_preserves_order_and_rejects_empty() {
        let net = Network::<f64>::init(2, &[4], 2).unwrap();
        let subs: Vec<Subspace<f64>> = (0..6)
            .map(|i| {
                let x = [i as f64 * 0.3 - 0.9, 0.5 - i as f64 * 0.2];
                point(&x, net.classify(&x).unwrap())
            })
            .collect();
        let queries: Vec<_> = subs.iter().map(|s| VerifQuery::for_subspace(&net, s).unwrap()).collect();
        let results = verify_suite(&queries, &VerifyMode::Ibp).unwrap();
        assert!(results.iter().all(|r| r.outcome() == Outcome::Verified));
        let empty: Vec<VerifQuery<'_, f64>> = Vec::new();
        assert_eq!(verify_suite(&empty, &VerifyMode::Ibp).unwrap_err(), VerifyError::EmptySuite);
    }

    #[test]
    fn record_json_shape() {
        let net = Network::<f64>::init(2, &[4], 2).unwrap();
        let x = [0.4, 0.4];
        let sub = point(&x, net.classify(&x).unwrap().other());
        let r = ibp_verify(&VerifQuery::for_subspace(&net, &sub).unwrap()).unwrap();
        let json = serde_json::to_value(r.to_record()).unwrap();
        assert_eq!(json["status"], "falsified");
        assert_eq!(json["counterexample"].as_array().unwrap().len(), 2);
        assert!(json.get("regions").is_some() && json.get("millis").is_some());
    }
}
