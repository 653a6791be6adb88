//! Branch and bound over input splits.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::ibp::margin_lower_bound;
use super::{compose_rotation, VerifQuery, VerifResult, VerifyError};
use crate::geometry::AxisRect;
use crate::rng;
use crate::scalar::Scalar;
use crate::train::{pgd_attack, PgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Halve the widest dimension (lowest index on ties).
    #[default]
    WidestDim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabConfig {
    pub max_regions: usize,
    pub attack: PgdConfig,
    pub split_rule: SplitRule,
    /// Wall-clock cap; `None` leaves only `max_regions`.
    pub time_budget: Option<Duration>,
    /// Seeds the per-region attacks.
    pub seed: u64,
}

impl Default for BabConfig {
    fn default() -> Self {
        BabConfig {
            max_regions: 4096,
            attack: PgdConfig::default(),
            split_rule: SplitRule::WidestDim,
            time_budget: Some(Duration::from_secs(10)),
            seed: 0,
        }
    }
}

struct Region<T> {
    rect: AxisRect<T>,
    bound: T,
    order: usize,
}

impl<T: Scalar> PartialEq for Region<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Region<T> {}

impl<T: Scalar> PartialOrd for Region<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Region<T> {
    /// Max-heap order: most negative bound first, then earliest pushed.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Worklist search ordered by margin lower bound. Each popped region is
/// settled when its bound is positive; otherwise its center and a PGD
/// attack look for a counterexample, and failing that it is halved.
/// Verified once the worklist drains, Unknown when the region or time
/// budget runs out.
pub fn bab_verify<T: Scalar>(q: &VerifQuery<'_, T>, cfg: &BabConfig) -> Result<VerifResult<T>, VerifyError> {
    if cfg.max_regions == 0 {
        return Err(VerifyError::InvalidConfig("max_regions must be at least 1".into()));
    }
    cfg.attack.validate()?;
    let started = Instant::now();
    let (net, rect) = compose_rotation(q.net, q.sub)?;
    let mut heap = BinaryHeap::new();
    let mut pushed = 0;
    let bound = margin_lower_bound(&net, &rect, q.target)?;
    heap.push(Region { rect, bound, order: pushed });
    let mut regions = 0;

    while let Some(region) = heap.pop() {
        regions += 1;
        if region.bound > T::zero() {
            // Every remaining region has a larger bound.
            return Ok(VerifResult::verified(regions, started));
        }
        let center = q.sub.to_global(&region.rect.center());
        if q.net.classify(&center)? != q.target {
            return VerifResult::falsified(q, center, regions, started);
        }
        let j = match cfg.split_rule {
            SplitRule::WidestDim => region.rect.widest_dim(),
        };
        if region.rect.width(j) == T::zero() {
            // A single point, classified correctly above.
            continue;
        }
        let piece = q.sub.with_rect(region.rect.clone());
        let seed = rng::sub_seed(cfg.seed, "bab", regions as u64);
        let attack = pgd_attack(q.net, &piece, q.target, &center, &cfg.attack, seed)?;
        if attack.misclassified && q.sub.contains(&attack.point)? {
            return VerifResult::falsified(q, attack.point, regions, started);
        }
        let out_of_time = cfg.time_budget.is_some_and(|b| started.elapsed() >= b);
        if regions + heap.len() >= cfg.max_regions || out_of_time {
            return Ok(VerifResult::unknown(regions, started));
        }
        let (a, b) = region.rect.split(j);
        for child in [a, b] {
            pushed += 1;
            let bound = margin_lower_bound(&net, &child, q.target)?;
            heap.push(Region {
                rect: child,
                bound,
                order: pushed,
            });
        }
    }
    Ok(VerifResult::verified(regions, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::geometry::{Subspace, SubspaceMeta};
    use crate::train::{Activation, Layer, Network};
    use crate::verify::{ibp_verify, Outcome};

    fn boxed(lo: [f64; 2], hi: [f64; 2], class: Label) -> Subspace<f64> {
        Subspace::axis_aligned(class, AxisRect::new(lo.to_vec(), hi.to_vec()).unwrap(), SubspaceMeta::default())
    }

    /// `pos − neg = |x0| + |x1| − 0.5` through relu(±x).
    fn abs_net() -> Network<f64> {
        let hidden = Layer::from_rows(
            &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![0.0; 4],
            Activation::Relu,
        )
        .unwrap();
        let out = Layer::from_rows(&[vec![0.0; 4], vec![1.0; 4]], vec![0.0, -0.5], Activation::None).unwrap();
        Network::new(vec![hidden, out]).unwrap()
    }

    #[test]
    fn ibp_verified_needs_one_region() {
        let net = abs_net();
        let sub = boxed([1.0, 1.0], [2.0, 2.0], Label::Pos);
        let q = VerifQuery::for_subspace(&net, &sub).unwrap();
        assert_eq!(ibp_verify(&q).unwrap().outcome(), Outcome::Verified);
        let r = bab_verify(&q, &BabConfig::default()).unwrap();
        assert_eq!((r.outcome(), r.regions), (Outcome::Verified, 1));
    }

    #[test]
    fn splitting_proves_what_ibp_cannot() {
        // margin = 2·relu(x0) − relu(x0) + 0.1 ≥ 0.1 on [0,1]², but IBP
        // treats the two copies independently and only gets −0.9.
        let hidden = Layer::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]], vec![0.0; 2], Activation::Relu).unwrap();
        let out = Layer::from_rows(&[vec![0.0, 0.0], vec![2.0, -1.0]], vec![0.0, 0.1], Activation::None).unwrap();
        let net = Network::new(vec![hidden, out]).unwrap();
        let sub = boxed([0.0, 0.0], [1.0, 1.0], Label::Pos);
        let q = VerifQuery::for_subspace(&net, &sub).unwrap();
        assert_eq!(ibp_verify(&q).unwrap().outcome(), Outcome::Unknown);
        let r = bab_verify(&q, &BabConfig::default()).unwrap();
        assert_eq!(r.outcome(), Outcome::Verified);
        assert!(r.regions > 1);
    }

    #[test]
    fn planted_counterexample_is_found() {
        // The origin region has margin −0.5; the box center is correct.
        let net = abs_net();
        let sub = boxed([-0.1, -0.1], [1.5, 1.5], Label::Pos);
        let q = VerifQuery::for_subspace(&net, &sub).unwrap();
        let r = bab_verify(&q, &BabConfig::default()).unwrap();
        assert_eq!(r.outcome(), Outcome::Falsified);
        let x = r.counterexample().unwrap();
        assert!(sub.contains(x).unwrap());
        assert_eq!(net.classify(x).unwrap(), Label::Neg);
    }

    #[test]
    fn region_budget_yields_unknown() {
        // The neg margin 0.5 − x0 − x1 reaches exactly zero at (0.25, 0.25);
        // ties classify as neg, so nothing is refutable and the corner
        // region never gets a positive bound.
        let net = abs_net();
        let sub = boxed([0.0, 0.0], [0.25, 0.25], Label::Neg);
        let q = VerifQuery::for_subspace(&net, &sub).unwrap();
        let cfg = BabConfig {
            max_regions: 16,
            ..Default::default()
        };
        let r = bab_verify(&q, &cfg).unwrap();
        assert_eq!(r.outcome(), Outcome::Unknown);
        assert!(r.regions <= 16);
        assert!(bab_verify(&q, &BabConfig { max_regions: 0, ..Default::default() }).is_err());
    }
}
