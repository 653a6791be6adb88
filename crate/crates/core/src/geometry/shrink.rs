//! Bound tightening that excludes wrong-class embeddings.

use super::{GeometryError, Subspace};
use crate::dataset::Label;
use crate::scalar::Scalar;

/// `e^{-100}`.
pub const DEFAULT_SHRINK_DELTA: f64 = 3.720_075_976_020_836e-44;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// One applied move.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkStep<T> {
    /// Index into the `embedded` slice.
    pub point: usize,
    pub dim: usize,
    pub side: Side,
    pub bound: T,
    /// Target-class points each candidate move would exclude; `None` when
    /// the dimension cannot exclude the point.
    pub penalties: Vec<Option<usize>>,
}

pub fn shrink<T: Scalar>(
    sub: &Subspace<T>,
    embedded: &[(Vec<T>, Label)],
    target: Label,
    delta: T,
) -> Result<Subspace<T>, GeometryError> {
    shrink_traced(sub, embedded, target, delta).map(|(s, _)| s)
}

/// [`shrink`] together with the sequence of moves it made.
///
/// Wrong-class points are visited in input order. A point still inside
/// the rect is removed by moving, in one dimension, the bound it is
/// closer to (lower on ties) to just past it; the dimension excluding
/// the fewest target-class points wins, lowest index on ties. When
/// `p_j ± delta` rounds back onto `p_j` the bound moves to the next
/// representable value instead.
pub fn shrink_traced<T: Scalar>(
    sub: &Subspace<T>,
    embedded: &[(Vec<T>, Label)],
    target: Label,
    delta: T,
) -> Result<(Subspace<T>, Vec<ShrinkStep<T>>), GeometryError> {
    if !(delta > T::zero()) {
        return Err(GeometryError::NonPositiveDelta(delta.to_f()));
    }
    let m = sub.dim();
    let mut local = Vec::with_capacity(embedded.len());
    let mut slack = Vec::with_capacity(embedded.len());
    for (x, _) in embedded {
        if x.len() != m {
            return Err(GeometryError::DimensionMismatch {
                expected: m,
                found: x.len(),
            });
        }
        local.push(sub.to_local(x));
        slack.push(sub.membership_slack(x));
    }

    let mut rect = sub.rect().clone();
    let mut steps = Vec::new();
    let inside = |rect: &super::AxisRect<T>, i: usize| super::within(rect, &local[i], slack[i]);

    for (i, (_, label)) in embedded.iter().enumerate() {
        if *label == target || !inside(&rect, i) {
            continue;
        }
        let p = &local[i];
        let s = slack[i];
        let kept: Vec<usize> = (0..embedded.len())
            .filter(|&k| embedded[k].1 == target && inside(&rect, k))
            .collect();

        let mut candidates = Vec::with_capacity(m);
        for j in 0..m {
            let (l, u) = (rect.lower[j], rect.upper[j]);
            if l >= u {
                candidates.push(None);
                continue;
            }
            let side = if p[j] - l <= u - p[j] { Side::Lower } else { Side::Upper };
            let bound = match side {
                Side::Lower => {
                    let mut b = (p[j] + s + delta).min(u);
                    while !(p[j] < b - s) && b < u {
                        b = b.next_above();
                    }
                    (p[j] < b - s).then_some(b)
                }
                Side::Upper => {
                    let mut b = (p[j] - s - delta).max(l);
                    while !(p[j] > b + s) && b > l {
                        b = b.next_below();
                    }
                    (p[j] > b + s).then_some(b)
                }
            };
            candidates.push(bound.map(|b| {
                let excluded = kept
                    .iter()
                    .filter(|&&k| match side {
                        Side::Lower => local[k][j] < b - slack[k],
                        Side::Upper => local[k][j] > b + slack[k],
                    })
                    .count();
                (side, b, excluded)
            }));
        }

        let best = candidates
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.map(|(side, b, e)| (j, side, b, e)))
            .min_by_key(|&(j, _, _, e)| (e, j))
            .ok_or(GeometryError::CannotExclude(i))?;
        let (dim, side, bound, _) = best;
        match side {
            Side::Lower => rect.set_lower(dim, bound),
            Side::Upper => rect.set_upper(dim, bound),
        }
        debug_assert!(!inside(&rect, i));
        steps.push(ShrinkStep {
            point: i,
            dim,
            side,
            bound,
            penalties: candidates.iter().map(|c| c.map(|(_, _, e)| e)).collect(),
        });
    }

    let mut out = sub.with_rect(rect);
    if !steps.is_empty() && !out.meta.construction.ends_with("+shrink") {
        out.meta.construction.push_str("+shrink");
    }
    Ok((out, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AxisRect, SubspaceMeta};

    fn square() -> Subspace<f64> {
        let rect = AxisRect::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        Subspace::axis_aligned(Label::Pos, rect, SubspaceMeta::default())
    }

    fn points() -> Vec<(Vec<f64>, Label)> {
        let mut pts: Vec<(Vec<f64>, Label)> = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0], [0.1, 1.5]]
            .iter()
            .map(|p| (p.to_vec(), Label::Pos))
            .collect();
        pts.push((vec![0.2, 0.5], Label::Neg));
        pts
    }

    #[test]
    fn delta_constant_is_e_to_minus_100() {
        assert_eq!(DEFAULT_SHRINK_DELTA, (-100f64).exp());
    }

    #[test]
    fn picks_the_cheaper_dimension() {
        let (out, steps) = shrink_traced(&square(), &points(), Label::Pos, DEFAULT_SHRINK_DELTA).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].penalties, [Some(3), Some(2)]);
        assert_eq!((steps[0].dim, steps[0].side), (1, Side::Lower));
        assert_eq!(out.rect().lower()[0], 0.0);
        // 0.5 + e^-100 rounds to 0.5 in f64, so the bound escalates.
        assert_eq!(out.rect().lower()[1], 0.5f64.next_up());
        assert!(!out.contains(&[0.2, 0.5]).unwrap());
        assert!(out.contains(&[0.1, 1.5]).unwrap());
        assert_eq!(out.rect().upper(), [2.0, 2.0]);
    }

    #[test]
    fn no_wrong_class_inside_is_a_no_op() {
        let pts = vec![(vec![5.0, 5.0], Label::Neg), (vec![1.0, 1.0], Label::Pos)];
        let (out, steps) = shrink_traced(&square(), &pts, Label::Pos, 1e-3).unwrap();
        assert!(steps.is_empty());
        assert_eq!(out, square());
    }

    #[test]
    fn midpoint_moves_lower_bound() {
        let pts = vec![(vec![1.0, 1.0], Label::Neg)];
        let (out, steps) = shrink_traced(&square(), &pts, Label::Pos, 0.25).unwrap();
        assert_eq!((steps[0].dim, steps[0].side), (0, Side::Lower));
        assert_eq!(out.rect().lower(), [1.25, 0.0]);
        assert_eq!(out.meta.construction, "+shrink");
    }

    #[test]
    fn fully_degenerate_rect_is_an_error() {
        let point = Subspace::axis_aligned(Label::Pos, AxisRect::point(&[1.0, 1.0]), SubspaceMeta::default());
        let pts = vec![(vec![1.0, 1.0], Label::Neg)];
        assert_eq!(
            shrink(&point, &pts, Label::Pos, 0.1).unwrap_err(),
            GeometryError::CannotExclude(0)
        );
        assert!(shrink(&square(), &pts, Label::Pos, 0.0).is_err());
    }
}
