//! Interval bound propagation in center/radius form.
//!
//! Every affine step is widened by a rounding allowance of
//! `(n + 2)·ε·(|W|·|μ| + |W|·r + |b|)`, so bounds contain the values the
//! floating-point forward pass actually produces.

use crate::dataset::Label;
use crate::geometry::AxisRect;
use crate::scalar::Scalar;
use crate::train::{Activation, Layer, Network};

use super::VerifyError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, v: T) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn affine<'a, T: Scalar>(
    rows: impl Iterator<Item = (&'a [T], T)>,
    mu: &[T],
    r: &[T],
) -> (Vec<T>, Vec<T>) {
    let gamma = T::of(mu.len() as f64 + 2.0) * T::epsilon();
    rows.map(|(w, b)| {
        let (mut c, mut rad, mut mag) = (b, T::zero(), b.abs());
        for ((&wi, &m), &ri) in w.iter().zip(mu).zip(r) {
            c += wi * m;
            rad += wi.abs() * ri;
            mag += wi.abs() * m.abs();
        }
        (c, rad + gamma * (mag + rad))
    })
    .unzip()
}

fn relu<T: Scalar>(mu: &mut [T], r: &mut [T]) {
    let two = T::of(2.0);
    for (m, rad) in mu.iter_mut().zip(r.iter_mut()) {
        let lo = (*m - *rad).max(T::zero());
        let hi = (*m + *rad).max(T::zero());
        *m = lo + (hi - lo) / two;
        *rad = (hi - lo) / two;
    }
}

fn layer_rows<T: Scalar>(layer: &Layer<T>) -> impl Iterator<Item = (&[T], T)> {
    (0..layer.outputs()).map(move |o| (layer.row(o), layer.bias()[o]))
}

/// Center/radius after every layer but the last.
fn hidden<T: Scalar>(net: &Network<T>, rect: &AxisRect<T>) -> (Vec<T>, Vec<T>) {
    let mut mu = rect.center();
    let mut r: Vec<T> = (0..rect.dim()).map(|j| rect.width(j) / T::of(2.0)).collect();
    let layers = net.layers();
    for layer in &layers[..layers.len() - 1] {
        let (m, rad) = affine(layer_rows(layer), &mu, &r);
        mu = m;
        r = rad;
        if layer.activation == Activation::Relu {
            relu(&mut mu, &mut r);
        }
    }
    (mu, r)
}

fn check<T: Scalar>(net: &Network<T>, rect: &AxisRect<T>) -> Result<(), VerifyError> {
    if rect.dim() != net.input_dim() {
        return Err(VerifyError::DimensionMismatch {
            expected: net.input_dim(),
            found: rect.dim(),
        });
    }
    Ok(())
}

/// Sound output intervals of `net` over `rect`, one per logit.
pub fn ibp_bounds<T: Scalar>(net: &Network<T>, rect: &AxisRect<T>) -> Result<Vec<Interval<T>>, VerifyError> {
    check(net, rect)?;
    let (mu, r) = hidden(net, rect);
    let last = net.layers().last().unwrap();
    let (mu, r) = affine(layer_rows(last), &mu, &r);
    Ok(mu
        .iter()
        .zip(&r)
        .map(|(&m, &rad)| Interval {
            lower: m - rad,
            upper: m + rad,
        })
        .collect())
}

/// Sound lower bound of `logit_target − logit_other` over `rect`, with the
/// difference folded into the last layer before bounding.
pub fn margin_lower_bound<T: Scalar>(net: &Network<T>, rect: &AxisRect<T>, target: Label) -> Result<T, VerifyError> {
    check(net, rect)?;
    let (mu, r) = hidden(net, rect);
    let last = net.layers().last().unwrap();
    let (t, o) = (target.index(), target.other().index());
    let w: Vec<T> = last.row(t).iter().zip(last.row(o)).map(|(&a, &b)| a - b).collect();
    let b = last.bias()[t] - last.bias()[o];
    let (m, rad) = affine(std::iter::once((w.as_slice(), b)), &mu, &r);
    Ok(m[0] - rad[0])
}

/// Exact margin at a point.
pub fn margin_at<T: Scalar>(net: &Network<T>, x: &[T], target: Label) -> Result<T, VerifyError> {
    let z = net.forward(x)?;
    Ok(z[target.index()] - z[target.other().index()])
}
