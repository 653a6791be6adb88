//! Scalar abstraction shared by every numeric module.
//!
//! All geometry, training and verification code is written against
//! [`Scalar`] so the same routines run in `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point element type: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal, rounding to nearest.
    fn of(x: f64) -> Self;

    /// Widens to `f64`.
    fn to_f(self) -> f64;

    /// Smallest representable value strictly greater than `self`.
    fn next_above(self) -> Self;

    /// Largest representable value strictly smaller than `self`.
    fn next_below(self) -> Self;

    /// Frobenius tolerance used when checking `A·Aᵀ = I`.
    fn orthogonality_tolerance() -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f(self) -> f64 {
        self
    }

    #[inline]
    fn next_above(self) -> Self {
        self.next_up()
    }

    #[inline]
    fn next_below(self) -> Self {
        self.next_down()
    }

    fn orthogonality_tolerance() -> Self {
        1e-8
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f(self) -> f64 {
        self as f64
    }

    #[inline]
    fn next_above(self) -> Self {
        self.next_up()
    }

    #[inline]
    fn next_below(self) -> Self {
        self.next_down()
    }

    fn orthogonality_tolerance() -> Self {
        // f32 carries ~7 digits; 1e-8 is below its resolution.
        1e-4
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Maps `x` to `-1`, `0` or `1`. Unlike `Float::signum`, zero maps to zero.
#[inline]
pub fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_are_strict() {
        assert!(0.5f64.next_above() > 0.5);
        assert!(0.5f64.next_below() < 0.5);
        assert!(1.0f32.next_above() > 1.0);
        assert_eq!(0.5f64 + (-100f64).exp(), 0.5);
    }

    #[test]
    fn zero_has_zero_sign() {
        assert_eq!(sign(0.0f64), 0.0);
        assert_eq!(sign(-2.0f32), -1.0);
    }
}
