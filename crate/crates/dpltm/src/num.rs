//! Scalar abstraction and the handful of special functions the crate needs.
//!
//! All numerical modules are generic over [`Scalar`] so the same code runs in
//! `f32` or `f64`. Constants are written as `f64` literals and lifted with
//! [`Scalar::of`]; special functions round-trip through `f64` because that is
//! the precision the underlying implementations carry anyway.

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lift an `f64` constant into this scalar type.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("constant representable in scalar type")
    }

    /// Lower to `f64` (exact for `f32`/`f64`).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Standard normal cumulative distribution function.
///
/// Evaluated through `erfc` so both tails keep full relative accuracy;
/// absolute error is far below 1e-12 in `f64`.
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::of(0.5 * libm::erfc(-x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(x: T) -> T {
    let x = x.as_f64();
    T::of((-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal quantile, by bisection followed by Newton steps on the CDF.
///
/// Panics if `p` is outside (0, 1).
pub fn normal_quantile<T: Scalar>(p: T) -> T {
    let p = p.as_f64();
    assert!(p > 0.0 && p < 1.0, "normal quantile needs p in (0,1)");
    // Bracket down to a short interval, then polish with Newton.
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf::<f64>(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let f = normal_cdf::<f64>(x) - p;
        let d = normal_pdf::<f64>(x);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        x -= f / d;
    }
    T::of(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0_f64) - 0.5).abs() < 1e-15);
        // Phi(1.96) from high-precision tables.
        assert!((normal_cdf(1.959963984540054_f64) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-8.0_f64) - 6.220960574271786e-16).abs() < 1e-20);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 1e-4, 0.025, 0.5, 0.975, 1.0 - 1e-6] {
            let x: f64 = normal_quantile(p);
            assert!(
                (normal_cdf(x) - p).abs() <= 1e-12 * p.max(1e-3),
                "p={p}, x={x}"
            );
        }
    }

    #[test]
    fn works_in_f32() {
        let q: f32 = normal_quantile(0.975_f32);
        assert!((q - 1.959_964).abs() < 1e-4);
    }
}
