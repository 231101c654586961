//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal or computed constant.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Real")
    }

    /// Conversion from a count.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Median of a scratch buffer. Reorders `values`. Returns zero for an empty slice.
pub fn median_in_place<T: Real>(values: &mut [T]) -> T {
    let n = values.len();
    if n == 0 {
        return T::zero();
    }
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, cmp);
    let hi = *upper;
    if n % 2 == 1 {
        hi
    } else {
        let lo = lower.iter().copied().fold(T::neg_infinity(), T::max);
        (lo + hi) / T::lit(2.0)
    }
}

/// Consistency factor turning a median absolute deviation into a Gaussian sigma.
pub const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;

/// Gaussian-consistent sigma from the median absolute deviation. Reorders `values`.
pub fn mad_sigma_in_place<T: Real>(values: &mut [T]) -> T {
    let med = median_in_place(values);
    for v in values.iter_mut() {
        *v = (*v - med).abs();
    }
    median_in_place(values) * T::lit(MAD_TO_SIGMA)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_and_even() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0_f32, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median_in_place::<f64>(&mut []), 0.0);
    }

    #[test]
    fn mad_of_constant_is_zero() {
        assert_eq!(mad_sigma_in_place(&mut [5.0; 7]), 0.0);
    }
}
