//! Scalar abstraction shared by every numeric module.
//!
//! All math in this crate is written against [`Scalar`], which is implemented
//! for `f32` and `f64`. Tolerances are expressed in `f64` and widened to a few
//! dozen ulps of the working type, so the same validation code serves both.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable by the zero-bias machinery.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    #[inline]
    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// `base` widened to at least 64 ulps of the working precision.
    #[inline]
    fn tol(base: f64) -> Self {
        let floor = 64.0 * Self::epsilon().as_f64();
        Self::c(base.max(floor))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Neumaier-compensated sum.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sum of a multiset of values that does not depend on the order the values
/// arrive in: sort ascending, then accumulate left to right.
///
/// Every path that forms a sum of population or summand values goes through
/// here, so two constructions of "the same" sum produce the same bits.
pub fn canonical_sum<T: Scalar>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}

/// Integer decoding of a finite scalar; equal values have equal keys.
pub type BitKey = (u64, i16, i8);

/// Hashable bit key for a finite scalar; `-0.0` and `0.0` map to the same key.
pub fn bits<T: Scalar>(x: T) -> BitKey {
    (x + T::zero()).integer_decode()
}

pub(crate) fn sort_total<T: Scalar>(values: &mut [T]) {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let xs = [1.0e16, 1.0, -1.0e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, 2.0);
    }

    #[test]
    fn canonical_sum_is_order_free() {
        let mut a: [f64; 5] = [0.1, 0.2, 0.3, -0.6, 1e-3];
        let mut b: [f64; 5] = [1e-3, -0.6, 0.3, 0.2, 0.1];
        assert_eq!(canonical_sum(&mut a).to_bits(), canonical_sum(&mut b).to_bits());
    }

    #[test]
    fn signed_zero_keys_agree() {
        assert_eq!(bits(0.0f64), bits(-0.0f64));
        assert_ne!(bits(1.0f64), bits(-1.0f64));
    }

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(<f64 as Scalar>::tol(1e-12), 1e-12);
        assert!(<f32 as Scalar>::tol(1e-12) > 1e-6);
    }
}
