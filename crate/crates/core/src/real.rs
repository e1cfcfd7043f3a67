//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the whole library is generic over.
///
/// Implemented for `f32` and `f64`. The acceptance tolerances assume `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count or index into the working scalar.
#[inline]
pub fn from_usize<R: Real>(n: usize) -> R {
    R::from_usize(n).expect("count representable in scalar type")
}

#[inline]
pub fn to_f64<R: Real>(x: R) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Compensated (Neumaier) summation in a fixed traversal order.
pub fn neumaier_sum<R: Real, I: IntoIterator<Item = R>>(values: I) -> R {
    let mut sum = R::zero();
    let mut comp = R::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

/// Euclidean dot product of two equally sized slices (compensated).
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    neumaier_sum(a.iter().zip(b).map(|(&x, &y)| x * y))
}

pub fn norm2<R: Real>(a: &[R]) -> R {
    dot(a, a).sqrt()
}

pub fn norm_inf<R: Real>(a: &[R]) -> R {
    a.iter().fold(R::zero(), |m, &x| m.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy<R: Real>(alpha: R, x: &[R], y: &mut [R]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let values = [1.0f64, 1e-16, 1e-16, -1.0];
        assert_eq!(neumaier_sum(values), 2e-16);
    }

    #[test]
    fn generic_over_f32() {
        let s: f32 = neumaier_sum([0.5f32, 0.25]);
        assert_eq!(s, 0.75);
        assert_eq!(lit::<f32>(0.5), 0.5);
    }
}
