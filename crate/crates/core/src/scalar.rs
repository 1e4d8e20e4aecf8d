//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// The solvers, RDM builders, clustering and embedding training are written
/// against this trait. File formats and trial logs always use `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for constants and parsed values.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Smallest tolerance worth asking for at this precision.
    fn tolerance_floor() -> Self;
}

impl Real for f32 {
    fn tolerance_floor() -> Self {
        1e-6
    }
}

impl Real for f64 {
    fn tolerance_floor() -> Self {
        1e-15
    }
}

/// Numerically stable `ln(sum(exp(x)))` over an indexable family, summed left to right.
#[inline]
pub(crate) fn logsumexp_by<T: Real>(len: usize, f: impl Fn(usize) -> T) -> T {
    let mut max = T::neg_infinity();
    for i in 0..len {
        let v = f(i);
        if v > max {
            max = v;
        }
    }
    if !max.is_finite() {
        return max;
    }
    let mut acc = T::zero();
    for i in 0..len {
        acc = acc + (f(i) - max).exp();
    }
    max + acc.ln()
}
