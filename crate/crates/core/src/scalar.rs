use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating point scalar used throughout the crate.
///
/// Implemented for `f32` and `f64`. Archives always store `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + LinalgScalar
    + ScalarOperand
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, rounding to nearest.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    /// Iterative solver tolerance appropriate for the precision.
    fn default_tol() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(100.0))
    }

    /// The kappa division floor in this precision.
    fn kappa_floor() -> Self {
        Self::lit(crate::KAPPA_FLOOR)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sorts scalars descending with NaN last; stable so equal keys keep their order.
pub(crate) fn cmp_desc<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => b.partial_cmp(a).unwrap_or(Ordering::Equal),
    }
}
