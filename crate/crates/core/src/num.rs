//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Metrics, calibration and embedding math are written once against
//! [`Scalar`] and instantiated for `f32` or `f64`. The crate root exposes
//! `f64` aliases for the common case.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable by the metric and calibration code.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts an `f64` literal. Every supported scalar can represent
    /// (an approximation of) any finite `f64`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to scalar")
    }

    /// Converts a count.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count converts to scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
}

/// Ratio that is zero when the denominator is zero.
pub(crate) fn safe_div<T: Scalar>(num: T, den: T) -> T {
    if den == T::zero() {
        T::zero()
    } else {
        num / den
    }
}

/// Harmonic mean of precision and recall, zero when both are zero.
pub(crate) fn harmonic<T: Scalar>(p: T, r: T) -> T {
    safe_div(T::lit(2.0) * p * r, p + r)
}

pub(crate) fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}
