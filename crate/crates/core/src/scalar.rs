//! Scalar abstractions.
//!
//! Every numeric routine in the crate is written against [`Real`], so the
//! same code runs in `f32` or `f64`. The LP oracle additionally works over
//! [`LpField`], which admits exact rational arithmetic.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive, Zero};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Tolerance used when checking that a probability vector sums to one.
    fn sum_tolerance() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(64.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ordered field used by the simplex oracle.
///
/// Floating point implementations compare against a small pivot tolerance;
/// the rational implementation is exact.
pub trait LpField: Clone + Debug + PartialOrd + Num + Neg<Output = Self> {
    fn is_positive(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn from_f64_exact(x: f64) -> Option<Self>;
    fn to_f64_lossy(&self) -> f64;
}

impl LpField for f64 {
    fn is_positive(&self) -> bool {
        *self > 1e-12
    }
    fn is_negative(&self) -> bool {
        *self < -1e-12
    }
    fn from_f64_exact(x: f64) -> Option<Self> {
        Some(x)
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl LpField for BigRational {
    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn from_f64_exact(x: f64) -> Option<Self> {
        if x.is_zero() {
            return Some(BigRational::from_integer(BigInt::zero()));
        }
        BigRational::from_float(x)
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}
