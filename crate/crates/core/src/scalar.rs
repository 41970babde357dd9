//! Scalar abstraction over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable throughout the crate.
///
/// Constants and random draws are produced in `f64` and converted, so a
/// given seed yields the same sequence of values (up to rounding) for both
/// scalar types.
pub trait Scalar:
    Float
    + NumAssignOps
    + ScalarOperand
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Floor applied to probabilities before any logarithm or division.
    fn prob_floor() -> Self {
        Self::from_f64(1e-12)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}
