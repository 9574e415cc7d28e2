//! Scalar abstraction for the numeric core.
//!
//! Feature extraction and the network are generic over [`Scalar`]; the
//! crate root exposes `f64` aliases, which is the precision the pipeline
//! and the model file use.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn from_f64<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("every f64 converts into a supported scalar")
}

pub(crate) fn from_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("every usize converts into a supported scalar")
}

pub(crate) fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
