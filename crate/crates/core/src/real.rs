//! Scalar abstraction for the numeric core.
//!
//! The link models, the compression model and the MLP machinery are generic
//! over [`Real`] so they can run in `f32` or `f64`. The simulator and the
//! trainer use the crate-level [`crate::Scalar`] alias (`f64`).

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and configuration values.
    fn real(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("finite f64 constant")
    }

    /// Widening conversion to `f64` for reporting.
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar fits in f64")
    }

    fn of_usize(n: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(n).expect("usize fits in scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
