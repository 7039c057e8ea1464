//! Scalar abstraction: every numeric module in this crate is generic over
//! [`Real`], instantiated as `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; exact for `f64`, rounded for `f32`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 -> Real conversion")
    }

    /// Conversion from `usize` counts (frame indices, dimensions).
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize -> Real conversion")
    }

    /// Widening conversion to `f64` for I/O and reporting.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real -> f64 conversion")
    }

    /// Narrowing conversion to `f32` for the binary container format.
    fn as_f32(self) -> f32 {
        self.to_f32().expect("Real -> f32 conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
