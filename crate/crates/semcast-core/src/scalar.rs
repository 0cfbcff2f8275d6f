//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type for model parameters, signals, and channel symbols.
///
/// Everything numeric in this crate is generic over `Real` so the same code
/// runs at f32 (production, small checkpoints) and f64 (oracles, gradient
/// checks). Reductions accumulate in f64 independently of the scalar.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion for accumulators and statistics.
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Conversion from an f64 accumulator back into the working scalar.
    fn from64(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}
