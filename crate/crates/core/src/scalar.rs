//! Floating-point scalar abstraction for the numeric kernels.

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssignOps};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the math kernels are generic over: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + ScalarOperand + Sum + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for converting an f64 literal into the scalar type.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
