//! Scalar abstraction for the numerical kernels.

use std::fmt;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real floating point type the linear algebra and integrators are generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
