//! Scalar abstraction shared by the numeric parts of the pipeline.
//!
//! Vitals, smoothing, the tilt angle report and the power budget are generic
//! over [`Scalar`]; `f64` is the default everywhere and `f32` is supported
//! for targets where that is the native float.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable by the pipeline: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Display + Debug + FromStr + Default + Send + Sync + 'static
{
    /// Lossless for small integers and the decimal constants used here.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
