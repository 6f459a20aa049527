//! Numeric traits the engines are generic over.
//!
//! Floating-point kernels (MCL flow, JSD) need logarithms and powers, so they
//! take a [`Scalar`]. Ratio-valued metrics such as conductance only need field
//! arithmetic and can be evaluated exactly with [`num_rational::Ratio`] through
//! [`Quotient`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating point: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or parameter.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Anything a count ratio can be expressed in: floats, or exact rationals.
pub trait Quotient: Num + FromPrimitive + Clone + PartialOrd + Debug {
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count does not fit the quotient type")
    }
}

impl<T> Quotient for T where T: Num + FromPrimitive + Clone + PartialOrd + Debug {}
