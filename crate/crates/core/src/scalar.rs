//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real number type the solver is generic over (`f32` and `f64` in practice).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for types that cannot represent finite doubles.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar type cannot represent literal")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("scalar type cannot represent count")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}
