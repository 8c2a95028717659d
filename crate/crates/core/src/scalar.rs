//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the game model and dynamics are evaluated in.
///
/// Implemented for `f32` and `f64`. Tolerances and options are carried as
/// `f64` and converted with [`Scalar::of`] at the point of use.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    /// Lossy conversion to `f64` used for reporting and eigen-analysis.
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// ℓ₁ distance between two equally sized slices.
pub fn l1_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

/// ℓ₁ norm of a slice.
pub fn l1_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|x| x.abs()).sum()
}
