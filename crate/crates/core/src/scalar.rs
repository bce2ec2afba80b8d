//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Reduces an angle in degrees to `[0, 360)`.
pub fn wrap_degrees<T: Scalar>(deg: T) -> T {
    let full = T::of(360.0);
    let r = deg % full;
    let r = if r < T::zero() { r + full } else { r };
    // `-1e-20 % 360 + 360` rounds to exactly 360.
    if r >= full {
        T::zero()
    } else {
        r
    }
}

/// Reduces an hour value to `[0, 24)`.
pub fn wrap_hours<T: Scalar>(h: T) -> T {
    wrap_degrees(h * T::of(15.0)) / T::of(15.0)
}

pub(crate) fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().copied().sum::<T>() / T::of_usize(xs.len())
}

/// Population standard deviation.
pub(crate) fn std_pop<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::of_usize(xs.len());
    var.sqrt()
}
