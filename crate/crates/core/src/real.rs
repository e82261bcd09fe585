//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the solvers are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal; every `Real` can represent (a rounding of) any `f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite or infinite float")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Vec2<T> = [T; 2];

#[inline]
pub(crate) fn dot<T: Real>(a: Vec2<T>, b: Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm<T: Real>(a: Vec2<T>) -> T {
    a[0].hypot(a[1])
}

/// Largest speed `c > 0` such that `c * dir - wind` has length `speed`, i.e. the
/// ground speed achievable along the unit vector `dir` when rowing at `speed`
/// against `wind`. Requires `speed > |wind|`.
#[inline]
pub(crate) fn ground_speed<T: Real>(speed: T, wind: Vec2<T>, dir: Vec2<T>) -> T {
    let along = dot(dir, wind);
    along + (speed * speed - dot(wind, wind) + along * along).sqrt()
}
