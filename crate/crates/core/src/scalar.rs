//! Scalar abstraction shared by the geometry and autodiff layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine-precision-aware tolerance used for geometric invariants.
    fn default_tolerance() -> Self;
}

impl Real for f32 {
    fn default_tolerance() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn default_tolerance() -> Self {
        1e-12
    }
}

/// Reduce an angle to `[0, 2π)`. A value that rounds to `2π` maps to 0.
pub fn canonical_angle<T: Real>(theta: T) -> T {
    let tau = T::TAU();
    let mut r = theta % tau;
    if r < T::zero() {
        r = r + tau;
    }
    if r >= tau {
        r = T::zero();
    }
    r
}

/// Signed wrap of an angle to `(-π, π]`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let pi = T::PI();
    let r = canonical_angle(theta);
    if r > pi {
        r - T::TAU()
    } else {
        r
    }
}

/// Geodesic distance between two angles on the circle, in `[0, π]`.
pub fn circular_distance<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn canonical_range() {
        assert_eq!(canonical_angle(0.0f64), 0.0);
        assert!((canonical_angle(5.0 * PI / 2.0) - PI / 2.0).abs() < 1e-12);
        assert!((canonical_angle(-PI / 2.0) - 3.0 * PI / 2.0).abs() < 1e-12);
        assert_eq!(canonical_angle(TAU), 0.0);
        // -tiny % tau + tau rounds to tau
        assert_eq!(canonical_angle(-1e-18f64), 0.0);
        assert!(canonical_angle(-1e-7f32) < std::f32::consts::TAU);
    }

    #[test]
    fn wrap_and_distance() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(PI) - PI).abs() < 1e-12);
        assert!((circular_distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert!(circular_distance(1.0f64, 1.0 + PI) <= PI + 1e-15);
    }
}
