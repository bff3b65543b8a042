use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the geometry and envelope code.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    /// A relative tolerance no tighter than what the type can resolve.
    #[inline]
    fn tol(base: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(16.0);
        Self::lit(base).max(floor)
    }

    /// As `tol`, for residuals summed over several trig terms.
    #[inline]
    fn residual_tol(base: f64) -> Self {
        Self::lit(base).max(Self::epsilon() * Self::lit(1024.0))
    }

    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Wraps an angle into (-pi, pi].
pub fn wrap_pi<T: Scalar>(a: T) -> T {
    let tau = T::two_pi();
    let mut r = a - tau * (a / tau).round();
    if r <= -T::PI() {
        r = r + tau;
    } else if r > T::PI() {
        r = r - tau;
    }
    r
}

/// Wraps an angle into [0, 2pi).
pub fn wrap_2pi<T: Scalar>(a: T) -> T {
    let tau = T::two_pi();
    let mut r = a - tau * (a / tau).floor();
    if r >= tau {
        r = r - tau;
    }
    if r < T::zero() {
        r = T::zero();
    }
    r
}

/// `sin(x)/x`, stable near zero.
pub fn sinc<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(1e-4) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + x2 * x2 / T::lit(120.0)
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_pi_range() {
        assert_eq!(wrap_pi(PI), PI);
        assert_eq!(wrap_pi(-PI), PI);
        assert!((wrap_pi(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_pi(0.5 - 4.0 * PI) - 0.5).abs() < 1e-12);
        assert_eq!(wrap_pi(0.0_f32), 0.0);
    }

    #[test]
    fn wrap_2pi_range() {
        assert_eq!(wrap_2pi(0.0), 0.0);
        assert!((wrap_2pi(-0.25) - (2.0 * PI - 0.25)).abs() < 1e-12);
        assert!(wrap_2pi(2.0 * PI) < 1e-12);
        assert!(wrap_2pi(-1e-300) < 2.0 * PI);
    }

    #[test]
    fn sinc_matches_direct_form() {
        for &x in &[1e-6, 1e-4, 0.3, 2.0] {
            assert!((sinc(x) - (x as f64).sin() / x).abs() < 1e-15);
        }
        assert_eq!(sinc(0.0), 1.0);
    }
}
