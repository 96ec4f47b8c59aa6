//! Scalar abstraction: the whole crate is generic over the floating-point
//! type through [`Real`], with `f64` as the intended precision and `f32`
//! supported for quick, lower-accuracy sweeps.

use nalgebra::{Complex, RealField};
use num_traits::FromPrimitive;

/// Floating-point scalar usable for all numerics in this crate.
///
/// The associated constants are the validation tolerances used by
/// constructors (state norms, Hermiticity, positivity). They scale with the
/// precision of the underlying type; all contract tolerances quoted in doc
/// comments refer to the `f64` instantiation.
pub trait Real: RealField + FromPrimitive + Copy + Default + std::fmt::Display {
    /// Element-wise absolute tolerance for Hermiticity checks.
    const HERM_TOL: Self;
    /// Allowed deviation of a state-vector norm from 1.
    const NORM_TOL: Self;
    /// Allowed deviation of a density-matrix trace from 1.
    const TRACE_TOL: Self;
    /// Eigenvalues above `-PSD_SLACK` count as nonnegative.
    const PSD_SLACK: Self;

    /// Converts an `f64` literal into this scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for the
    /// compile-time literals this is used with.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal must be representable")
    }
}

impl Real for f64 {
    const HERM_TOL: Self = 1e-12;
    const NORM_TOL: Self = 1e-10;
    const TRACE_TOL: Self = 1e-10;
    const PSD_SLACK: Self = 1e-8;
}

impl Real for f32 {
    const HERM_TOL: Self = 1e-5;
    const NORM_TOL: Self = 1e-4;
    const TRACE_TOL: Self = 1e-4;
    const PSD_SLACK: Self = 1e-3;
}

/// Real scalar as a complex number.
#[inline]
pub(crate) fn cr<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// Imaginary scalar `i*x` as a complex number.
#[inline]
pub(crate) fn ci<T: Real>(x: T) -> Complex<T> {
    Complex::new(T::zero(), x)
}
