//! Scalar abstractions shared by the whole crate.

use std::fmt::{Debug, Display};
use std::ops::Neg;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign};

/// Real floating-point type the numerics are generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot represent at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Entries of the linear systems: either a real `T` or a `Complex<T>`.
pub trait Field<T: Real>:
    Copy + Num + NumAssign + Neg<Output = Self> + Default + Debug + Send + Sync + 'static
{
    fn from_real(x: T) -> Self;
    fn conj(self) -> Self;
    fn re(self) -> T;
    fn abs_sqr(self) -> T;
    /// Cheap magnitude used for pivot selection.
    fn pivot_mag(self) -> T;
    fn mul_real(self, x: T) -> Self;
    fn is_finite(self) -> bool;
}

impl<T: Real> Field<T> for T {
    #[inline]
    fn from_real(x: T) -> Self {
        x
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn re(self) -> T {
        self
    }
    #[inline]
    fn abs_sqr(self) -> T {
        self * self
    }
    #[inline]
    fn pivot_mag(self) -> T {
        Float::abs(self)
    }
    #[inline]
    fn mul_real(self, x: T) -> Self {
        self * x
    }
    #[inline]
    fn is_finite(self) -> bool {
        Float::is_finite(self)
    }
}

impl<T: Real> Field<T> for Complex<T> {
    #[inline]
    fn from_real(x: T) -> Self {
        Complex::new(x, T::zero())
    }
    #[inline]
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
    #[inline]
    fn re(self) -> T {
        self.re
    }
    #[inline]
    fn abs_sqr(self) -> T {
        self.norm_sqr()
    }
    #[inline]
    fn pivot_mag(self) -> T {
        self.re.abs() + self.im.abs()
    }
    #[inline]
    fn mul_real(self, x: T) -> Self {
        Complex::new(self.re * x, self.im * x)
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Shorthand for complex numbers over a generic real type.
pub type C<T> = Complex<T>;

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn imag_unit<T: Real>(s: T) -> Complex<T> {
    Complex::new(T::zero(), s)
}
