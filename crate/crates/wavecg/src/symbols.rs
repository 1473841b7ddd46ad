//! Transfer functions of the two subsystems and the characteristic function.
//!
//! Square roots are principal (`Re sqrt >= 0`, cut along the negative real axis).
//! `c(z) = cosh(sqrt z)` and `h(z) = sinh(sqrt z)/sqrt z` are entire, so they are
//! evaluated without choosing a branch: by power series near zero and in closed form
//! elsewhere.

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::MemoryKernel;
use crate::scalar::{imag_unit, Real};

/// Radius below which `c` and `h` use their Taylor series.
pub const SERIES_RADIUS: f64 = 0.25;

#[derive(Clone, Debug, Serialize)]
pub struct SymbolValue {
    pub lambda: (f64, f64),
    pub ell: (f64, f64),
    pub p1: Option<(f64, f64)>,
    pub p2: (f64, f64),
    pub chi: (f64, f64),
}

fn pair<T: Real>(z: Complex<T>) -> (f64, f64) {
    (z.re.to_f64_lossy(), z.im.to_f64_lossy())
}

/// `sum_n z^n / (2n + offset)!` with `offset` 0 (cosh) or 1 (sinh/x).
fn even_series<T: Real>(z: Complex<T>, offset: usize) -> Complex<T> {
    let mut term = Complex::<T>::one();
    let mut sum = term;
    for n in 1..40 {
        let d1 = T::from_usize_lossy(2 * n - 1 + offset);
        let d2 = T::from_usize_lossy(2 * n + offset);
        term = term * z / (d1 * d2);
        sum = sum + term;
        if term.norm() <= T::epsilon() * sum.norm() * T::lit(0.1) {
            break;
        }
    }
    sum
}

/// `cosh(sqrt z)`.
pub fn c_fn<T: Real>(z: Complex<T>) -> Complex<T> {
    if z.norm() < T::lit(SERIES_RADIUS) {
        even_series(z, 0)
    } else {
        z.sqrt().cosh()
    }
}

/// `sinh(sqrt z) / sqrt z`.
pub fn h_fn<T: Real>(z: Complex<T>) -> Complex<T> {
    if z.norm() < T::lit(SERIES_RADIUS) {
        even_series(z, 1)
    } else {
        let r = z.sqrt();
        r.sinh() / r
    }
}

/// `tanh` that stays finite for large real parts.
pub fn tanh_stable<T: Real>(z: Complex<T>) -> Complex<T> {
    if z.re.abs() > T::lit(20.0) {
        // tanh z = sign(Re z) (1 - 2 e^{-2|z|}/(1 + e^{-2|z|})) with the complex exponent
        let sgn = if z.re > T::zero() { T::one() } else { -T::one() };
        let e = (-(z * sgn) * T::lit(2.0)).exp();
        let one = Complex::<T>::one();
        (one - e) / (one + e) * sgn
    } else {
        z.tanh()
    }
}

fn check_strip<T: Real>(k: &MemoryKernel<T>, lambda: Complex<T>) -> Result<()> {
    if lambda.re <= -k.delta() {
        return Err(Error::Domain(format!(
            "ell needs Re lambda > -delta = {}, got lambda = {}",
            -k.delta(),
            lambda
        )));
    }
    Ok(())
}

/// `1 + sum a_k / (b_k (b_k + lambda))` without the strip check; used for root
/// residuals outside the half-plane where the defining integral converges.
pub fn ell_rational<T: Real>(k: &MemoryKernel<T>, lambda: Complex<T>) -> Result<Complex<T>> {
    let mut acc = Complex::<T>::one();
    for &(a, b) in k.modes() {
        let d = lambda + b;
        if d.norm() <= T::epsilon() * b {
            return Err(Error::Singular(format!("ell has a pole at lambda = {}", -b)));
        }
        acc = acc + Complex::new(a / b, T::zero()) / d;
    }
    Ok(acc)
}

pub fn ell<T: Real>(k: &MemoryKernel<T>, lambda: Complex<T>) -> Result<Complex<T>> {
    check_strip(k, lambda)?;
    ell_rational(k, lambda)
}

pub fn p1<T: Real>(lambda: Complex<T>) -> Result<Complex<T>> {
    let sh = lambda.sinh();
    if sh.norm() < T::lit(1e-14) * lambda.re.abs().cosh() {
        return Err(Error::Singular(format!("coth has a pole at lambda = {lambda}")));
    }
    Ok(lambda.cosh() / sh)
}

pub fn p2<T: Real>(k: &MemoryKernel<T>, lambda: Complex<T>) -> Result<Complex<T>> {
    let l = ell(k, lambda)?;
    p2_with_ell(lambda, l)
}

/// `h(lambda/l) / (l c(lambda/l))` for a given value `l` of the symbol.
pub fn p2_with_ell<T: Real>(lambda: Complex<T>, l: Complex<T>) -> Result<Complex<T>> {
    if l.norm() < T::lit(1e-300).max(T::min_positive_value()) || l.is_zero() {
        return Err(Error::Singular(format!("ell(lambda) = 0 at lambda = {lambda}")));
    }
    let z = lambda / l;
    if z.norm() < T::lit(SERIES_RADIUS) {
        let c = c_fn(z);
        if c.norm() < T::epsilon() {
            return Err(Error::Singular(format!("cosh sqrt vanishes at lambda = {lambda}")));
        }
        return Ok(h_fn(z) / (l * c));
    }
    // tanh(r)/r is the same quotient and does not overflow for large |r|.
    let r = z.sqrt();
    let c = r.cosh();
    if r.re < T::lit(20.0) && c.norm() < T::epsilon() * T::lit(10.0) {
        return Err(Error::Singular(format!("cosh sqrt vanishes at lambda = {lambda}")));
    }
    Ok(tanh_stable(r) / (r * l))
}

pub fn chi<T: Real>(k: &MemoryKernel<T>, lambda: Complex<T>) -> Result<Complex<T>> {
    if lambda.re <= -k.delta() / T::lit(2.0) {
        return Err(Error::Domain(format!(
            "chi is evaluated only for Re lambda > -delta/2, got {lambda}"
        )));
    }
    let l = ell(k, lambda)?;
    if l.norm() < T::lit(1e-14) {
        return Err(Error::Singular(format!("chi evaluated at a zero of ell: {lambda}")));
    }
    Ok(chi_with_ell(lambda, l))
}

pub(crate) fn chi_with_ell<T: Real>(lambda: Complex<T>, l: Complex<T>) -> Complex<T> {
    let z = lambda / l;
    (l * lambda).sqrt() * lambda.sinh() * c_fn(z) + lambda.cosh() * z.sqrt() * h_fn(z)
}

pub fn evaluate<T: Real>(k: &MemoryKernel<T>, lambda: Complex<T>) -> Result<SymbolValue> {
    let l = ell(k, lambda)?;
    Ok(SymbolValue {
        lambda: pair(lambda),
        ell: pair(l),
        p1: p1(lambda).ok().map(pair),
        p2: pair(p2_with_ell(lambda, l)?),
        chi: pair(chi_with_ell(lambda, l)),
    })
}

/// Minimum of `(1 + sqrt|s|) Re p2(is)` over `n_samples` equispaced `s` in
/// `[-s_max, s_max]`. Any non-positive real part is a property violation.
pub fn re_p2_floor<T: Real>(k: &MemoryKernel<T>, s_max: T, n_samples: usize) -> Result<T> {
    if !(s_max > T::zero()) || n_samples < 2 {
        return Err(Error::Config("re_p2_floor needs s_max > 0 and n_samples >= 2".into()));
    }
    let mut floor = T::infinity();
    let last = T::from_usize_lossy(n_samples - 1);
    for i in 0..n_samples {
        let s = -s_max + T::lit(2.0) * s_max * T::from_usize_lossy(i) / last;
        let p = p2(k, imag_unit(s))?;
        if !(p.re > T::zero()) {
            return Err(Error::PropertyViolation(format!(
                "Re p2(is) = {} <= 0 at s = {s}",
                p.re
            )));
        }
        floor = floor.min((T::one() + s.abs().sqrt()) * p.re);
    }
    Ok(floor)
}

/// Same floor over explicit sample points.
pub fn re_p2_floor_on<T: Real>(k: &MemoryKernel<T>, samples: &[T]) -> Result<T> {
    let mut floor = T::infinity();
    for &s in samples {
        let p = p2(k, imag_unit(s))?;
        if !(p.re > T::zero()) {
            return Err(Error::PropertyViolation(format!(
                "Re p2(is) = {} <= 0 at s = {s}",
                p.re
            )));
        }
        floor = floor.min((T::one() + s.abs().sqrt()) * p.re);
    }
    Ok(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn k1() -> MemoryKernel<f64> {
        MemoryKernel::new(vec![(1.0, 1.0)]).unwrap()
    }

    #[test]
    fn values_at_zero() {
        let k = k1();
        assert!((ell(&k, Complex64::new(0.0, 0.0)).unwrap() - 2.0).norm() < 1e-15);
        assert!((p2(&k, Complex64::new(0.0, 0.0)).unwrap() - 0.5).norm() < 1e-15);
        assert_eq!(chi(&k, Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn ell_at_i() {
        let v = ell(&k1(), Complex64::new(0.0, 1.0)).unwrap();
        assert!((v - Complex64::new(1.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn coth_values() {
        let v = p1(Complex64::new(1.0, 0.0)).unwrap();
        assert!((v.re - 1.313_035_285_499_331_3).abs() < 1e-14);
        let v = p1(Complex64::new(0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(v.norm() < 1e-15);
        assert!((p1(Complex64::new(30.0, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        assert!(p1(Complex64::new(0.0, std::f64::consts::PI)).is_err());
    }

    #[test]
    fn series_and_closed_form_agree() {
        for &r in &[0.1, 0.15, 0.2, 0.24, 0.26, 0.3, 0.45] {
            for j in 0..16 {
                let th = j as f64 * std::f64::consts::PI / 8.0;
                let z = Complex64::from_polar(r, th);
                let cs = even_series(z, 0);
                let hs = even_series(z, 1);
                let s = z.sqrt();
                assert!((cs - s.cosh()).norm() < 1e-14, "c at {z}");
                assert!((hs - s.sinh() / s).norm() < 1e-14, "h at {z}");
            }
        }
    }

    #[test]
    fn domain_and_pole_errors() {
        let k = k1();
        assert!(ell(&k, Complex64::new(-1.0, 0.0)).is_err());
        assert!(ell(&k, Complex64::new(-1.5, 0.0)).is_err());
        assert!(chi(&k, Complex64::new(-0.6, 1.0)).is_err());
        assert!(ell_rational(&k, Complex64::new(-1.0, 0.0)).is_err());
        assert!((ell_rational(&k, Complex64::new(-2.0, 0.0)).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn chi_at_i_pi() {
        let k = k1();
        let lam = Complex64::new(0.0, std::f64::consts::PI);
        let l = ell(&k, lam).unwrap();
        let expect = -(lam / l).sqrt().sinh();
        assert!((chi(&k, lam).unwrap() - expect).norm() < 1e-13);
    }

    #[test]
    fn floor_positive() {
        let c0 = re_p2_floor(&k1(), 1e3, 2001).unwrap();
        assert!(c0 > 0.3 && c0 <= 0.5 + 1e-12);
    }
}
