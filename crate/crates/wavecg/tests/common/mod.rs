//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;

/// Adaptive Simpson quadrature of a complex integrand, absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    integrate_pieces(f, a, b, tol, 64)
}

/// As [`integrate`], starting from `pieces` equal panels.
pub fn integrate_pieces(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64, pieces: usize) -> Complex64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, fa: Complex64, fm: Complex64, fb: Complex64, whole: Complex64, tol: f64, depth: u32) -> Complex64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // split first so oscillatory integrands are sampled densely enough
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, x0, x1, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

pub fn real_integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    integrate(&|x| Complex64::new(f(x), 0.0), a, b, tol).re
}
