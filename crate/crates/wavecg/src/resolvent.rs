//! Resolvent norms in the energy metric, the explicit lower-bound family at
//! `s = 2 pi n`, and a semi-analytic resolvent used as an independent oracle.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MemoryKernel;
use crate::operator::{GeneratorMatrix, Memory};
use crate::scalar::Real;
use crate::symbols;

/// Dimension up to which `norm_at` uses a dense SVD by default.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Svd,
    PowerIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventSample {
    pub s: f64,
    pub norm: f64,
    pub method: NormMethod,
}

#[derive(Clone, Copy, Debug)]
pub struct NormOptions {
    /// Force a method; `None` picks SVD up to `dense_limit`.
    pub method: Option<NormMethod>,
    pub dense_limit: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { method: None, dense_limit: DENSE_LIMIT, tol: 1e-8, max_iter: 2000, seed: 0x5eed }
    }
}

/// `||(is - A)^{-1}||_W`.
pub fn norm_at<T: Real>(gen: &GeneratorMatrix<T>, s: f64) -> Result<ResolventSample> {
    norm_at_with(gen, s, &NormOptions::default())
}

pub fn norm_at_with<T: Real>(gen: &GeneratorMatrix<T>, s: f64, opt: &NormOptions) -> Result<ResolventSample> {
    let method = opt.method.unwrap_or(if gen.dim() <= opt.dense_limit {
        NormMethod::Svd
    } else {
        NormMethod::PowerIteration
    });
    let lambda = Complex64::new(0.0, s);
    let norm = match method {
        NormMethod::Svd => dense_resolvent_norm(gen, lambda)?,
        NormMethod::PowerIteration => power_resolvent_norm(gen, lambda, opt)?,
    };
    Ok(ResolventSample { s, norm, method })
}

/// Resolvent norm at a general complex point, by power iteration on `R^* R`.
pub fn power_resolvent_norm<T: Real>(gen: &GeneratorMatrix<T>, lambda: Complex64, opt: &NormOptions) -> Result<f64> {
    let lam = num_complex::Complex::new(T::lit(lambda.re), T::lit(lambda.im));
    let solver = gen.shifted_solver(lam)?;
    let n = gen.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut x: Vec<num_complex::Complex<T>> = (0..n)
        .map(|_| num_complex::Complex::new(T::lit(rng.gen_range(-1.0..1.0)), T::lit(rng.gen_range(-1.0..1.0))))
        .collect();
    // start in W-white coordinates so every energy direction is represented
    x = gen.l_t_solve(&x);
    let nx = gen.w_norm(&x);
    x.iter_mut().for_each(|v| *v = *v / nx);
    let mut prev = 0.0f64;
    let mut est = 0.0f64;
    for _ in 0..opt.max_iter {
        let y = solver.solve(&x);
        est = gen.w_norm(&y).to_f64_lossy();
        if !est.is_finite() {
            return Err(Error::NonFinite(format!("resolvent power iteration at {lambda}")));
        }
        if (est - prev).abs() <= opt.tol * est {
            return Ok(est);
        }
        prev = est;
        let wy = gen.w_apply(&y);
        let z = solver.solve_adjoint(&wy);
        x = gen.w_solve(&z);
        let nx = gen.w_norm(&x);
        if !(nx > T::zero()) {
            return Err(Error::NonFinite("power iteration collapsed to zero".into()));
        }
        x.iter_mut().for_each(|v| *v = *v / nx);
    }
    log::warn!("resolvent power iteration at {lambda} stopped after {} iterations", opt.max_iter);
    Ok(est)
}

/// `L^T M L^{-T}` as a dense complex matrix, where `M` is applied column by column.
pub fn dense_similarity<T: Real>(
    gen: &GeneratorMatrix<T>,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64> + Sync,
) -> DMatrix<Complex64> {
    let n = gen.dim();
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[k] = Complex64::new(1.0, 0.0);
            let x = l_t_solve_f64(gen, &e);
            let y = apply(&x);
            l_t_apply_f64(gen, &y)
        })
        .collect();
    DMatrix::from_fn(n, n, |r, c| cols[c][r])
}

fn to_t<T: Real>(x: &[Complex64]) -> Vec<num_complex::Complex<T>> {
    x.iter().map(|v| num_complex::Complex::new(T::lit(v.re), T::lit(v.im))).collect()
}

fn to_f64<T: Real>(x: &[num_complex::Complex<T>]) -> Vec<Complex64> {
    x.iter().map(|v| Complex64::new(v.re.to_f64_lossy(), v.im.to_f64_lossy())).collect()
}

fn l_t_solve_f64<T: Real>(gen: &GeneratorMatrix<T>, x: &[Complex64]) -> Vec<Complex64> {
    to_f64(&gen.l_t_solve(&to_t::<T>(x)))
}

fn l_t_apply_f64<T: Real>(gen: &GeneratorMatrix<T>, x: &[Complex64]) -> Vec<Complex64> {
    to_f64(&gen.l_t_apply(&to_t::<T>(x)))
}

/// Dense path: `1 / sigma_min(L^T (lambda - A) L^{-T})`.
pub fn dense_resolvent_norm<T: Real>(gen: &GeneratorMatrix<T>, lambda: Complex64) -> Result<f64> {
    let b = dense_similarity(gen, |x| {
        let ax = to_f64(&gen.apply(&to_t::<T>(x)));
        x.iter().zip(&ax).map(|(xi, ai)| lambda * xi - ai).collect()
    });
    let sv = b.singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) || smin < f64::EPSILON * sv.max() {
        return Err(Error::EigenvalueHit { shift: lambda.to_string(), nearest: "at the shift".into() });
    }
    Ok(1.0 / smin)
}

/// Scan result: per-frequency outcomes plus a fitted growth exponent.
#[derive(Clone, Debug)]
pub struct Scan {
    pub samples: Vec<Result<ResolventSample>>,
    /// Least-squares slope of `log norm` against `log |s|` over the top decade of the grid.
    pub exponent: Option<f64>,
}

pub fn scan<T: Real>(gen: &GeneratorMatrix<T>, s_grid: &[f64]) -> Scan {
    scan_with(gen, s_grid, &NormOptions::default())
}

pub fn scan_with<T: Real>(gen: &GeneratorMatrix<T>, s_grid: &[f64], opt: &NormOptions) -> Scan {
    let samples: Vec<Result<ResolventSample>> =
        s_grid.par_iter().map(|&s| norm_at_with(gen, s, opt)).collect();
    let ok: Vec<ResolventSample> = samples.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let top = ok.iter().map(|r| r.s.abs()).fold(0.0, f64::max);
    let exponent = growth_exponent(&ok, top / 10.0, top);
    Scan { samples, exponent }
}

/// Slope of `log norm` against `log |s|` for samples with `lo <= |s| <= hi`.
pub fn growth_exponent(samples: &[ResolventSample], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|r| r.s.abs() >= lo && r.s.abs() <= hi && r.s != 0.0 && r.norm > 0.0)
        .map(|r| (r.s.abs().ln(), r.norm.ln()))
        .collect();
    fit_slope(&pts)
}

/// Least-squares slope; `None` for fewer than two distinct abscissae.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Local maxima of a scan ordered by `s` (the upper envelope used for growth fits).
pub fn local_maxima(samples: &[ResolventSample]) -> Vec<ResolventSample> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.s.partial_cmp(&b.s).unwrap());
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i].norm >= v[i - 1].norm && v[i].norm >= v[i + 1].norm)
        .map(|i| v[i].clone())
        .collect()
}

/// Resolvent norms at the resonance peaks: `s = Im lambda_k` for the discrete
/// eigenvalues `lambda_k` closest to `i k pi`, for all `k` with `k pi` in `[s_lo, s_hi]`.
pub fn peak_samples(gen: &GeneratorMatrix<f64>, s_lo: f64, s_hi: f64, opt: &NormOptions) -> Result<Vec<ResolventSample>> {
    let k_lo = (s_lo / std::f64::consts::PI).ceil().max(1.0) as usize;
    let k_hi = (s_hi / std::f64::consts::PI).floor() as usize;
    let ks: Vec<usize> = (k_lo..=k_hi).collect();
    let hu = 1.0 / gen.layout.n_u as f64;
    ks.par_iter()
        .map(|&k| {
            // discrete wave frequency of mode k, slightly inside the left half-plane
            let om = 2.0 / hu * (k as f64 * std::f64::consts::PI * hu / 2.0).sin();
            let seed = Complex64::new(-0.05, om);
            let ev = crate::spectrum::nearest_eigenvalue(gen, seed, 1e-12, 60)?;
            norm_at_with(gen, ev.im, opt)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundSample {
    pub n: usize,
    pub alpha_n: (f64, f64),
    pub sigma_n: (f64, f64),
    pub u_plus: (f64, f64),
    pub bound: f64,
}

impl LowerBoundSample {
    pub fn u_plus_abs(&self) -> f64 {
        self.u_plus.0.hypot(self.u_plus.1)
    }
}

/// Closed-form lower bound for `||R(2 pi n i, A)||`.
pub fn lower_bound<T: Real>(kernel: &MemoryKernel<T>, n: usize) -> Result<LowerBoundSample> {
    if n == 0 {
        return Err(Error::Config("lower_bound needs n >= 1".into()));
    }
    let s = T::lit(2.0) * T::PI() * T::from_usize_lossy(n);
    let lam = num_complex::Complex::new(T::zero(), s);
    let alpha = symbols::ell(kernel, lam)?;
    let sigma = (lam / alpha).sqrt();
    let th = symbols::tanh_stable(sigma);
    if th.norm() < T::epsilon() {
        return Err(Error::Singular(format!("tanh(sigma_n) vanishes for n = {n}")));
    }
    let quarter = T::lit(0.25);
    let up = num_complex::Complex::new(quarter, T::zero()) + alpha * sigma / (th * T::lit(4.0));
    let b2 = up.norm_sqr() - T::one() / T::lit(3.0);
    let f = |z: num_complex::Complex<T>| (z.re.to_f64_lossy(), z.im.to_f64_lossy());
    Ok(LowerBoundSample {
        n,
        alpha_n: f(alpha),
        sigma_n: f(sigma),
        u_plus: f(up),
        bound: b2.max(T::zero()).sqrt().to_f64_lossy(),
    })
}

/// How the history variable is treated by [`apply_semianalytic`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryTreatment {
    /// Continuous in `s`: exact exponential integrals, output as cell averages.
    Exact,
    /// The discrete transport recursion of the operator's history grid; isolates the
    /// spatial discretization error when comparing with a direct solve.
    GridTransfer,
}

/// Right-hand side data for [`apply_semianalytic`], as functions of `x`.
pub trait Datum: Sync {
    fn u(&self, x: f64) -> Complex64;
    fn v(&self, x: f64) -> Complex64;
    fn w(&self, x: f64) -> Complex64;
    /// History value on cell `j` (piecewise constant in `s`).
    fn eta(&self, j: usize, x: f64) -> Complex64;
}

/// Piecewise-linear interpolant of a state stored on the operator grid.
pub struct GridDatum<'a> {
    gen: &'a GeneratorMatrix<f64>,
    z: &'a [Complex64],
}

impl<'a> GridDatum<'a> {
    pub fn new(gen: &'a GeneratorMatrix<f64>, z: &'a [Complex64]) -> Result<Self> {
        if z.len() != gen.dim() {
            return Err(Error::Shape { expected: gen.dim(), got: z.len() });
        }
        Ok(Self { gen, z })
    }

    fn interp(n: usize, x0: f64, x: f64, val: impl Fn(usize) -> Complex64) -> Complex64 {
        let h = 1.0 / n as f64;
        let t = ((x - x0) / h).clamp(0.0, n as f64);
        let i = (t.floor() as usize).min(n - 1);
        let f = t - i as f64;
        val(i) * (1.0 - f) + val(i + 1) * f
    }
}

impl Datum for GridDatum<'_> {
    fn u(&self, x: f64) -> Complex64 {
        let lay = &self.gen.layout;
        Self::interp(lay.n_u, -1.0, x, |i| if i == 0 { 0.0.into() } else { self.z[lay.u(i)] })
    }
    fn v(&self, x: f64) -> Complex64 {
        let lay = &self.gen.layout;
        Self::interp(lay.n_u, -1.0, x, |i| {
            if i == 0 {
                0.0.into()
            } else if i == lay.n_u {
                self.z[lay.c()]
            } else {
                self.z[lay.v(i)]
            }
        })
    }
    fn w(&self, x: f64) -> Complex64 {
        let lay = &self.gen.layout;
        Self::interp(lay.n_w, 0.0, x, |m| if m == lay.n_w { 0.0.into() } else { self.z[lay.w(m)] })
    }
    fn eta(&self, j: usize, x: f64) -> Complex64 {
        let lay = &self.gen.layout;
        Self::interp(lay.n_w, 0.0, x, |m| if m == lay.n_w { 0.0.into() } else { self.z[lay.eta(j, m)] })
    }
}

/// `(e^z - 1)/z`.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..30 {
            term = term * z / k as f64;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `(e^z - 1 - z)/z^2`.
pub fn phi2(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for k in 3..30 {
            term = term * z / k as f64;
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

/// Gauss-Legendre 16-point nodes and weights on `[-1, 1]`.
fn gauss16() -> ([f64; 16], [f64; 16]) {
    let half_x = [
        0.095_012_509_837_637_44,
        0.281_603_550_779_258_9,
        0.458_016_777_657_227_4,
        0.617_876_244_402_643_8,
        0.755_404_408_355_003,
        0.865_631_202_387_831_8,
        0.944_575_023_073_232_6,
        0.989_400_934_991_649_9,
    ];
    let half_w = [
        0.189_450_610_455_068_5,
        0.182_603_415_044_923_6,
        0.169_156_519_395_002_5,
        0.149_595_988_816_576_7,
        0.124_628_971_255_533_9,
        0.095_158_511_682_492_78,
        0.062_253_523_938_647_89,
        0.027_152_459_411_754_1,
    ];
    let mut x = [0.0; 16];
    let mut w = [0.0; 16];
    for i in 0..8 {
        x[i] = -half_x[7 - i];
        w[i] = half_w[7 - i];
        x[15 - i] = half_x[7 - i];
        w[15 - i] = half_w[7 - i];
    }
    (x, w)
}

/// `int_0^d e^{-b t} (1 - e^{-lambda t})/lambda dt`.
fn memory_cell_integral(b: f64, lambda: Complex64, d: f64) -> Complex64 {
    if (lambda * d).norm() >= 0.5 {
        let f = |p: Complex64| phi1(-p * d) * d;
        (f(Complex64::new(b, 0.0)) - f(lambda + b)) / lambda
    } else {
        let (gx, gw) = gauss16();
        let panels = ((b * d / 2.0).ceil() as usize).max(1);
        let h = d / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let a = p as f64 * h;
            for i in 0..16 {
                let t = a + 0.5 * h * (gx[i] + 1.0);
                acc += 0.5 * h * gw[i] * (-b * t).exp() * phi1(-lambda * t) * t;
            }
        }
        acc
    }
}

/// Per-`lambda` history transfer data: how `eta` and `rho = int mu xi` respond.
struct HistoryTransfer {
    /// `eta_j = a[j] w + sum_i m[j][i] eta_hat_i`.
    a: Vec<Complex64>,
    m: Vec<Vec<Complex64>>,
    /// `rho = sum_i gamma[i] eta_hat_i`.
    gamma: Vec<Complex64>,
    /// `1 + int mu (1 - e^{-lambda s})/lambda`, exact or discrete.
    ell: Complex64,
}

fn exact_transfer(kernel: &MemoryKernel<f64>, h: &crate::operator::HistoryGrid<f64>, lam: Complex64) -> Result<HistoryTransfer> {
    let jn = h.len();
    let edges = h.edges();
    let g_of = |s: f64| phi2(-lam * s) * (s * s);
    let a: Vec<Complex64> = (0..jn).map(|j| (g_of(edges[j + 1]) - g_of(edges[j])) / h.widths[j]).collect();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); jn]; jn];
    let mut gamma = vec![Complex64::new(0.0, 0.0); jn];
    for i in 0..jn {
        let d = h.widths[i];
        m[i][i] = phi2(-lam * d) * d;
        let mut x = phi1(-lam * d) * d; // xi at the right edge of cell i
        for j in i + 1..jn {
            m[j][i] = x * phi1(-lam * h.widths[j]);
            x *= (-lam * h.widths[j]).exp();
        }
        let xi_i = phi1(-lam * d) * d;
        let mut g = Complex64::new(0.0, 0.0);
        for &(ak, bk) in kernel.modes() {
            g += ak * (-bk * edges[i]).exp() * memory_cell_integral(bk, lam, d);
            g += ak * xi_i * (-bk * edges[i + 1]).exp() / (lam + bk);
        }
        gamma[i] = g;
    }
    Ok(HistoryTransfer { a, m, gamma, ell: symbols::ell(kernel, lam)? })
}

fn grid_transfer(gen: &GeneratorMatrix<f64>, lam: Complex64) -> Result<HistoryTransfer> {
    let solver = gen.shifted_solver(lam)?;
    let jn = gen.layout.n_mem;
    let wt = gen.memory_weights();
    let a = solver.memory_response().to_vec();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); jn]; jn];
    for i in 0..jn {
        let mut e = vec![Complex64::new(0.0, 0.0); jn];
        e[i] = Complex64::new(1.0, 0.0);
        let col = solver.memory_solve(&e);
        for j in 0..jn {
            m[j][i] = col[j];
        }
    }
    let gamma = (0..jn).map(|i| (0..jn).map(|j| m[j][i] * wt[j]).sum()).collect();
    Ok(HistoryTransfer { a, m, gamma, ell: solver.ell_h })
}

/// Applies the continuous-in-space resolvent `(lambda - A)^{-1}` to `data` and samples
/// the result on the grid of `gen` (nodal values; history as cell averages).
///
/// The wave and heat parts are solved by variation of constants with per-cell Simpson
/// quadrature on the operator's x-grid; the two interface conditions give a 2x2 system.
pub fn apply_semianalytic(
    gen: &GeneratorMatrix<f64>,
    lambda: Complex64,
    data: &dyn Datum,
    treatment: HistoryTreatment,
) -> Result<Vec<Complex64>> {
    let lay = &gen.layout;
    if lay.block != crate::operator::Block::Full {
        return Err(Error::Unsupported("apply_semianalytic targets the coupled system".into()));
    }
    let hist = match &gen.memory {
        Memory::History(h) => h,
        Memory::Modes(_) => return Err(Error::Unsupported("apply_semianalytic needs history-grid memory".into())),
    };
    if lambda.norm() < 1e-3 {
        return Err(Error::Domain("apply_semianalytic needs |lambda| >= 1e-3".into()));
    }
    let kernel = &gen.kernel;
    let tr = match treatment {
        HistoryTreatment::Exact => exact_transfer(kernel, hist, lambda)?,
        HistoryTreatment::GridTransfer => grid_transfer(gen, lambda)?,
    };
    let ell = tr.ell;
    if ell.norm() < 1e-14 {
        return Err(Error::Singular(format!("ell vanishes at {lambda}")));
    }
    let jn = lay.n_mem;
    let k = (lambda / ell).sqrt();
    let rho = |x: f64| -> Complex64 { (0..jn).map(|i| tr.gamma[i] * data.eta(i, x)).sum() };
    let f = |x: f64| data.v(x) + lambda * data.u(x);
    let g = |x: f64| data.w(x) + k * k * rho(x);

    // wave: P(x) = int_{-1}^x e^{-lambda(x-r)} f, Q(x) = int_{-1}^x e^{lambda(x-r)} f
    let (nu, hu) = (lay.n_u, 1.0 / lay.n_u as f64);
    let e = (-lambda * hu).exp();
    let eh = (-lambda * hu * 0.5).exp();
    let (ei, ehi) = (1.0 / e, 1.0 / eh);
    let mut pw = vec![Complex64::new(0.0, 0.0); nu + 1];
    let mut qw = vec![Complex64::new(0.0, 0.0); nu + 1];
    let xu = |i: usize| -1.0 + i as f64 * hu;
    for i in 0..nu {
        let (fa, fm, fb) = (f(xu(i)), f(xu(i) + 0.5 * hu), f(xu(i + 1)));
        pw[i + 1] = e * pw[i] + hu / 6.0 * (e * fa + 4.0 * eh * fm + fb);
        qw[i + 1] = ei * qw[i] + hu / 6.0 * (ei * fa + 4.0 * ehi * fm + fb);
    }
    let big_u = |i: usize| (qw[i] - pw[i]) / (2.0 * lambda);
    let du0 = (qw[nu] + pw[nu]) * 0.5;

    // heat: Pt(x) = int_x^1 e^{-k(r-x)} g, Qt(x) = int_x^1 e^{k(r-x)} g
    let (nw, hw) = (lay.n_w, 1.0 / lay.n_w as f64);
    let et = (-k * hw).exp();
    let eth = (-k * hw * 0.5).exp();
    let (eti, ethi) = (1.0 / et, 1.0 / eth);
    let mut pt = vec![Complex64::new(0.0, 0.0); nw + 1];
    let mut qt = vec![Complex64::new(0.0, 0.0); nw + 1];
    let xw = |m: usize| m as f64 * hw;
    for m in (0..nw).rev() {
        let (ga, gm, gb) = (g(xw(m)), g(xw(m) + 0.5 * hw), g(xw(m + 1)));
        pt[m] = et * pt[m + 1] + hw / 6.0 * (ga + 4.0 * eth * gm + et * gb);
        qt[m] = eti * qt[m + 1] + hw / 6.0 * (ga + 4.0 * ethi * gm + eti * gb);
    }
    let big_f = |m: usize| (qt[m] - pt[m]) / (2.0 * k);
    let df0 = -(qt[0] + pt[0]) * 0.5;

    // 2x2 system for the homogeneous amplitudes
    let (sl, cl) = (lambda.sinh(), lambda.cosh());
    let (sk, ck) = (k.sinh(), k.cosh());
    let m11 = lambda * ell * sl;
    let m12 = sk;
    let m21 = lambda * cl;
    let m22 = -k * ck;
    let r1 = ell * (lambda * big_u(nu) + data.u(0.0)) - big_f(0) - rho(0.0);
    let r2 = du0 - df0;
    let det = m11 * m22 - m12 * m21;
    let scale = (m11.norm() * m22.norm()).max(m12.norm() * m21.norm()).max(1e-300);
    if det.norm() < 1e-12 * scale {
        return Err(Error::Singular(format!("2x2 interface system is singular near lambda = {lambda}")));
    }
    let a = (r1 * m22 - m12 * r2) / det;
    let b = (m11 * r2 - r1 * m21) / det;

    let u_at = |i: usize| a * (lambda * (xu(i) + 1.0)).sinh() - big_u(i);
    let phi_at = |m: usize| -b * (k * (1.0 - xw(m))).sinh() - big_f(m);
    let mut z = vec![Complex64::new(0.0, 0.0); lay.dim];
    for i in 1..=nu {
        z[lay.u(i)] = u_at(i);
    }
    for i in 1..nu {
        z[lay.v(i)] = lambda * u_at(i) - data.u(xu(i));
    }
    let mut wv = vec![Complex64::new(0.0, 0.0); nw];
    for m in 0..nw {
        wv[m] = (phi_at(m) - rho(xw(m))) / ell;
    }
    // interface value: w(0); equals v(0) up to quadrature error
    for m in 0..nw {
        z[lay.w(m)] = wv[m];
    }
    for m in 0..nw {
        let x = xw(m);
        let eh_x: Vec<Complex64> = (0..jn).map(|i| data.eta(i, x)).collect();
        for j in 0..jn {
            // transport runs toward larger s, so only cells i <= j contribute
            let acc: Complex64 = (0..=j).map(|i| tr.m[j][i] * eh_x[i]).sum();
            z[lay.eta(j, m)] = acc + tr.a[j] * wv[m];
        }
    }
    Ok(z)
}

/// The state `z_n` used in the lower-bound construction: `u = sin(2 pi n x)/(2 pi n)`,
/// `v = cos(2 pi n x)` on `(-1, 0)`, no heat or history component.
pub struct LowerBoundDatum {
    pub n: usize,
}

impl Datum for LowerBoundDatum {
    fn u(&self, x: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * self.n as f64;
        ((w * x).sin() / w).into()
    }
    fn v(&self, x: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * self.n as f64;
        (w * x).cos().into()
    }
    fn w(&self, _x: f64) -> Complex64 {
        0.0.into()
    }
    fn eta(&self, _j: usize, _x: f64) -> Complex64 {
        0.0.into()
    }
}

/// Smooth bumps in every component; the history part lives in cell `cell`.
pub struct SmoothDatum {
    pub cell: usize,
}

fn bump(x: f64, c: f64, w: f64) -> f64 {
    (-((x - c) / w).powi(2)).exp()
}

impl Datum for SmoothDatum {
    fn u(&self, x: f64) -> Complex64 {
        (0.3 * bump(x, -0.55, 0.12)).into()
    }
    fn v(&self, x: f64) -> Complex64 {
        bump(x, -0.4, 0.1).into()
    }
    fn w(&self, x: f64) -> Complex64 {
        bump(x, 0.45, 0.1).into()
    }
    fn eta(&self, j: usize, x: f64) -> Complex64 {
        if j == self.cell {
            (0.5 * bump(x, 0.5, 0.12)).into()
        } else {
            0.0.into()
        }
    }
}

/// Samples a [`Datum`] on the grid nodes of `gen` (interface value from the wave side).
pub fn sample_datum(gen: &GeneratorMatrix<f64>, d: &dyn Datum) -> Vec<Complex64> {
    let lay = &gen.layout;
    let (hu, hw) = (1.0 / lay.n_u as f64, 1.0 / lay.n_w as f64);
    let mut z = vec![Complex64::new(0.0, 0.0); lay.dim];
    for i in 1..=lay.n_u {
        z[lay.u(i)] = d.u(-1.0 + i as f64 * hu);
    }
    for i in 1..lay.n_u {
        z[lay.v(i)] = d.v(-1.0 + i as f64 * hu);
    }
    for m in 1..lay.n_w {
        z[lay.w(m)] = d.w(m as f64 * hw);
    }
    // mass-weighted interface value
    z[lay.c()] = (d.v(0.0) * hu + d.w(0.0) * hw) / (hu + hw);
    for m in 0..lay.n_w {
        for j in 0..lay.n_mem {
            z[lay.eta(j, m)] = d.eta(j, m as f64 * hw);
        }
    }
    z
}
