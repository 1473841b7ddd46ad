//! Spectrum in the strip `-delta/2 < Re lambda <= 0`: zeros of `ell` (a polynomial
//! problem) and zeros of the characteristic function `chi` (scan plus Newton).
//! Also eigenvalues of the discretized generator, used to cross-check both.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MemoryKernel;
use crate::operator::GeneratorMatrix;
use crate::resolvent;
use crate::symbols;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Strip {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Strip {
    /// `re_min = -0.49 delta`, `re_max = 0`, `Im` in `[0.5, 50 pi]`.
    pub fn default_for(kernel: &MemoryKernel<f64>) -> Self {
        Self { re_min: -0.49 * kernel.delta(), re_max: 0.0, im_min: 0.5, im_max: 50.0 * std::f64::consts::PI }
    }

    pub fn with_im(mut self, lo: f64, hi: f64) -> Self {
        self.im_min = lo;
        self.im_max = hi;
        self
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    fn validate(&self) -> Result<()> {
        if !(self.re_min < self.re_max && self.im_min < self.im_max) {
            return Err(Error::Config(format!("empty strip {self:?}")));
        }
        Ok(())
    }

    /// Additionally requires the strip to lie inside the half-strip where `chi` is defined.
    pub fn validate_for(&self, kernel: &MemoryKernel<f64>) -> Result<()> {
        self.validate()?;
        if self.re_min <= -kernel.delta() / 2.0 {
            return Err(Error::Config(format!(
                "strip re_min = {} must exceed -delta/2 = {}",
                self.re_min,
                -kernel.delta() / 2.0
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootClass {
    Sigma,
    ZEll,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    pub class: RootClass,
}

impl Root {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RootList {
    pub z_ell_roots: Vec<Root>,
    pub sigma_roots: Vec<Root>,
}

impl RootList {
    pub fn all(&self) -> impl Iterator<Item = &Root> {
        self.z_ell_roots.iter().chain(self.sigma_roots.iter())
    }
}

/// Coefficients (ascending) of `prod_k (b_k + lambda) * ell(lambda)`.
fn ell_numerator(kernel: &MemoryKernel<f64>) -> Vec<f64> {
    let modes = kernel.modes();
    let mul = |p: &[f64], b: f64| {
        let mut q = vec![0.0; p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            q[i] += c * b;
            q[i + 1] += c;
        }
        q
    };
    let mut full = vec![1.0];
    for &(_, b) in modes {
        full = mul(&full, b);
    }
    for (k, &(a, bk)) in modes.iter().enumerate() {
        let mut p = vec![a / bk];
        for (j, &(_, bj)) in modes.iter().enumerate() {
            if j != k {
                p = mul(&p, bj);
            }
        }
        for (i, c) in p.into_iter().enumerate() {
            full[i] += c;
        }
    }
    full
}

/// All zeros of `ell` (roots of a monic polynomial of degree K, via its companion matrix).
pub fn z_ell_all(kernel: &MemoryKernel<f64>) -> Vec<Complex64> {
    let c = ell_numerator(kernel);
    let deg = c.len() - 1;
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / c[deg];
    }
    let mut roots: Vec<Complex64> = comp
        .complex_eigenvalues()
        .iter()
        .map(|r| polish_ell_root(kernel, *r))
        .collect();
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    roots
}

fn polish_ell_root(kernel: &MemoryKernel<f64>, mut z: Complex64) -> Complex64 {
    // Newton on ell itself; the derivative is -sum a/(b (b + z)^2)
    for _ in 0..20 {
        let Ok(f) = symbols::ell_rational(kernel, z) else { return z };
        let df: Complex64 = kernel.modes().iter().map(|&(a, b)| -a / b / ((z + b) * (z + b))).sum();
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        z -= step;
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Zeros of `ell` inside `strip` (no check that the strip lies in the half-strip, so
/// the function can be probed on widened windows).
pub fn z_ell_find(kernel: &MemoryKernel<f64>, strip: &Strip) -> Vec<Root> {
    z_ell_all(kernel)
        .into_iter()
        .filter(|z| strip.contains(*z))
        .map(|z| Root {
            re: z.re,
            im: z.im,
            residual: symbols::ell_rational(kernel, z).map(|v| v.norm()).unwrap_or(f64::INFINITY),
            class: RootClass::ZEll,
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct SigmaOptions {
    pub n_re: usize,
    pub n_im: usize,
    pub residual_tol: f64,
    pub max_iter: usize,
    pub dedup_radius: f64,
}

impl SigmaOptions {
    /// Seed grid with about eight points per unit of `pi` along the imaginary direction.
    pub fn for_strip(strip: &Strip) -> Self {
        let n_im = ((strip.im_max - strip.im_min) / std::f64::consts::PI * 8.0).ceil().max(16.0) as usize;
        Self { n_re: 16, n_im, residual_tol: 1e-9, max_iter: 60, dedup_radius: 1e-6 }
    }
}

fn chi_rational(kernel: &MemoryKernel<f64>, z: Complex64) -> Option<Complex64> {
    let l = symbols::ell_rational(kernel, z).ok()?;
    if l.norm() < 1e-14 {
        return None;
    }
    let v = symbols::chi_with_ell(z, l);
    v.is_finite().then_some(v)
}

/// Damped Newton with a central-difference derivative.
fn newton(kernel: &MemoryKernel<f64>, seed: Complex64, max_iter: usize, tol: f64) -> Option<(Complex64, f64)> {
    let mut z = seed;
    let mut f = chi_rational(kernel, z)?;
    for _ in 0..max_iter {
        if f.norm() < tol * 1e-3 {
            break;
        }
        let h = 1e-7 * (1.0 + z.norm());
        let df = (chi_rational(kernel, z + h)? - chi_rational(kernel, z - h)?) / (2.0 * h);
        if df.norm() == 0.0 {
            return None;
        }
        let step = f / df;
        let mut damp = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let zn = z - step * damp;
            if let Some(fnew) = chi_rational(kernel, zn) {
                if fnew.norm() < f.norm() {
                    z = zn;
                    f = fnew;
                    accepted = true;
                    break;
                }
            }
            damp *= 0.5;
        }
        if !accepted || (step * damp).norm() < 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Some((z, f.norm()))
}

/// Zeros of `chi` in `strip`, excluding `0` and the zeros of `ell`.
pub fn sigma_find(kernel: &MemoryKernel<f64>, strip: &Strip, opt: &SigmaOptions) -> Result<RootList> {
    strip.validate_for(kernel)?;
    if opt.n_re < 2 || opt.n_im < 2 {
        return Err(Error::Config("seed grid needs at least 2 x 2 points".into()));
    }
    let (nr, ni) = (opt.n_re, opt.n_im);
    let node = |i: usize, j: usize| {
        Complex64::new(
            strip.re_min + (strip.re_max - strip.re_min) * i as f64 / (nr - 1) as f64,
            strip.im_min + (strip.im_max - strip.im_min) * j as f64 / (ni - 1) as f64,
        )
    };
    let mag: Vec<f64> = (0..nr * ni)
        .into_par_iter()
        .map(|k| chi_rational(kernel, node(k / ni, k % ni)).map_or(f64::INFINITY, |v| v.norm()))
        .collect();
    let at = |i: usize, j: usize| mag[i * ni + j];
    let mut seeds = Vec::new();
    for i in 0..nr {
        for j in 0..ni {
            let m = at(i, j);
            if !m.is_finite() {
                continue;
            }
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= nr as i64 || b >= ni as i64 {
                        continue;
                    }
                    if at(a as usize, b as usize) < m {
                        is_min = false;
                    }
                }
            }
            if is_min {
                seeds.push(node(i, j));
            }
        }
    }
    let zl = z_ell_all(kernel);
    let found: Vec<(Complex64, f64)> = seeds
        .par_iter()
        .filter_map(|&s| {
            let r = newton(kernel, s, opt.max_iter, opt.residual_tol);
            if r.is_none() {
                log::debug!("Newton failed from seed {s}");
            }
            r
        })
        .collect();
    let mut roots: Vec<Root> = Vec::new();
    for (z, res) in found {
        if res >= opt.residual_tol || !strip.contains(z) || z.norm() <= 1e-8 {
            continue;
        }
        if zl.iter().any(|r| (r - z).norm() <= 1e-8) {
            continue;
        }
        if roots.iter().any(|r| (r.lambda() - z).norm() <= opt.dedup_radius) {
            continue;
        }
        roots.push(Root { re: z.re, im: z.im, residual: res, class: RootClass::Sigma });
    }
    roots.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    Ok(RootList { z_ell_roots: z_ell_find(kernel, strip), sigma_roots: roots })
}

/// Whether every root has a conjugate partner in the list (roots with `|Im| < tol`
/// are their own partners).
pub fn conjugate_closed(roots: &[Complex64], tol: f64) -> bool {
    roots.iter().all(|z| z.im.abs() < tol || roots.iter().any(|w| (w - z.conj()).norm() <= tol * (1.0 + z.norm())))
}

/// Eigenvalue of `A_h` nearest to `seed`, by inverse iteration followed by
/// Rayleigh-quotient shift updates.
pub fn nearest_eigenvalue(gen: &GeneratorMatrix<f64>, seed: Complex64, tol: f64, max_iter: usize) -> Result<Complex64> {
    let n = gen.dim();
    let mut x: Vec<Complex64> = (0..n).map(|k| Complex64::new(1.0 + (k % 7) as f64 * 0.1, (k % 5) as f64 * 0.1)).collect();
    let mut shift = seed;
    let mut solver = gen.shifted_solver(shift)?;
    let mut lam = seed;
    let normalize = |x: &mut Vec<Complex64>| {
        let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
    };
    normalize(&mut x);
    let mut refactor_after = 8;
    for it in 0..max_iter {
        let y = solver.solve(&x);
        // x is unit, so x^H y approximates 1/(shift - lambda)
        let mu: Complex64 = x.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
        if !mu.is_finite() || mu.norm() == 0.0 {
            return Ok(lam);
        }
        let new = shift - 1.0 / mu;
        x = y;
        normalize(&mut x);
        let change = (new - lam).norm();
        lam = new;
        if it > 0 && change <= tol * (1.0 + lam.norm()) {
            // residual check guards against a stalled iteration
            let ax = gen.apply(&x);
            let res = ax.iter().zip(&x).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt();
            if res <= 1e-6 * (1.0 + lam.norm()) {
                return Ok(lam);
            }
        }
        if it + 1 >= refactor_after && (lam - shift).norm() > 1e-13 * (1.0 + lam.norm()) {
            // Rayleigh update of the shift; landing exactly on the eigenvalue is success
            match gen.shifted_solver(lam) {
                Ok(s) => {
                    solver = s;
                    shift = lam;
                }
                Err(_) => return Ok(lam),
            }
            refactor_after = it + 3;
        }
    }
    log::warn!("inverse iteration from {seed} stopped at {lam} after {max_iter} steps");
    Ok(lam)
}

/// All eigenvalues of `A_h` by a dense real Schur factorization of the
/// energy-balanced matrix `L^T A L^{-T}` (dimension at most `limit`).
pub fn dense_eigenvalues(gen: &GeneratorMatrix<f64>, limit: usize) -> Result<Vec<Complex64>> {
    let n = gen.dim();
    if n > limit {
        return Err(Error::TooLarge { dim: n, limit });
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let x = gen.l_t_solve(&e);
            gen.l_t_apply(&gen.apply(&x))
        })
        .collect();
    let b = DMatrix::from_fn(n, n, |r, c| cols[c][r]);
    let mut ev = schur_eigenvalues(b)?;
    ev.sort_by(|a, b| (a.im, a.re).partial_cmp(&(b.im, b.re)).unwrap());
    Ok(ev)
}

// nalgebra's Francis QR stalls on the near-skew matrices met here, and faer's
// real path occasionally breaks down on exactly skew ones; its complex path and
// a shifted copy are the fallbacks.
fn schur_eigenvalues(b: DMatrix<f64>) -> Result<Vec<Complex64>> {
    use faer::complex_native::c64;
    let n = b.nrows();
    let finite = |v: &[c64]| v.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    let back = |v: Vec<c64>, shift: f64| v.into_iter().map(|z| Complex64::new(z.re - shift, z.im)).collect();
    let ev: Vec<c64> = faer::Mat::<f64>::from_fn(n, n, |r, c| b[(r, c)]).eigenvalues();
    if finite(&ev) {
        return Ok(back(ev, 0.0));
    }
    log::debug!("real eigensolver broke down (n = {n}); retrying in complex arithmetic");
    let ev: Vec<c64> = faer::Mat::<c64>::from_fn(n, n, |r, c| c64::new(b[(r, c)], 0.0)).eigenvalues();
    if finite(&ev) {
        return Ok(back(ev, 0.0));
    }
    let shift = 0.5 * b.amax().max(1.0);
    let ev: Vec<c64> = faer::Mat::<f64>::from_fn(n, n, |r, c| b[(r, c)] + if r == c { shift } else { 0.0 }).eigenvalues();
    if finite(&ev) {
        return Ok(back(ev, shift));
    }
    Err(Error::NonFinite("dense eigensolver returned non-finite values".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub checked: usize,
    /// `(s, ||R(is)||, 1/dist)` for every violation.
    pub violations: Vec<(f64, f64, f64)>,
}

impl ConsistencyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `||R(is, A_h)|| >= (1 - tol) / dist(is, roots)` at each sample.
pub fn resolvent_spectrum_consistency(
    gen: &GeneratorMatrix<f64>,
    roots: &RootList,
    s_samples: &[f64],
    tol: f64,
) -> Result<ConsistencyReport> {
    let pts: Vec<Complex64> = roots.all().map(|r| r.lambda()).collect();
    if pts.is_empty() {
        return Ok(ConsistencyReport { checked: s_samples.len(), violations: vec![] });
    }
    let res: Vec<Result<Option<(f64, f64, f64)>>> = s_samples
        .par_iter()
        .map(|&s| {
            let is = Complex64::new(0.0, s);
            let d = pts.iter().map(|p| (p - is).norm()).fold(f64::INFINITY, f64::min);
            let nrm = resolvent::norm_at(gen, s)?.norm;
            Ok(if nrm < (1.0 - tol) / d { Some((s, nrm, 1.0 / d)) } else { None })
        })
        .collect();
    let mut violations = Vec::new();
    for r in res {
        if let Some(v) = r? {
            violations.push(v);
        }
    }
    Ok(ConsistencyReport { checked: s_samples.len(), violations })
}
