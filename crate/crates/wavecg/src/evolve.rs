//! Time stepping by the implicit midpoint rule and decay measurements.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{GeneratorMatrix, ShiftedSolver};
use crate::resolvent::fit_slope;
use crate::scalar::Real;

/// Ratio between consecutive checkpoint times.
pub const CHECKPOINT_RATIO: f64 = 1.2;
/// Number of checkpoints per sliding slope window.
pub const SLOPE_WINDOW: usize = 8;
/// Dimension ceiling for dense propagation.
pub const DENSE_LIMIT: usize = 2000;

/// Implicit midpoint stepper with a cached factorization of `I - dt/2 A`.
pub struct CnStepper<'a, T: Real> {
    solver: ShiftedSolver<'a, T, T>,
    shift: T,
    pub dt: T,
}

impl<'a, T: Real> CnStepper<'a, T> {
    pub fn new(gen: &'a GeneratorMatrix<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        // (I - dt/2 A) z+ = (I + dt/2 A) z, scaled by 2/dt
        let shift = T::lit(2.0) / dt;
        let solver = gen.shifted_solver(shift)?;
        Ok(Self { solver, shift, dt })
    }

    pub fn step(&self, z: &[T]) -> Vec<T> {
        let az = self.solver.generator().apply(z);
        let rhs: Vec<T> = z.iter().zip(&az).map(|(&a, &b)| self.shift * a + b).collect();
        self.solver.solve(&rhs)
    }

    pub fn step_n(&self, z: &[T], n: usize) -> Vec<T> {
        let mut z = z.to_vec();
        for _ in 0..n {
            z = self.step(&z);
        }
        z
    }
}

/// One implicit midpoint step (builds a fresh factorization; use [`CnStepper`] in loops).
pub fn step_cn<T: Real>(gen: &GeneratorMatrix<T>, z: &[T], dt: T) -> Result<Vec<T>> {
    if z.len() != gen.dim() {
        return Err(Error::Shape { expected: gen.dim(), got: z.len() });
    }
    Ok(CnStepper::new(gen, dt)?.step(z))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    InverseApplied,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayTrace {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// `(t, slope)`: least-squares slope of `log E` against `log t` over sliding
    /// windows of checkpoints, reported at the geometric mean time of each window.
    pub slopes: Vec<(f64, f64)>,
    pub initial_data: InitialData,
}

impl DecayTrace {
    /// Log-log slope over the checkpoints with `lo <= t <= hi`.
    pub fn fit_window(&self, lo: f64, hi: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.energies)
            .filter(|(&t, &e)| t >= lo && t <= hi && t > 0.0 && e > 0.0)
            .map(|(&t, &e)| (t.ln(), e.ln()))
            .collect();
        fit_slope(&pts)
    }

    /// Largest relative energy increase between consecutive checkpoints.
    pub fn max_relative_increase(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Step counts of geometric checkpoints `dt * 1.2^k` up to `t_max` (always including the end).
pub fn checkpoint_steps(t_max: f64, dt: f64) -> Vec<usize> {
    let total = (t_max / dt).round() as usize;
    let mut out = Vec::new();
    let mut t = dt;
    while t < t_max {
        let n = (t / dt).round() as usize;
        if n >= 1 && out.last() != Some(&n) {
            out.push(n);
        }
        t *= CHECKPOINT_RATIO;
    }
    if out.last() != Some(&total) && total > 0 {
        out.push(total);
    }
    out
}

pub fn evolve_energy<T: Real>(
    gen: &GeneratorMatrix<T>,
    z0: &[T],
    t_max: f64,
    dt: f64,
    initial_data: InitialData,
) -> Result<DecayTrace> {
    if z0.len() != gen.dim() {
        return Err(Error::Shape { expected: gen.dim(), got: z0.len() });
    }
    if !(t_max > 0.0 && dt > 0.0 && dt <= t_max) {
        return Err(Error::Config(format!("need 0 < dt <= t_max, got dt = {dt}, t_max = {t_max}")));
    }
    let stepper = CnStepper::new(gen, T::lit(dt))?;
    let mut times = vec![0.0];
    let mut energies = vec![gen.w_norm(z0).to_f64_lossy()];
    let mut z = z0.to_vec();
    let mut done = 0usize;
    for n in checkpoint_steps(t_max, dt) {
        for k in done..n {
            z = stepper.step(&z);
            if k % 64 == 0 && z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("state became non-finite at step {k} (t = {})", k as f64 * dt)));
            }
        }
        done = n;
        let e = gen.w_norm(&z).to_f64_lossy();
        if !e.is_finite() {
            return Err(Error::NonFinite(format!("energy became non-finite by t = {}", n as f64 * dt)));
        }
        times.push(n as f64 * dt);
        energies.push(e);
    }
    let slopes = sliding_slopes(&times, &energies);
    Ok(DecayTrace { times, energies, slopes, initial_data })
}

fn sliding_slopes(times: &[f64], energies: &[f64]) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(energies)
        .filter(|(&t, &e)| t > 0.0 && e > 0.0)
        .map(|(&t, &e)| (t.ln(), e.ln()))
        .collect();
    pts.windows(SLOPE_WINDOW)
        .filter_map(|w| {
            let tc = (w.iter().map(|p| p.0).sum::<f64>() / w.len() as f64).exp();
            fit_slope(w).map(|s| (tc, s))
        })
        .collect()
}

/// `L^{-T} xi` with standard normal `xi`: a random state whose energy is spread
/// evenly over an orthonormal basis of the energy space.
pub fn random_energy_state<T: Real>(gen: &GeneratorMatrix<T>, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: Vec<T> = (0..gen.dim())
        .map(|_| T::lit(StandardNormal.sample(&mut rng)))
        .collect();
    gen.l_t_solve(&xi)
}

/// Unit-energy `A^{-1} r` for a random `r` from [`random_energy_state`].
pub fn inverse_applied_datum<T: Real>(gen: &GeneratorMatrix<T>, seed: u64) -> Result<Vec<T>> {
    let r = random_energy_state(gen, seed);
    let z = gen.inverse_apply(&r)?;
    let n = gen.w_norm(&z);
    Ok(z.into_iter().map(|v| v / n).collect())
}

/// `||S_h(t) A_h^{-1}||_W` at each requested time (dense; dimension at most 2000).
///
/// Works with the energy-balanced Cayley matrix `C = L^T (I - dt/2 A)^{-1} (I + dt/2 A) L^{-T}`,
/// a Euclidean contraction, and advances between checkpoints by its binary powers.
pub fn semi_uniform_norm(gen: &GeneratorMatrix<f64>, times: &[f64], dt: f64) -> Result<Vec<(f64, f64)>> {
    let n = gen.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { dim: n, limit: DENSE_LIMIT });
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::Config("times must be non-negative and sorted".into()));
    }
    let steps: Vec<usize> = times.iter().map(|&t| (t / dt).round() as usize).collect();
    let stepper = CnStepper::new(gen, dt)?;
    let similar = |f: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync)| -> Result<DMatrix<f64>> {
        let cols: Vec<Result<Vec<f64>>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                Ok(gen.l_t_apply(&f(&gen.l_t_solve(&e))?))
            })
            .collect();
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(n, n, |r, c| cols[c][r]))
    };
    let cayley = similar(&|x| Ok(stepper.step(x)))?;
    let mut m = similar(&|x| gen.inverse_apply(x))?;
    let max_steps = steps.last().copied().unwrap_or(0);
    let mut powers = vec![cayley];
    while (1usize << powers.len()) <= max_steps {
        let last = powers.last().unwrap();
        powers.push(par_matmul(last, last));
    }
    let mut done = 0usize;
    let mut out = Vec::with_capacity(times.len());
    for (ti, &s) in steps.iter().enumerate() {
        let mut gap = s - done;
        let mut bit = 0;
        while gap > 0 {
            if gap & 1 == 1 {
                m = par_matmul(&powers[bit], &m);
            }
            gap >>= 1;
            bit += 1;
        }
        done = s;
        out.push((times[ti], m.clone().singular_values().max()));
    }
    Ok(out)
}

/// Dense product split over column blocks of `b`.
pub fn par_matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.ncols();
    let chunk = 64;
    let blocks: Vec<DMatrix<f64>> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|i| {
            let c0 = i * chunk;
            let w = chunk.min(n - c0);
            a * b.columns(c0, w)
        })
        .collect();
    let mut out = DMatrix::zeros(a.nrows(), n);
    for (i, blk) in blocks.into_iter().enumerate() {
        out.columns_mut(i * chunk, blk.ncols()).copy_from(&blk);
    }
    out
}

/// Exponential decay rate of the heat-memory block: slope of `log ||z(t)||_W`
/// against `t` over the second half of `[0, t_max]` for a random initial state.
pub fn a2_decay_rate(gen: &GeneratorMatrix<f64>, t_max: f64, dt: f64, seed: u64) -> Result<f64> {
    let a2 = gen.a2_block()?;
    let z0 = random_energy_state(&a2, seed);
    let stepper = CnStepper::new(&a2, dt)?;
    let total = (t_max / dt).round() as usize;
    let every = (total / 40).max(1);
    let mut z = z0;
    let mut pts = Vec::new();
    for k in 1..=total {
        z = stepper.step(&z);
        if k % every == 0 && k * 2 >= total {
            let e = a2.w_norm(&z);
            if !(e > 0.0) || !e.is_finite() {
                break;
            }
            pts.push((k as f64 * dt, e.ln()));
        }
    }
    fit_slope(&pts).ok_or_else(|| Error::NonFinite("no usable energies for the exponential fit".into()))
}
