//! Memory kernels given as finite sums of decaying exponentials.
//!
//! `mu(s) = sum a_k exp(-b_k s)` is the memory density and
//! `g(s) = int_s^inf mu = sum (a_k / b_k) exp(-b_k s)` the relaxation kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tolerance on the unit mass of `g`.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MemoryKernel<T: Real> {
    modes: Vec<(T, T)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub mass_g: f64,
    pub kappa: f64,
    pub delta: f64,
    pub theta: f64,
    pub valid: bool,
}

impl<T: Real> MemoryKernel<T> {
    /// Builds a kernel from `(a_k, b_k)` pairs. Positivity is enforced here; the unit
    /// mass condition is reported by [`MemoryKernel::check`].
    pub fn new(modes: Vec<(T, T)>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Config("kernel needs at least one mode".into()));
        }
        for (k, &(a, b)) in modes.iter().enumerate() {
            if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Config(format!(
                    "mode {k}: amplitude and rate must be positive and finite, got ({a}, {b})"
                )));
            }
        }
        Ok(Self { modes })
    }

    /// Like [`MemoryKernel::new`] but also demands unit mass of `g`.
    pub fn new_valid(modes: Vec<(T, T)>) -> Result<Self> {
        let k = Self::new(modes)?;
        let rep = k.check();
        if !rep.valid {
            return Err(Error::Config(format!(
                "sum a_k/b_k^2 = {} but must equal 1 (use normalize)",
                rep.mass_g
            )));
        }
        Ok(k)
    }

    /// Rescales the amplitudes so that `sum a_k / b_k^2 = 1`.
    pub fn normalize(modes: Vec<(T, T)>) -> Result<Self> {
        let k = Self::new(modes)?;
        let m = k.mass_g();
        Ok(Self {
            modes: k.modes.iter().map(|&(a, b)| (a / m, b)).collect(),
        })
    }

    pub fn modes(&self) -> &[(T, T)] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn mu(&self, s: T) -> T {
        self.modes
            .iter()
            .fold(T::zero(), |acc, &(a, b)| acc + a * (-b * s).exp())
    }

    pub fn g(&self, s: T) -> T {
        self.modes
            .iter()
            .fold(T::zero(), |acc, &(a, b)| acc + a / b * (-b * s).exp())
    }

    /// `int_lo^hi mu` in closed form.
    pub fn mu_integral(&self, lo: T, hi: T) -> T {
        self.g(lo) - self.g(hi)
    }

    pub fn mass_g(&self) -> T {
        self.modes
            .iter()
            .fold(T::zero(), |acc, &(a, b)| acc + a / (b * b))
    }

    pub fn kappa(&self) -> T {
        self.modes.iter().fold(T::zero(), |acc, &(a, b)| acc + a / b)
    }

    pub fn delta(&self) -> T {
        self.modes
            .iter()
            .fold(T::infinity(), |acc, &(_, b)| acc.min(b))
    }

    /// Constant with `g <= theta * mu`; valid termwise, not necessarily tight.
    pub fn theta(&self) -> T {
        T::one() / self.delta()
    }

    pub fn check(&self) -> KernelReport {
        let mass = self.mass_g().to_f64_lossy();
        KernelReport {
            mass_g: mass,
            kappa: self.kappa().to_f64_lossy(),
            delta: self.delta().to_f64_lossy(),
            theta: self.theta().to_f64_lossy(),
            valid: (mass - 1.0).abs() <= MASS_TOL,
        }
    }

    pub fn to_f64_modes(&self) -> Vec<(f64, f64)> {
        self.modes
            .iter()
            .map(|&(a, b)| (a.to_f64_lossy(), b.to_f64_lossy()))
            .collect()
    }
}

/// Free-function forms matching the operation names used elsewhere.
pub fn mu_eval<T: Real>(k: &MemoryKernel<T>, s: T) -> Result<T> {
    if s < T::zero() {
        return Err(Error::Domain(format!("mu(s) needs s >= 0, got {s}")));
    }
    Ok(k.mu(s))
}

pub fn g_eval<T: Real>(k: &MemoryKernel<T>, s: T) -> Result<T> {
    if s < T::zero() {
        return Err(Error::Domain(format!("g(s) needs s >= 0, got {s}")));
    }
    Ok(k.g(s))
}

pub fn check<T: Real>(k: &MemoryKernel<T>) -> KernelReport {
    k.check()
}

pub fn normalize<T: Real>(modes: Vec<(T, T)>) -> Result<MemoryKernel<T>> {
    MemoryKernel::normalize(modes)
}
