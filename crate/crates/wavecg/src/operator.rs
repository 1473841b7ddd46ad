//! Finite-difference generator of the coupled system and its energy Gram matrix.
//!
//! Unknowns (wave on `(-1,0)` with `n_u` cells, heat on `(0,1)` with `n_w` cells):
//!
//! * `u_1..u_{n_u}` at `x_i = -1 + i h_u` (`u_0 = 0` is eliminated),
//! * `v_1..v_{n_u-1}`,
//! * one shared interface value `c`, standing for both `v(0)` and `w(0)`,
//! * `w_1..w_{n_w-1}` (`w_{n_w} = 0` is eliminated),
//! * memory values `eta_j(m)` for `j < J` and heat nodes `m = 0..n_w-1`.
//!
//! The interface equation is the discrete flux balance
//! `m_c c' = (phi_1 - phi_0)/h_w - (u_N - u_{N-1})/h_u` with `m_c = (h_u + h_w)/2`,
//! which makes `Re <A z, z>_W <= 0` hold exactly (summation by parts), not just
//! up to truncation error.
//!
//! The wave unknowns are interleaved (`u_1, v_1, u_2, v_2, ...`) so that, after the
//! memory values are eliminated node by node, shifted systems `(lambda - A) z = r`
//! reduce to a banded system of bandwidth three.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::MemoryKernel;
use crate::linalg::{BandedCholesky, BandedLu, Csr};
use crate::scalar::{Field, Real};

/// How the memory variable is represented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemorySpec {
    /// Geometric history grid `s_1, s_1 r, s_1 r^2, ...` cut once the tail mass of `mu`
    /// drops below `tail_tol`. `s1 = None` means `0.01 / delta`.
    History {
        ratio: f64,
        s1: Option<f64>,
        tail_tol: f64,
    },
    /// One auxiliary field per exponential mode.
    Modes,
}

impl Default for MemorySpec {
    fn default() -> Self {
        MemorySpec::History { ratio: 1.15, s1: None, tail_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_u: usize,
    pub n_w: usize,
    #[serde(default)]
    pub memory: MemorySpec,
}

impl GridSpec {
    pub fn new(n_u: usize, n_w: usize) -> Self {
        Self { n_u, n_w, memory: MemorySpec::default() }
    }

    pub fn with_history_ratio(mut self, ratio: f64) -> Self {
        self.memory = MemorySpec::History { ratio, s1: None, tail_tol: 1e-8 };
        self
    }

    pub fn with_modes(mut self) -> Self {
        self.memory = MemorySpec::Modes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u < 8 || self.n_w < 8 {
            return Err(Error::Config(format!(
                "n_u and n_w must be at least 8, got {} and {}",
                self.n_u, self.n_w
            )));
        }
        if let MemorySpec::History { ratio, s1, tail_tol } = &self.memory {
            if !(*ratio > 1.0) || !ratio.is_finite() {
                return Err(Error::Config(format!("history ratio must exceed 1, got {ratio}")));
            }
            if let Some(s) = s1 {
                if !(*s > 0.0) {
                    return Err(Error::Config(format!("history s1 must be positive, got {s}")));
                }
            }
            if !(*tail_tol > 0.0 && *tail_tol < 1.0) {
                return Err(Error::Config(format!("tail_tol must lie in (0,1), got {tail_tol}")));
            }
        }
        Ok(())
    }

    /// Same grid with both spatial resolutions doubled.
    pub fn refined(&self) -> Self {
        Self { n_u: 2 * self.n_u, n_w: 2 * self.n_w, memory: self.memory.clone() }
    }
}

/// Cells of the history variable and the `mu`-mass carried by each.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryGrid<T: Real> {
    /// Right cell edges `s_1 < ... < s_J`; the first cell starts at 0.
    pub nodes: Vec<T>,
    pub widths: Vec<T>,
    /// `int_{s_{j-1}}^{s_j} mu`.
    pub weights: Vec<T>,
}

impl<T: Real> HistoryGrid<T> {
    pub fn geometric(k: &MemoryKernel<T>, ratio: T, s1: Option<T>, tail_tol: T) -> Result<Self> {
        let s1 = s1.unwrap_or(T::lit(0.01) / k.delta());
        let mut nodes = vec![s1];
        while k.g(*nodes.last().unwrap()) > tail_tol {
            let next = *nodes.last().unwrap() * ratio;
            nodes.push(next);
            if nodes.len() > 100_000 {
                return Err(Error::Config("history grid does not reach the tail tolerance".into()));
            }
        }
        Self::from_nodes(k, nodes)
    }

    pub fn from_nodes(k: &MemoryKernel<T>, nodes: Vec<T>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("history grid needs at least one cell".into()));
        }
        let mut prev = T::zero();
        let mut widths = Vec::with_capacity(nodes.len());
        let mut weights = Vec::with_capacity(nodes.len());
        for &s in &nodes {
            if !(s > prev) {
                return Err(Error::Config("history nodes must be strictly increasing and positive".into()));
            }
            widths.push(s - prev);
            weights.push(k.mu_integral(prev, s));
            prev = s;
        }
        Ok(Self { nodes, widths, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> Vec<T> {
        let mut e = vec![T::zero()];
        e.extend(self.nodes.iter().copied());
        e
    }

    pub fn s_max(&self) -> T {
        *self.nodes.last().unwrap()
    }
}

/// Auxiliary fields `zeta_k' = -b_k zeta_k + (a_k/b_k) w`, `phi = w + sum zeta_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeReduction<T: Real> {
    pub amplitudes: Vec<T>,
    pub rates: Vec<T>,
}

impl<T: Real> ModeReduction<T> {
    pub fn from_kernel(k: &MemoryKernel<T>) -> Self {
        Self {
            amplitudes: k.modes().iter().map(|m| m.0).collect(),
            rates: k.modes().iter().map(|m| m.1).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Memory<T: Real> {
    History(HistoryGrid<T>),
    Modes(ModeReduction<T>),
}

/// Memory dynamics on one heat node: `eta' = T eta + f W`, contribution `wt . eta` to
/// `phi`, energy weight `omega_j` on the `j`-th component. `T` is lower bidiagonal.
#[derive(Clone, Debug)]
pub(crate) struct MemoryBlock<T: Real> {
    pub diag: Vec<T>,
    pub sub: Vec<T>,
    pub f: Vec<T>,
    pub wt: Vec<T>,
    pub omega: Vec<T>,
}

impl<T: Real> MemoryBlock<T> {
    fn from_memory(m: &Memory<T>) -> Self {
        match m {
            Memory::History(h) => {
                let j = h.len();
                Self {
                    diag: h.widths.iter().map(|&d| -T::one() / d).collect(),
                    sub: (0..j)
                        .map(|i| if i == 0 { T::zero() } else { T::one() / h.widths[i] })
                        .collect(),
                    f: vec![T::one(); j],
                    wt: h.weights.clone(),
                    omega: h.weights.clone(),
                }
            }
            Memory::Modes(md) => Self {
                diag: md.rates.iter().map(|&b| -b).collect(),
                sub: vec![T::zero(); md.rates.len()],
                f: md.amplitudes.iter().zip(&md.rates).map(|(&a, &b)| a / b).collect(),
                wt: vec![T::one(); md.rates.len()],
                omega: md.amplitudes.iter().zip(&md.rates).map(|(&a, &b)| b / a).collect(),
            },
        }
    }

    fn len(&self) -> usize {
        self.diag.len()
    }
}

/// Which part of the system a generator represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// The coupled system.
    Full,
    /// Coupling removed: wave with `v(0) = 0` next to heat-memory with `phi'(0) = 0`.
    Decoupled,
    /// Wave part only, `v(0) = 0`.
    Wave,
    /// Heat and memory only, `phi'(0) = 0`.
    HeatMemory,
}

/// Index bookkeeping for a state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub n_u: usize,
    pub n_w: usize,
    pub n_mem: usize,
    pub block: Block,
    /// Length of the non-memory part.
    pub nq: usize,
    pub dim: usize,
}

impl Layout {
    fn new(n_u: usize, n_w: usize, n_mem: usize, block: Block) -> Self {
        let nq = match block {
            Block::Full | Block::Decoupled => 2 * n_u - 1 + n_w,
            Block::Wave => 2 * n_u - 1,
            Block::HeatMemory => n_w,
        };
        let mem = if block == Block::Wave { 0 } else { n_mem * n_w };
        Self { n_u, n_w, n_mem, block, nq, dim: nq + mem }
    }

    pub fn has_wave(&self) -> bool {
        self.block != Block::HeatMemory
    }

    pub fn has_heat(&self) -> bool {
        self.block != Block::Wave
    }

    /// `u_i`, `i = 1..=n_u`.
    pub fn u(&self, i: usize) -> usize {
        debug_assert!(self.has_wave() && (1..=self.n_u).contains(&i));
        2 * (i - 1)
    }

    /// `v_i`, `i = 1..n_u`; `v_{n_u}` is the interface value and not a separate unknown.
    pub fn v(&self, i: usize) -> usize {
        debug_assert!(self.has_wave() && (1..self.n_u).contains(&i));
        2 * (i - 1) + 1
    }

    /// Interface unknown.
    pub fn c(&self) -> usize {
        debug_assert!(self.has_heat());
        match self.block {
            Block::HeatMemory => 0,
            _ => 2 * self.n_u - 1,
        }
    }

    /// `w_m` for `m = 0..n_w`; `m = 0` is the interface unknown.
    pub fn w(&self, m: usize) -> usize {
        debug_assert!(self.has_heat() && m < self.n_w);
        self.c() + m
    }

    /// `eta_j(m)`.
    pub fn eta(&self, j: usize, m: usize) -> usize {
        debug_assert!(self.has_heat() && j < self.n_mem && m < self.n_w);
        self.nq + m * self.n_mem + j
    }

    pub fn h_u(&self) -> f64 {
        1.0 / self.n_u as f64
    }

    pub fn h_w(&self) -> f64 {
        1.0 / self.n_w as f64
    }
}

/// Pieces needed by the structured shifted solver.
#[derive(Clone, Debug)]
pub(crate) struct Structure<T: Real> {
    /// `A` restricted to the non-memory unknowns without the `phi`-dependent terms.
    pub aq0: Vec<(usize, usize, T)>,
    /// `(row, heat node m, coefficient)`: row gains `coefficient * phi_m`.
    pub p: Vec<(usize, usize, T)>,
    pub mem: MemoryBlock<T>,
    pub kl: usize,
    pub ku: usize,
    pub wq: BandedCholesky<T>,
    /// Tridiagonal heat stiffness used for memory energies, one factor shared by all `j`.
    pub kw: Option<BandedCholesky<T>>,
}

/// Discretized generator `A` with Gram matrix `W` of the discrete energy norm.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix<T: Real> {
    pub a: Csr<T>,
    pub w: Csr<T>,
    pub grid: GridSpec,
    pub kernel: MemoryKernel<T>,
    pub memory: Memory<T>,
    pub layout: Layout,
    pub(crate) st: Structure<T>,
}

impl<T: Real> GeneratorMatrix<T> {
    /// Weights with which the memory components enter `phi`.
    pub fn memory_weights(&self) -> &[T] {
        &self.st.mem.wt
    }
}

/// Builds the discretization of the coupled system.
pub fn assemble<T: Real>(kernel: &MemoryKernel<T>, grid: &GridSpec) -> Result<GeneratorMatrix<T>> {
    assemble_block(kernel, grid, Block::Full)
}

pub fn assemble_block<T: Real>(
    kernel: &MemoryKernel<T>,
    grid: &GridSpec,
    block: Block,
) -> Result<GeneratorMatrix<T>> {
    grid.validate()?;
    let memory = match &grid.memory {
        MemorySpec::History { ratio, s1, tail_tol } => Memory::History(HistoryGrid::geometric(
            kernel,
            T::lit(*ratio),
            s1.map(T::lit),
            T::lit(*tail_tol),
        )?),
        MemorySpec::Modes => Memory::Modes(ModeReduction::from_kernel(kernel)),
    };
    build(kernel.clone(), grid.clone(), memory, block)
}

fn build<T: Real>(
    kernel: MemoryKernel<T>,
    grid: GridSpec,
    memory: Memory<T>,
    block: Block,
) -> Result<GeneratorMatrix<T>> {
    let mem = MemoryBlock::from_memory(&memory);
    let (nu, nw, jm) = (grid.n_u, grid.n_w, mem.len());
    let lay = Layout::new(nu, nw, jm, block);
    let hu = T::one() / T::from_usize_lossy(nu);
    let hw = T::one() / T::from_usize_lossy(nw);
    let two = T::lit(2.0);

    let mut aq0: Vec<(usize, usize, T)> = Vec::new();
    let mut p: Vec<(usize, usize, T)> = Vec::new();
    let mut wq_lower: Vec<(usize, usize, T)> = Vec::new();

    if lay.has_wave() {
        for i in 1..=nu {
            if i < nu {
                aq0.push((lay.u(i), lay.v(i), T::one()));
            } else if block == Block::Full {
                aq0.push((lay.u(i), lay.c(), T::one()));
            }
        }
        let inv = T::one() / (hu * hu);
        for i in 1..nu {
            let r = lay.v(i);
            aq0.push((r, lay.u(i + 1), inv));
            aq0.push((r, lay.u(i), -two * inv));
            if i > 1 {
                aq0.push((r, lay.u(i - 1), inv));
            }
        }
        for i in 1..=nu {
            let d = if i < nu { two / hu } else { T::one() / hu };
            wq_lower.push((lay.u(i), lay.u(i), d));
            if i < nu {
                wq_lower.push((lay.u(i + 1), lay.u(i), -T::one() / hu));
                wq_lower.push((lay.v(i), lay.v(i), hu));
            }
        }
    }
    if lay.has_heat() {
        let inv = T::one() / (hw * hw);
        for m in 1..nw {
            let r = lay.w(m);
            if m + 1 < nw {
                p.push((r, m + 1, inv));
            }
            p.push((r, m, -two * inv));
            p.push((r, m - 1, inv));
            wq_lower.push((r, r, hw));
        }
        let c = lay.c();
        if block == Block::Full {
            let mc = (hu + hw) / two;
            p.push((c, 1, T::one() / (hw * mc)));
            p.push((c, 0, -T::one() / (hw * mc)));
            aq0.push((c, lay.u(nu), -T::one() / (hu * mc)));
            aq0.push((c, lay.u(nu - 1), T::one() / (hu * mc)));
            wq_lower.push((c, c, mc));
        } else {
            let mc = hw / two;
            p.push((c, 1, T::one() / (hw * mc)));
            p.push((c, 0, -T::one() / (hw * mc)));
            wq_lower.push((c, c, mc));
        }
    }

    // bandwidth of the condensed system, including the P * Sel fill
    let mut kl = 0usize;
    let mut ku = 0usize;
    let mut widen = |r: usize, c: usize| {
        if r > c {
            kl = kl.max(r - c);
        } else {
            ku = ku.max(c - r);
        }
    };
    for &(r, c, _) in &aq0 {
        widen(r, c);
    }
    if lay.has_heat() {
        for &(r, m, _) in &p {
            widen(r, lay.w(m));
        }
    }
    let wkd = wq_lower.iter().fold(0, |acc, &(i, j, _)| acc.max(i - j));
    let wq = BandedCholesky::factor(lay.nq, wkd, wq_lower.iter().copied())
        .map_err(|e| Error::Singular(format!("Gram matrix assembly: {e}")))?;

    let kw = if lay.has_heat() {
        let mut d = vec![two / hw; nw];
        d[0] = T::one() / hw;
        let off = vec![-T::one() / hw; nw - 1];
        Some(BandedCholesky::tridiagonal(&d, &off)?)
    } else {
        None
    };

    // full sparse A and W
    let mut at = aq0.clone();
    let mut wt_trip: Vec<(usize, usize, T)> = Vec::new();
    for &(i, j, v) in &wq_lower {
        wt_trip.push((i, j, v));
        if i != j {
            wt_trip.push((j, i, v));
        }
    }
    if lay.has_heat() {
        for &(r, m, coef) in &p {
            at.push((r, lay.w(m), coef));
            for j in 0..jm {
                at.push((r, lay.eta(j, m), coef * mem.wt[j]));
            }
        }
        for m in 0..nw {
            for j in 0..jm {
                let row = lay.eta(j, m);
                at.push((row, row, mem.diag[j]));
                if j > 0 && mem.sub[j] != T::zero() {
                    at.push((row, lay.eta(j - 1, m), mem.sub[j]));
                }
                at.push((row, lay.w(m), mem.f[j]));
                let kd = if m == 0 { T::one() / hw } else { two / hw };
                wt_trip.push((row, row, mem.omega[j] * kd));
                if m + 1 < nw {
                    let o = -mem.omega[j] / hw;
                    wt_trip.push((row, lay.eta(j, m + 1), o));
                    wt_trip.push((lay.eta(j, m + 1), row, o));
                }
            }
        }
    }
    let a = Csr::from_triplets(lay.dim, lay.dim, at);
    let w = Csr::from_triplets(lay.dim, lay.dim, wt_trip);
    Ok(GeneratorMatrix {
        a,
        w,
        grid,
        kernel,
        memory,
        layout: lay,
        st: Structure { aq0, p, mem, kl, ku, wq, kw },
    })
}

impl<T: Real> GeneratorMatrix<T> {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn history(&self) -> Option<&HistoryGrid<T>> {
        match &self.memory {
            Memory::History(h) => Some(h),
            Memory::Modes(_) => None,
        }
    }

    /// The same discretization with the coupling removed.
    pub fn decoupled(&self) -> Result<Self> {
        build(self.kernel.clone(), self.grid.clone(), self.memory.clone(), Block::Decoupled)
    }

    /// Wave part with `v(0) = 0`.
    pub fn wave_block(&self) -> Result<Self> {
        build(self.kernel.clone(), self.grid.clone(), self.memory.clone(), Block::Wave)
    }

    /// Heat-memory part with `phi'(0) = 0` and its own Gram matrix.
    pub fn a2_block(&self) -> Result<Self> {
        a2_block(self)
    }

    pub fn apply<F: Field<T>>(&self, z: &[F]) -> Vec<F> {
        self.a.matvec(z)
    }

    pub fn w_apply<F: Field<T>>(&self, z: &[F]) -> Vec<F> {
        self.w.matvec(z)
    }

    /// `<x, y>_W = x^H W y`.
    pub fn w_inner<F: Field<T>>(&self, x: &[F], y: &[F]) -> F {
        let wy = self.w.matvec(y);
        x.iter().zip(&wy).fold(F::zero(), |acc, (&a, &b)| acc + a.conj() * b)
    }

    pub fn w_norm<F: Field<T>>(&self, x: &[F]) -> T {
        self.w_inner(x, x).re().max(T::zero()).sqrt()
    }

    /// `W^{-1} x`.
    pub fn w_solve<F: Field<T>>(&self, x: &[F]) -> Vec<F> {
        let mut y = x.to_vec();
        self.st.wq.solve_in_place(&mut y[..self.layout.nq]);
        self.for_each_memory_column(&mut y, |kw, col, omega| {
            kw.solve_in_place(col);
            for v in col.iter_mut() {
                *v = v.mul_real(T::one() / omega);
            }
        });
        y
    }

    /// `L^T x` where `W = L L^T` (block Cholesky).
    pub fn l_t_apply<F: Field<T>>(&self, x: &[F]) -> Vec<F> {
        let mut y = x.to_vec();
        self.st.wq.mul_lt(&mut y[..self.layout.nq]);
        self.for_each_memory_column(&mut y, |kw, col, omega| {
            kw.mul_lt(col);
            let s = omega.sqrt();
            for v in col.iter_mut() {
                *v = v.mul_real(s);
            }
        });
        y
    }

    /// `L^{-T} x`.
    pub fn l_t_solve<F: Field<T>>(&self, x: &[F]) -> Vec<F> {
        let mut y = x.to_vec();
        self.st.wq.backward(&mut y[..self.layout.nq]);
        self.for_each_memory_column(&mut y, |kw, col, omega| {
            kw.backward(col);
            let s = T::one() / omega.sqrt();
            for v in col.iter_mut() {
                *v = v.mul_real(s);
            }
        });
        y
    }

    /// `L^{-1} x`.
    pub fn l_solve<F: Field<T>>(&self, x: &[F]) -> Vec<F> {
        let mut y = x.to_vec();
        self.st.wq.forward(&mut y[..self.layout.nq]);
        self.for_each_memory_column(&mut y, |kw, col, omega| {
            kw.forward(col);
            let s = T::one() / omega.sqrt();
            for v in col.iter_mut() {
                *v = v.mul_real(s);
            }
        });
        y
    }

    fn for_each_memory_column<F: Field<T>>(
        &self,
        y: &mut [F],
        mut op: impl FnMut(&BandedCholesky<T>, &mut [F], T),
    ) {
        let lay = &self.layout;
        if let Some(kw) = &self.st.kw {
            let mut col = vec![F::zero(); lay.n_w];
            for j in 0..lay.n_mem {
                for m in 0..lay.n_w {
                    col[m] = y[lay.eta(j, m)];
                }
                op(kw, &mut col, self.st.mem.omega[j]);
                for m in 0..lay.n_w {
                    y[lay.eta(j, m)] = col[m];
                }
            }
        }
    }

    /// Factorization of `lambda I - A` by memory elimination and a banded LU.
    pub fn shifted_solver<F: Field<T>>(&self, lambda: F) -> Result<ShiftedSolver<'_, T, F>> {
        ShiftedSolver::new(self, lambda)
    }

    /// `A^{-1} r`.
    pub fn inverse_apply<F: Field<T>>(&self, r: &[F]) -> Result<Vec<F>> {
        let s = self.shifted_solver(F::zero())?;
        Ok(s.solve(r).into_iter().map(|v| -v).collect())
    }

    /// `max_z Re<Az,z>_W / ||z||_W^2` evaluated on the given states.
    pub fn dissipation_ratio(&self, z: &[T]) -> T {
        let az = self.a.matvec(z);
        let num = self.w_inner(z, &az);
        num / self.w_inner(z, z)
    }

    /// `W A + A^T W`, which vanishes exactly for a skew-adjoint generator.
    pub fn w_symmetric_part(&self) -> Csr<T> {
        let wa = crate::linalg::spmm(&self.w, &self.a);
        let wat = wa.transpose();
        let mut trip = wa.triplets();
        trip.extend(wat.triplets());
        Csr::from_triplets(self.dim(), self.dim(), trip)
    }

    /// Writes `A` or `W` as `row col re im` lines (zero-based indices).
    pub fn export_text(&self, which: Exported) -> String {
        let m = match which {
            Exported::A => &self.a,
            Exported::W => &self.w,
        };
        let mut s = format!(
            "# {} of dimension {} (n_u = {}, n_w = {}, memory = {}); columns: row col re im\n",
            match which {
                Exported::A => "generator A",
                Exported::W => "Gram matrix W",
            },
            self.dim(),
            self.layout.n_u,
            self.layout.n_w,
            self.layout.n_mem
        );
        for (r, c, v) in m.triplets() {
            s.push_str(&format!("{r} {c} {:.17e} 0\n", v.to_f64_lossy()));
        }
        s
    }

    /// `(u, v, w)` trajectory data and memory of a state in named form.
    pub fn unpack<F: Field<T>>(&self, z: &[F]) -> Result<StateVector<F>> {
        StateVector::from_flat(&self.layout, z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exported {
    A,
    W,
}

/// Heat-memory sub-generator with the decoupled boundary condition `phi'(0) = 0`.
pub fn a2_block<T: Real>(gen: &GeneratorMatrix<T>) -> Result<GeneratorMatrix<T>> {
    if matches!(gen.memory, Memory::Modes(_)) {
        return Err(Error::Unsupported(
            "a2_block needs history-grid memory; the mode reduction has no energy norm of the history space"
                .into(),
        ));
    }
    build(gen.kernel.clone(), gen.grid.clone(), gen.memory.clone(), Block::HeatMemory)
}

/// Shifted solve `(lambda I - A) z = r` and its conjugate transpose.
pub struct ShiftedSolver<'a, T: Real, F: Field<T>> {
    gen: &'a GeneratorMatrix<T>,
    pub lambda: F,
    inv_diag: Vec<F>,
    alpha: Vec<F>,
    /// Discrete analogue of the symbol `ell(lambda)`.
    pub ell_h: F,
    lu: BandedLu<T, F>,
}

impl<'a, T: Real, F: Field<T>> ShiftedSolver<'a, T, F> {
    fn new(gen: &'a GeneratorMatrix<T>, lambda: F) -> Result<Self> {
        let st = &gen.st;
        let lay = &gen.layout;
        let mem = &st.mem;
        let jm = if lay.has_heat() { mem.len() } else { 0 };
        let mut inv_diag = Vec::with_capacity(jm);
        for j in 0..jm {
            let d = lambda - F::from_real(mem.diag[j]);
            if d.pivot_mag() == T::zero() {
                return Err(Error::Singular(format!(
                    "shift coincides with a pole of the memory transport ({})",
                    mem.diag[j]
                )));
            }
            inv_diag.push(F::one() / d);
        }
        // alpha = D^{-1} f
        let mut alpha = vec![F::zero(); jm];
        for j in 0..jm {
            let mut acc = F::from_real(mem.f[j]);
            if j > 0 {
                acc += alpha[j - 1].mul_real(mem.sub[j]);
            }
            alpha[j] = acc * inv_diag[j];
        }
        let mut ell_h = F::one();
        for j in 0..jm {
            ell_h += alpha[j].mul_real(mem.wt[j]);
        }
        let mut entries: Vec<(usize, usize, F)> = Vec::with_capacity(st.aq0.len() + st.p.len() + lay.nq);
        for i in 0..lay.nq {
            entries.push((i, i, lambda));
        }
        for &(r, c, v) in &st.aq0 {
            entries.push((r, c, F::from_real(-v)));
        }
        if lay.has_heat() {
            for &(r, m, v) in &st.p {
                entries.push((r, lay.w(m), -(ell_h.mul_real(v))));
            }
        }
        let lu = BandedLu::factor(lay.nq, st.kl, st.ku, entries).map_err(|_| Error::EigenvalueHit {
            shift: format!("{lambda:?}"),
            nearest: "within round-off of the shift".into(),
        })?;
        Ok(Self { gen, lambda, inv_diag, alpha, ell_h, lu })
    }

    fn mem_forward(&self, r: &[F], out: &mut [F]) {
        let mem = &self.gen.st.mem;
        for j in 0..out.len() {
            let mut acc = r[j];
            if j > 0 {
                acc += out[j - 1].mul_real(mem.sub[j]);
            }
            out[j] = acc * self.inv_diag[j];
        }
    }

    fn mem_backward_adjoint(&self, b: &[F], out: &mut [F]) {
        let mem = &self.gen.st.mem;
        let n = out.len();
        for j in (0..n).rev() {
            let mut acc = b[j];
            if j + 1 < n {
                acc += out[j + 1].mul_real(mem.sub[j + 1]);
            }
            out[j] = acc * self.inv_diag[j].conj();
        }
    }

    pub fn solve(&self, r: &[F]) -> Vec<F> {
        let gen = self.gen;
        let lay = &gen.layout;
        let st = &gen.st;
        assert_eq!(r.len(), lay.dim);
        let jm = self.alpha.len();
        let mut z = r.to_vec();
        if jm == 0 {
            self.lu.solve_in_place(&mut z);
            return z;
        }
        // t_m = D^{-1} r_eta(m) stored in place, beta_m = wt . t_m
        let mut beta = vec![F::zero(); lay.n_w];
        let mut t = vec![F::zero(); jm];
        for m in 0..lay.n_w {
            let base = lay.eta(0, m);
            self.mem_forward(&r[base..base + jm], &mut t);
            let mut b = F::zero();
            for j in 0..jm {
                b += t[j].mul_real(st.mem.wt[j]);
            }
            beta[m] = b;
            z[base..base + jm].copy_from_slice(&t);
        }
        let q = &mut z[..lay.nq];
        for &(row, m, coef) in &st.p {
            q[row] += beta[m].mul_real(coef);
        }
        self.lu.solve_in_place(q);
        for m in 0..lay.n_w {
            let wm = z[lay.w(m)];
            let base = lay.eta(0, m);
            for j in 0..jm {
                z[base + j] += self.alpha[j] * wm;
            }
        }
        z
    }

    /// Solves `(lambda I - A)^H y = b`.
    pub fn solve_adjoint(&self, b: &[F]) -> Vec<F> {
        let gen = self.gen;
        let lay = &gen.layout;
        let st = &gen.st;
        assert_eq!(b.len(), lay.dim);
        let jm = self.alpha.len();
        let mut y = b.to_vec();
        if jm == 0 {
            self.lu.solve_adjoint_in_place(&mut y);
            return y;
        }
        let mut tmp = vec![F::zero(); jm];
        // rhs_q += Sel^T (f^T D^{-H} b_eta(m))
        for m in 0..lay.n_w {
            let base = lay.eta(0, m);
            self.mem_backward_adjoint(&b[base..base + jm], &mut tmp);
            let mut s = F::zero();
            for j in 0..jm {
                s += tmp[j].mul_real(st.mem.f[j]);
            }
            y[lay.w(m)] += s;
        }
        self.lu.solve_adjoint_in_place(&mut y[..lay.nq]);
        // (P^T y_q)_m
        let mut pty = vec![F::zero(); lay.n_w];
        for &(row, m, coef) in &st.p {
            pty[m] += y[row].mul_real(coef);
        }
        let mut rhs = vec![F::zero(); jm];
        for m in 0..lay.n_w {
            let base = lay.eta(0, m);
            for j in 0..jm {
                rhs[j] = b[base + j] + pty[m].mul_real(st.mem.wt[j]);
            }
            self.mem_backward_adjoint(&rhs, &mut tmp);
            y[base..base + jm].copy_from_slice(&tmp);
        }
        y
    }

    /// Memory response `D^{-1} f` (one entry per memory component).
    pub fn memory_response(&self) -> &[F] {
        &self.alpha
    }

    /// `(lambda - T)^{-1} r` on a single heat node.
    pub fn memory_solve(&self, r: &[F]) -> Vec<F> {
        let mut out = vec![F::zero(); r.len()];
        self.mem_forward(r, &mut out);
        out
    }

    pub fn generator(&self) -> &'a GeneratorMatrix<T> {
        self.gen
    }
}

/// Named view of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<F> {
    /// `u_1..u_{n_u}` (wave blocks only).
    pub u: Vec<F>,
    /// `v_1..v_{n_u}`; the last entry is the interface value for the coupled system.
    pub v: Vec<F>,
    /// `w_0..w_{n_w-1}`; the first entry is the interface value.
    pub w: Vec<F>,
    /// `eta[j][m]`.
    pub eta: Vec<Vec<F>>,
}

impl<F: Copy + Default> StateVector<F> {
    pub fn from_flat(lay: &Layout, z: &[F]) -> Result<Self> {
        if z.len() != lay.dim {
            return Err(Error::Shape { expected: lay.dim, got: z.len() });
        }
        let mut s = StateVector { u: vec![], v: vec![], w: vec![], eta: vec![] };
        if lay.has_wave() {
            s.u = (1..=lay.n_u).map(|i| z[lay.u(i)]).collect();
            s.v = (1..lay.n_u).map(|i| z[lay.v(i)]).collect();
            s.v.push(if lay.block == Block::Full { z[lay.c()] } else { F::default() });
        }
        if lay.has_heat() {
            s.w = (0..lay.n_w).map(|m| z[lay.w(m)]).collect();
            s.eta = (0..lay.n_mem)
                .map(|j| (0..lay.n_w).map(|m| z[lay.eta(j, m)]).collect())
                .collect();
        }
        Ok(s)
    }

    /// Flattens a state whose interface entries already agree.
    pub fn to_flat(&self, lay: &Layout) -> Result<Vec<F>> {
        let mut z = vec![F::default(); lay.dim];
        if lay.has_wave() {
            if self.u.len() != lay.n_u || self.v.len() != lay.n_u {
                return Err(Error::Shape { expected: lay.n_u, got: self.u.len().min(self.v.len()) });
            }
            for i in 1..=lay.n_u {
                z[lay.u(i)] = self.u[i - 1];
            }
            for i in 1..lay.n_u {
                z[lay.v(i)] = self.v[i - 1];
            }
        }
        if lay.has_heat() {
            if self.w.len() != lay.n_w {
                return Err(Error::Shape { expected: lay.n_w, got: self.w.len() });
            }
            if self.eta.len() != lay.n_mem || self.eta.iter().any(|e| e.len() != lay.n_w) {
                return Err(Error::Shape { expected: lay.n_mem * lay.n_w, got: self.eta.iter().map(Vec::len).sum() });
            }
            for m in 0..lay.n_w {
                z[lay.w(m)] = self.w[m];
                for j in 0..lay.n_mem {
                    z[lay.eta(j, m)] = self.eta[j][m];
                }
            }
        }
        Ok(z)
    }
}

/// Nearest state (in the energy metric) to `raw` that satisfies both interface
/// conditions: equal interface velocities `v(0) = w(0)` and the discrete flux
/// balance `(u_N - u_{N-1})/h_u = (phi_1 - phi_0)/h_w`.
///
/// `raw.v` and `raw.w` carry separate interface entries (`v[n_u-1]`, `w[0]`),
/// weighted by the half-cell masses `h_u/2` and `h_w/2`.
pub fn domain_project<T: Real>(gen: &GeneratorMatrix<T>, raw: &StateVector<T>) -> Result<Vec<T>> {
    let lay = &gen.layout;
    if lay.block != Block::Full {
        return Err(Error::Unsupported("domain_project applies to the coupled system only".into()));
    }
    let (nu, nw, jm) = (lay.n_u, lay.n_w, lay.n_mem);
    if raw.u.len() != nu || raw.v.len() != nu || raw.w.len() != nw || raw.eta.len() != jm
        || raw.eta.iter().any(|e| e.len() != nw)
    {
        return Err(Error::Shape { expected: lay.dim + 1, got: raw.u.len() + raw.v.len() + raw.w.len() });
    }
    let hu = T::one() / T::from_usize_lossy(nu);
    let hw = T::one() / T::from_usize_lossy(nw);
    // Raw coordinates: flat state with the interface split into (v_N, w_0).
    // raw index: flat layout with c := v_N, plus one extra slot at the end for w_0.
    let n = lay.dim + 1;
    let iw0 = lay.dim;
    let mut x = vec![T::zero(); n];
    {
        let mut tmp = raw.clone();
        tmp.w[0] = raw.v[nu - 1];
        let flat = tmp.to_flat(lay)?;
        x[..lay.dim].copy_from_slice(&flat);
        x[lay.c()] = raw.v[nu - 1];
        x[iw0] = raw.w[0];
    }
    // W couples the interface value only to itself (a diagonal mass), so the split
    // metric is W off the interface plus the two half-cell masses.
    let half = T::lit(0.5);
    let raw_metric_solve = |y: &[T]| -> Vec<T> {
        let mut full = y[..lay.dim].to_vec();
        full[lay.c()] = T::zero();
        let mut out = gen.w_solve(&full);
        out[lay.c()] = y[lay.c()] / (half * hu);
        out.push(y[iw0] / (half * hw));
        out
    };
    // constraint vectors g_k with g_k . x = 0
    let mut g1 = vec![T::zero(); n];
    g1[lay.c()] = T::one();
    g1[iw0] = -T::one();
    let mut g2 = vec![T::zero(); n];
    g2[lay.u(nu)] += T::one() / hu;
    g2[lay.u(nu - 1)] -= T::one() / hu;
    // phi_1 - phi_0 with phi_0 built from w_0 (raw heat side)
    g2[lay.w(1)] -= T::one() / hw;
    g2[iw0] += T::one() / hw;
    for j in 0..jm {
        g2[lay.eta(j, 1)] -= gen.st.mem.wt[j] / hw;
        g2[lay.eta(j, 0)] += gen.st.mem.wt[j] / hw;
    }
    let m1 = raw_metric_solve(&g1);
    let m2 = raw_metric_solve(&g2);
    let d = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |s, (&p, &q)| s + p * q);
    let (a11, a12, a22) = (d(&g1, &m1), d(&g1, &m2), d(&g2, &m2));
    let (r1, r2) = (d(&g1, &x), d(&g2, &x));
    let det = a11 * a22 - a12 * a12;
    let y1 = (a22 * r1 - a12 * r2) / det;
    let y2 = (a11 * r2 - a12 * r1) / det;
    for i in 0..n {
        x[i] -= m1[i] * y1 + m2[i] * y2;
    }
    let mut out = x[..lay.dim].to_vec();
    // after projection x_c == x_w0 up to round-off; merge
    out[lay.c()] = (x[lay.c()] * hu + x[iw0] * hw) / (hu + hw);
    Ok(out)
}

/// Residual of the discrete flux balance for a flat coupled state.
pub fn flux_mismatch<T: Real>(gen: &GeneratorMatrix<T>, z: &[T]) -> T {
    let lay = &gen.layout;
    let hu = T::one() / T::from_usize_lossy(lay.n_u);
    let hw = T::one() / T::from_usize_lossy(lay.n_w);
    let phi = |m: usize| {
        let mut p = z[lay.w(m)];
        for j in 0..lay.n_mem {
            p += gen.st.mem.wt[j] * z[lay.eta(j, m)];
        }
        p
    };
    (z[lay.u(lay.n_u)] - z[lay.u(lay.n_u - 1)]) / hu - (phi(1) - phi(0)) / hw
}
