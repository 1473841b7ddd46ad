//! Small self-contained sparse and banded linear algebra.

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

/// Real matrix in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct Csr<T: Real> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds from triplets, summing duplicates and dropping exact zeros.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trip: Vec<(usize, usize, T)>) -> Self {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(trip.len());
        let mut values: Vec<T> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < n_rows && c < n_cols, "triplet ({r},{c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self { n_rows, n_cols, indptr, indices, values };
        m.prune();
        m
    }

    fn prune(&mut self) {
        let mut indptr = vec![0usize; self.n_rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != T::zero() {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r).find(|&(j, _)| j == c).map(|(_, v)| v).unwrap_or(T::zero())
    }

    pub fn matvec<F: Field<T>>(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![F::zero(); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into<F: Field<T>>(&self, x: &[F], y: &mut [F]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = F::zero();
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += x[self.indices[k]].mul_real(self.values[k]);
            }
            *yr = acc;
        }
    }

    /// `A^T x`.
    pub fn matvec_t<F: Field<T>>(&self, x: &[F]) -> Vec<F> {
        assert_eq!(x.len(), self.n_rows);
        let mut y = vec![F::zero(); self.n_cols];
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += x[r].mul_real(self.values[k]);
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                trip.push((c, r, v));
            }
        }
        Self::from_triplets(self.n_cols, self.n_rows, trip)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Restriction to the index set `keep` (rows and columns).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n_cols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut trip = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if map[c] != usize::MAX {
                    trip.push((new_r, map[c], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), trip)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Banded LU with partial pivoting (row interchanges restricted to the band).
///
/// Storage is row-wise: row `i` keeps columns `i - kl ..= i + kl + ku`, the extra `kl`
/// upper diagonals absorb pivoting fill.
#[derive(Clone, Debug)]
pub struct BandedLu<T: Real, F: Field<T>> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<F>,
    mult: Vec<F>,
    piv: Vec<usize>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real, F: Field<T>> BandedLu<T, F> {
    /// Entries are supplied through `entries` as `(row, col, value)` with
    /// `col - row` in `[-kl, ku]`; duplicates are summed.
    pub fn factor(
        n: usize,
        kl: usize,
        ku: usize,
        entries: impl IntoIterator<Item = (usize, usize, F)>,
    ) -> Result<Self> {
        let width = 2 * kl + ku + 1;
        let mut a = vec![F::zero(); n * width];
        for (r, c, v) in entries {
            if r >= n || c >= n || c + kl < r || c > r + ku {
                return Err(Error::Config(format!(
                    "banded entry ({r},{c}) outside band kl={kl} ku={ku} n={n}"
                )));
            }
            a[r * width + (c + kl - r)] += v;
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            a,
            mult: vec![F::zero(); n * kl.max(1)],
            piv: vec![0; n],
            _t: std::marker::PhantomData,
        };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> F {
        self.a[r * self.width + (c + self.kl - r)]
    }

    #[inline]
    fn at_mut(&mut self, r: usize, c: usize) -> &mut F {
        let w = self.width;
        let kl = self.kl;
        &mut self.a[r * w + (c + kl - r)]
    }

    fn eliminate(&mut self) -> Result<()> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let scale = self.a.iter().fold(T::zero(), |m, v| m.max(v.pivot_mag()));
        for k in 0..n {
            let last_r = (k + kl).min(n - 1);
            let last_c = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).pivot_mag();
            for r in k + 1..=last_r {
                let m = self.at(r, k).pivot_mag();
                if m > best {
                    best = m;
                    p = r;
                }
            }
            if !(best > scale * T::epsilon() * T::lit(1e-3)) {
                return Err(Error::Singular(format!("banded LU: zero pivot in column {k}")));
            }
            self.piv[k] = p;
            if p != k {
                for c in k..=last_c {
                    let t = self.at(k, c);
                    *self.at_mut(k, c) = self.at(p, c);
                    *self.at_mut(p, c) = t;
                }
            }
            let d = self.at(k, k);
            for r in k + 1..=last_r {
                let m = self.at(r, k) / d;
                self.mult[k * kl.max(1) + (r - k - 1)] = m;
                *self.at_mut(r, k) = F::zero();
                if m != F::zero() {
                    for c in k + 1..=last_c {
                        let u = self.at(k, c);
                        *self.at_mut(r, c) -= m * u;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [F]) {
        let n = self.n;
        let kl = self.kl;
        let upper = self.kl + self.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != F::zero() {
                for r in k + 1..=(k + kl).min(n - 1) {
                    b[r] -= self.mult[k * kl.max(1) + (r - k - 1)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for c in k + 1..=(k + upper).min(n - 1) {
                acc -= self.at(k, c) * b[c];
            }
            b[k] = acc / self.at(k, k);
        }
    }

    /// Solves `A^H x = b` in place.
    pub fn solve_adjoint_in_place(&self, b: &mut [F]) {
        let n = self.n;
        let kl = self.kl;
        let upper = self.kl + self.ku;
        // U^H y = b
        for k in 0..n {
            let mut acc = b[k];
            for i in k.saturating_sub(upper)..k {
                acc -= self.at(i, k).conj() * b[i];
            }
            b[k] = acc / self.at(k, k).conj();
        }
        // apply M_k^H then P_k, k descending
        for k in (0..n).rev() {
            let mut acc = b[k];
            for r in k + 1..=(k + kl).min(n - 1) {
                acc -= self.mult[k * kl.max(1) + (r - k - 1)].conj() * b[r];
            }
            b[k] = acc;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }

    pub fn solve(&self, b: &[F]) -> Vec<F> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_adjoint(&self, b: &[F]) -> Vec<F> {
        let mut x = b.to_vec();
        self.solve_adjoint_in_place(&mut x);
        x
    }
}

/// Banded Cholesky `A = L L^T` of a real symmetric positive-definite matrix with
/// half-bandwidth `kd`.
#[derive(Clone, Debug)]
pub struct BandedCholesky<T: Real> {
    n: usize,
    kd: usize,
    /// `l[i*(kd+1) + (i-j)]` holds `L_{ij}` for `i-kd <= j <= i`.
    l: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    /// Lower-triangle entries `(i, j, v)` with `i >= j`, `i - j <= kd`; duplicates summed.
    pub fn factor(n: usize, kd: usize, lower: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let w = kd + 1;
        let mut l = vec![T::zero(); n * w];
        for (i, j, v) in lower {
            if i >= n || j > i || i - j > kd {
                return Err(Error::Config(format!("cholesky entry ({i},{j}) outside lower band {kd}")));
            }
            l[i * w + (i - j)] += v;
        }
        for i in 0..n {
            let j0 = i.saturating_sub(kd);
            for j in j0..=i {
                let mut s = l[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(kd));
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Singular(format!(
                            "Cholesky failed: matrix not positive definite at row {i}"
                        )));
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Ok(Self { n, kd, l })
    }

    /// Symmetric tridiagonal SPD matrix from its diagonal and off-diagonal.
    pub fn tridiagonal(diag: &[T], off: &[T]) -> Result<Self> {
        let n = diag.len();
        let mut e: Vec<(usize, usize, T)> = diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
        e.extend(off.iter().enumerate().map(|(i, &o)| (i + 1, i, o)));
        Self::factor(n, 1, e)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn lij(&self, i: usize, j: usize) -> T {
        self.l[i * (self.kd + 1) + (i - j)]
    }

    /// `x <- L^{-1} x`.
    pub fn forward<F: Field<T>>(&self, x: &mut [F]) {
        for i in 0..self.n {
            let mut acc = x[i];
            for j in i.saturating_sub(self.kd)..i {
                acc -= x[j].mul_real(self.lij(i, j));
            }
            x[i] = acc.mul_real(T::one() / self.lij(i, i));
        }
    }

    /// `x <- L^{-T} x`.
    pub fn backward<F: Field<T>>(&self, x: &mut [F]) {
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for k in i + 1..=(i + self.kd).min(self.n - 1) {
                acc -= x[k].mul_real(self.lij(k, i));
            }
            x[i] = acc.mul_real(T::one() / self.lij(i, i));
        }
    }

    /// `x <- L^T x`.
    pub fn mul_lt<F: Field<T>>(&self, x: &mut [F]) {
        for i in 0..self.n {
            let mut acc = x[i].mul_real(self.lij(i, i));
            for k in i + 1..=(i + self.kd).min(self.n - 1) {
                acc += x[k].mul_real(self.lij(k, i));
            }
            x[i] = acc;
        }
    }

    pub fn solve_in_place<F: Field<T>>(&self, x: &mut [F]) {
        self.forward(x);
        self.backward(x);
    }
}

/// Sparse product `A B`.
pub fn spmm<T: Real>(a: &Csr<T>, b: &Csr<T>) -> Csr<T> {
    assert_eq!(a.n_cols, b.n_rows);
    let mut trip = Vec::new();
    for r in 0..a.n_rows {
        for (k, av) in a.row(r) {
            for (c, bv) in b.row(k) {
                trip.push((r, c, av * bv));
            }
        }
    }
    Csr::from_triplets(a.n_rows, b.n_cols, trip)
}

/// `sum conj(x_i) y_i`.
pub fn dot<T: Real, F: Field<T>>(x: &[F], y: &[F]) -> F {
    x.iter().zip(y).fold(F::zero(), |acc, (&a, &b)| acc + a.conj() * b)
}

pub fn norm2<T: Real, F: Field<T>>(x: &[F]) -> T {
    x.iter().fold(T::zero(), |acc, v| acc + v.abs_sqr()).sqrt()
}
