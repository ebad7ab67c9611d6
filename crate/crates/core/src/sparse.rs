//! Compressed-row complex matrices and the dense/sparse operator wrapper.

use std::borrow::Cow;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Largest entry modulus of a dense matrix.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Complex matrix in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, mut trips: Vec<(usize, usize, C64)>) -> Self {
        trips.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values: Vec<C64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.prune();
        m
    }

    fn prune(&mut self) {
        if self.values.iter().all(|v| *v != C64::new(0.0, 0.0)) {
            return;
        }
        let trips: Vec<_> = self.triplets().filter(|t| t.2 != C64::new(0.0, 0.0)).collect();
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values = Vec::with_capacity(trips.len());
        for (r, c, v) in trips {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..self.rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, dim, (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect())
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m.prune();
        m
    }

    /// `sa·self + sb·other`.
    pub fn add(&self, other: &Self, sa: C64, sb: C64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let trips = self
            .triplets()
            .map(|(r, c, v)| (r, c, v * sa))
            .chain(other.triplets().map(|(r, c, v)| (r, c, v * sb)))
            .collect();
        Self::from_triplets(self.rows, self.cols, trips)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut trips = Vec::new();
        for r in 0..self.rows {
            for (k, v) in self.row(r) {
                for (c, w) in other.row(k) {
                    trips.push((r, c, v * w));
                }
            }
        }
        Self::from_triplets(self.rows, other.cols, trips)
    }

    /// `y = A x`.
    #[inline]
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut trips = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v != C64::new(0.0, 0.0) {
                    trips.push((r, c, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), trips)
    }

    /// `S·M` for dense `M`.
    pub fn left_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(self.cols, m.nrows());
        let mut out = DMatrix::zeros(self.rows, m.ncols());
        for j in 0..m.ncols() {
            self.apply(m.column(j).as_slice(), out.column_mut(j).as_mut_slice());
        }
        out
    }

    /// `M·S` for dense `M`.
    pub fn right_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        assert_eq!(m.ncols(), self.rows);
        let mut out = DMatrix::zeros(m.nrows(), self.cols);
        for k in 0..self.rows {
            for (j, v) in self.row(k) {
                let src = m.column(k);
                let mut dst = out.column_mut(j);
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d += s * v;
                }
            }
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.rows == self.cols && {
            let diff = self.add(&self.adjoint(), C64::new(1.0, 0.0), C64::new(-1.0, 0.0));
            diff.values.iter().all(|v| v.norm() <= tol)
        }
    }
}

/// Operator storage chosen by dimension: dense below a threshold, CSR above.
#[derive(Clone, Debug)]
pub enum Operator {
    Dense(DMatrix<C64>),
    Sparse(CsrMatrix),
}

impl Operator {
    pub fn with_threshold(m: CsrMatrix, dense_threshold: usize) -> Self {
        if m.rows() <= dense_threshold {
            Operator::Dense(m.to_dense())
        } else {
            Operator::Sparse(m)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::Sparse(s) => s.rows(),
        }
    }

    #[inline]
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        match self {
            Operator::Sparse(s) => s.apply(x, y),
            Operator::Dense(m) => {
                let n = m.ncols();
                for (r, out) in y.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for (c, xv) in x.iter().enumerate().take(n) {
                        acc += m[(r, c)] * xv;
                    }
                    *out = acc;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_csr(&self) -> CsrMatrix {
        match self {
            Operator::Dense(m) => CsrMatrix::from_dense(m),
            Operator::Sparse(s) => s.clone(),
        }
    }

    /// Borrowed CSR view, converting dense storage on demand.
    pub fn as_csr(&self) -> Cow<'_, CsrMatrix> {
        match self {
            Operator::Dense(m) => Cow::Owned(CsrMatrix::from_dense(m)),
            Operator::Sparse(s) => Cow::Borrowed(s),
        }
    }

    pub fn left_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        match self {
            Operator::Dense(d) => d * m,
            Operator::Sparse(s) => s.left_mul(m),
        }
    }

    pub fn right_mul(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        match self {
            Operator::Dense(d) => m * d,
            Operator::Sparse(s) => s.right_mul(m),
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        match self {
            Operator::Dense(d) => max_abs(&(d - d.adjoint())) <= tol,
            Operator::Sparse(s) => s.is_hermitian(tol),
        }
    }

    /// `⟨ψ|O|ψ⟩` for a normalized state.
    pub fn expect(&self, psi: &[C64]) -> C64 {
        let mut tmp = vec![C64::new(0.0, 0.0); psi.len()];
        self.apply(psi, &mut tmp);
        psi.iter().zip(&tmp).map(|(a, b)| a.conj() * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 1, C64::new(1.0, 2.0)),
                (2, 0, C64::new(-0.5, 0.0)),
                (1, 1, C64::new(0.0, 3.0)),
                (0, 1, C64::new(1.0, 0.0)),
            ],
        )
    }

    #[test]
    fn duplicates_summed() {
        let m = sample();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.to_dense()[(0, 1)], C64::new(2.0, 2.0));
    }

    #[test]
    fn products_match_dense() {
        let s = sample();
        let d = s.to_dense();
        let m = DMatrix::from_fn(3, 3, |i, j| C64::new(i as f64 + 0.5, j as f64 - 1.0));
        assert!(max_abs(&(s.left_mul(&m) - &d * &m)) < 1e-14);
        assert!(max_abs(&(s.right_mul(&m) - &m * &d)) < 1e-14);
        assert!(max_abs(&(s.matmul(&s).to_dense() - &d * &d)) < 1e-14);
        assert!(max_abs(&(s.adjoint().to_dense() - d.adjoint())) == 0.0);
        let dense = Operator::Dense(d.clone());
        let sparse = Operator::Sparse(s.clone());
        let x = [C64::new(1.0, 1.0), C64::new(-2.0, 0.5), C64::new(0.3, 0.0)];
        let mut y1 = [C64::new(0.0, 0.0); 3];
        let mut y2 = y1;
        dense.apply(&x, &mut y1);
        sparse.apply(&x, &mut y2);
        for (a, b) in y1.iter().zip(&y2) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn cancellation_prunes_entries() {
        let s = sample();
        let zero = s.add(&s, C64::new(1.0, 0.0), C64::new(-1.0, 0.0));
        assert_eq!(zero.nnz(), 0);
        assert!(!s.is_hermitian(1e-12));
        assert!(CsrMatrix::identity(4).is_hermitian(0.0));
    }
}
