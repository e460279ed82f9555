//! Row-compressed sparse matrices.
//!
//! Index arrays are reference counted so matrices that share a sparsity
//! pattern (all forms on one FE space) can be combined entrywise without
//! re-merging rows.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Arc<Vec<usize>>,
    col_idx: Arc<Vec<usize>>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Arc<Vec<usize>>,
        col_idx: Arc<Vec<usize>>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n_rows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..n_rows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            debug_assert!(c < n_cols);
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_parts(n_rows, n_cols, Arc::new(row_ptr), Arc::new(col_idx), values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts(
            n,
            n,
            Arc::new((0..=n).collect()),
            Arc::new((0..n).collect()),
            vec![1.0; n],
        )
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_parts(
            n_rows,
            n_cols,
            Arc::new(vec![0; n_rows + 1]),
            Arc::new(Vec::new()),
            Vec::new(),
        )
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && Arc::ptr_eq(&self.row_ptr, &other.row_ptr)
            && Arc::ptr_eq(&self.col_idx, &other.col_idx)
    }

    /// Matrix with this pattern and new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self::from_parts(
            self.n_rows,
            self.n_cols,
            self.row_ptr.clone(),
            self.col_idx.clone(),
            values,
        )
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn try_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        Ok(self.mul_vec(x))
    }

    /// `y = Aᵀ x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_rows);
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let mut r = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                r += self.values[k] * y[self.col_idx[k]];
            }
            s += xi * r;
        }
        s
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in self.col_idx.iter() {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[k];
                col_idx[fill[c]] = i;
                values[fill[c]] = self.values[k];
                fill[c] += 1;
            }
        }
        Self::from_parts(
            self.n_cols,
            self.n_rows,
            Arc::new(counts),
            Arc::new(col_idx),
            values,
        )
    }

    /// Sparse product `A B` with a dense row accumulator.
    pub fn matmul(&self, b: &SparseMatrix) -> Self {
        assert_eq!(self.n_cols, b.n_rows);
        let mut mark = vec![usize::MAX; b.n_cols];
        let mut acc = vec![0.0; b.n_cols];
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut cols: Vec<usize> = Vec::new();
        row_ptr.push(0);
        for i in 0..self.n_rows {
            cols.clear();
            for ka in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (j, va) = (self.col_idx[ka], self.values[ka]);
                for kb in b.row_ptr[j]..b.row_ptr[j + 1] {
                    let c = b.col_idx[kb];
                    if mark[c] != i {
                        mark[c] = i;
                        acc[c] = 0.0;
                        cols.push(c);
                    }
                    acc[c] += va * b.values[kb];
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                col_idx.push(c);
                values.push(acc[c]);
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_parts(
            self.n_rows,
            b.n_cols,
            Arc::new(row_ptr),
            Arc::new(col_idx),
            values,
        )
    }

    /// Galerkin projection `Pᵀ A P`.
    pub fn galerkin(&self, p: &SparseMatrix) -> Self {
        p.transpose().matmul(&self.matmul(p))
    }

    /// `Σ cₖ Aₖ`. Matrices sharing one pattern are combined entrywise.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let (_, first) = terms[0];
        if terms.iter().all(|(_, m)| m.same_pattern(first)) {
            let mut values = vec![0.0; first.nnz()];
            for (c, m) in terms {
                for (v, mv) in values.iter_mut().zip(&m.values) {
                    *v += c * mv;
                }
            }
            return first.with_values(values);
        }
        let mut t = Vec::new();
        for (c, m) in terms {
            assert_eq!((m.n_rows, m.n_cols), (first.n_rows, first.n_cols));
            for i in 0..m.n_rows {
                for (j, v) in m.row(i) {
                    t.push((i, j, c * v));
                }
            }
        }
        Self::from_triplets(first.n_rows, first.n_cols, &t)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| c * v).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ|`
    pub fn symmetry_defect(&self) -> f64 {
        if self.n_rows != self.n_cols {
            return f64::INFINITY;
        }
        let mut d: f64 = 0.0;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d = d.max((v - self.get(j, i)).abs());
            }
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetry_defect() <= 1e-12 * self.max_abs()
    }

    /// Largest entrywise difference, treating missing entries as zero.
    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        let d = SparseMatrix::linear_combination(&[(1.0, self), (-1.0, other)]);
        d.max_abs()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                a[(i, j)] += v;
            }
        }
        a
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += c x`
pub fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_of(t: &[(usize, usize, f64)], r: usize, c: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(r, c);
        for &(i, j, v) in t {
            a[(i, j)] += v;
        }
        a
    }

    #[test]
    fn triplets_merge_duplicates() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0), (0, 0, 1.0)],
        );
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.row_ptr(), &[0, 2, 3]);
    }

    #[test]
    fn shared_pattern_combination() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0)]);
        let b = a.scaled(3.0);
        let c = SparseMatrix::linear_combination(&[(1.0, &a), (2.0, &b)]);
        assert!(c.same_pattern(&a));
        assert_eq!(c.get(1, 1), 14.0);
    }

    fn triplets(n: usize, m: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
        proptest::collection::vec((0..n, 0..m, -5.0f64..5.0), 0..40)
    }

    proptest! {
        #[test]
        fn products_match_dense(ta in triplets(6, 5), tb in triplets(5, 4), x in proptest::collection::vec(-1.0f64..1.0, 5)) {
            let a = SparseMatrix::from_triplets(6, 5, &ta);
            let b = SparseMatrix::from_triplets(5, 4, &tb);
            let (da, db) = (dense_of(&ta, 6, 5), dense_of(&tb, 5, 4));
            prop_assert!((a.to_dense() - &da).abs().max() < 1e-14);
            prop_assert!((a.matmul(&b).to_dense() - &da * &db).abs().max() < 1e-12);
            prop_assert!((a.transpose().to_dense() - da.transpose()).abs().max() == 0.0);
            let y = a.mul_vec(&x);
            let dy = &da * nalgebra::DVector::from_column_slice(&x);
            for i in 0..6 { prop_assert!((y[i] - dy[i]).abs() < 1e-12); }
            let yt = a.mul_vec_transpose(&y);
            let dyt = da.transpose() * dy;
            for i in 0..5 { prop_assert!((yt[i] - dyt[i]).abs() < 1e-11); }
        }
    }
}
