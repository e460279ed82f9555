//! Sparse fully symmetric third-order tensor.
//!
//! Only one representative `(i ≤ j ≤ k)` of each index multiset is stored.
//! Contractions expand each stored entry over its distinct permutations, so
//! the result is the same as contracting the full tensor.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor3 {
    n: usize,
    entries: Vec<([usize; 3], f64)>,
}

pub fn canonical(mut idx: [usize; 3]) -> [usize; 3] {
    idx.sort_unstable();
    idx
}

impl SparseTensor3 {
    /// Merges entries given in any index order; exact zeros are dropped.
    pub fn from_entries(n: usize, raw: Vec<([usize; 3], f64)>) -> Self {
        let mut raw: Vec<([usize; 3], f64)> =
            raw.into_iter().map(|(i, v)| (canonical(i), v)).collect();
        raw.sort_unstable_by_key(|a| a.0);
        let mut entries: Vec<([usize; 3], f64)> = Vec::with_capacity(raw.len());
        for (idx, v) in raw {
            debug_assert!(idx[2] < n);
            match entries.last_mut() {
                Some(last) if last.0 == idx => last.1 += v,
                _ => entries.push((idx, v)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        Self { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored (canonical) entries.
    pub fn entries(&self) -> &[([usize; 3], f64)] {
        &self.entries
    }

    pub fn n_stored(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let key = canonical([i, j, k]);
        match self.entries.binary_search_by(|e| e.0.cmp(&key)) {
            Ok(p) => self.entries[p].1,
            Err(_) => 0.0,
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Visits every distinct permutation `(p, q, r)` of each stored entry.
    fn for_each_permutation(&self, mut f: impl FnMut(usize, usize, usize, f64)) {
        for &([a, b, c], v) in &self.entries {
            if a == b && b == c {
                f(a, a, a, v);
            } else if a == b {
                f(a, a, c, v);
                f(a, c, a, v);
                f(c, a, a, v);
            } else if b == c {
                f(a, b, b, v);
                f(b, a, b, v);
                f(b, b, a, v);
            } else {
                f(a, b, c, v);
                f(a, c, b, v);
                f(b, a, c, v);
                f(b, c, a, v);
                f(c, a, b, v);
                f(c, b, a, v);
            }
        }
    }

    /// Contraction over the last index: `(T·u)_{ij} = Σ_k T_{ijk} u_k`.
    pub fn contract_mode3(&self, u: &[f64]) -> Result<SparseMatrix> {
        self.check_len(u)?;
        let mut t = Vec::with_capacity(6 * self.entries.len());
        self.for_each_permutation(|i, j, k, v| t.push((i, j, v * u[k])));
        Ok(SparseMatrix::from_triplets(self.n, self.n, &t))
    }

    /// Same as [`contract_mode3`](Self::contract_mode3) but written into the
    /// pattern of `template`, which must contain every coupling of the tensor.
    pub fn contract_mode3_on(&self, template: &SparseMatrix, u: &[f64]) -> Result<SparseMatrix> {
        self.check_len(u)?;
        if template.n_rows() != self.n || template.n_cols() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: template.n_rows(),
            });
        }
        let (rp, ci) = (template.row_ptr(), template.col_idx());
        let mut values = vec![0.0; template.nnz()];
        self.for_each_permutation(|i, j, k, v| {
            let row = &ci[rp[i]..rp[i + 1]];
            let slot = rp[i]
                + row
                    .binary_search(&j)
                    .expect("tensor coupling outside template pattern");
            values[slot] += v * u[k];
        });
        Ok(template.with_values(values))
    }

    /// Contraction over the last two indices: `Σ_{jk} T_{ijk} u_j u_k`.
    pub fn contract_mode32(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut out = vec![0.0; self.n];
        self.for_each_permutation(|i, j, k, v| out[i] += v * u[j] * u[k]);
        Ok(out)
    }

    /// Full contraction `Σ_{ijk} T_{ijk} u_i u_j u_k`.
    pub fn contract_all(&self, u: &[f64]) -> Result<f64> {
        let b = self.contract_mode32(u)?;
        Ok(b.iter().zip(u).map(|(x, y)| x * y).sum())
    }
}
