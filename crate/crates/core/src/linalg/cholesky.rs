use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;

use super::CsrMatrix;
use crate::{Error, Result};

/// Up-looking sparse Cholesky factorization `P A Pᵀ = L Lᵀ` of a symmetric
/// positive definite matrix.
///
/// `L` is stored by columns with the diagonal entry first in every column.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseCholesky {
    /// Factors `a` (full symmetric storage) with the ordering `perm`
    /// (`perm[new] = old`).
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::NumericFailure(format!(
                "cholesky needs a square matrix and a full permutation ({}x{}, perm {})",
                n,
                a.ncols(),
                perm.len()
            )));
        }
        let mut pinv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        // Upper triangle of C = P A Pᵀ by columns: entries (i, k) with i <= k.
        let mut c_ptr = vec![0usize; n + 1];
        for k in 0..n {
            let old = perm[k];
            c_ptr[k + 1] = a.row(old).filter(|&(c, _)| pinv[c] <= k).count();
        }
        for k in 0..n {
            c_ptr[k + 1] += c_ptr[k];
        }
        let mut c_idx = vec![0usize; c_ptr[n]];
        let mut c_val = vec![0.0; c_ptr[n]];
        for k in 0..n {
            let mut p = c_ptr[k];
            for (c, v) in a.row(perm[k]) {
                let i = pinv[c];
                if i <= k {
                    c_idx[p] = i;
                    c_val[p] = v;
                    p += 1;
                }
            }
        }

        let parent = etree(n, &c_ptr, &c_idx);

        let mut mark = vec![usize::MAX; n];
        let mut stack = vec![0usize; n];
        let mut count = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_idx, &parent, &mut mark, &mut stack);
            for &j in &stack[top..] {
                count[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + count[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = usize::MAX);

        for k in 0..n {
            let top = ereach(k, &c_ptr, &c_idx, &parent, &mut mark, &mut stack);
            for p in c_ptr[k]..c_ptr[k + 1] {
                x[c_idx[p]] = c_val[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &j in &stack[top..] {
                let lkj = x[j] / values[col_ptr[j]];
                x[j] = 0.0;
                for p in col_ptr[j] + 1..next[j] {
                    x[row_idx[p] as usize] -= values[p] * lkj;
                }
                d -= lkj * lkj;
                let p = next[j];
                row_idx[p] = k as u32;
                values[p] = lkj;
                next[j] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "matrix is not positive definite (pivot {k} is {d:e})"
                )));
            }
            let p = next[k];
            row_idx[p] = k as u32;
            values[p] = d.sqrt();
            next[k] += 1;
        }
        Ok(SparseCholesky { n, perm, col_ptr, row_idx, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of `L`.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let start = self.col_ptr[j];
            let xj = x[j] / self.values[start];
            x[j] = xj;
            if xj != 0.0 {
                for p in start + 1..self.col_ptr[j + 1] {
                    x[self.row_idx[p] as usize] -= self.values[p] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            let start = self.col_ptr[j];
            let mut s = x[j];
            for p in start + 1..self.col_ptr[j + 1] {
                s -= self.values[p] * x[self.row_idx[p] as usize];
            }
            x[j] = s / self.values[start];
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

/// Elimination tree of the matrix whose upper triangle is given by columns.
fn etree(n: usize, c_ptr: &[usize], c_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &i0 in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
            let mut i = i0;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), returned in
/// `stack[top..]` in topological order.
fn ereach(
    k: usize,
    c_ptr: &[usize],
    c_idx: &[usize],
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &i0 in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
        let mut i = i0;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}
