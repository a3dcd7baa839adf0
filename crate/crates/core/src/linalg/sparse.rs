use alloc::vec;
use alloc::vec::Vec;

use super::DenseMatrix;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in input order, so the result is reproducible bit for bit.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&i| (triplets[i].0, triplets[i].1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, data }
    }

    /// Zero matrix with the given sorted column pattern per row.
    pub fn from_pattern(ncols: usize, rows: &[Vec<usize>]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        CsrMatrix { nrows: rows.len(), ncols, indptr, indices, data: vec![0.0; nnz] }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()].iter().copied().zip(self.data[range].iter().copied())
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()].binary_search(&c).ok().map(|k| range.start + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to an entry that is part of the pattern.
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        let k = self.position(r, c).expect("entry outside the sparsity pattern");
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    /// `Aᵀ x`
    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
        y
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (r, &xr) in x.iter().enumerate() {
            let mut row = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.data[k] * x[self.indices[k]];
            }
            s += xr * row;
        }
        s
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut acc = vec![0.0; other.ncols];
        let mut marker = vec![usize::MAX; other.ncols];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for r in 0..self.nrows {
            let start = indices.len();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = 0.0;
                        indices.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            indices[start..].sort_unstable();
            for &c in &indices[start..] {
                data.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: self.nrows, ncols: other.ncols, indptr, indices, data }
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &i) in idx.iter().enumerate() {
            local[i] = k;
        }
        let mut indptr = Vec::with_capacity(idx.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for &r in idx {
            let mut row: Vec<(usize, f64)> = self
                .row(r)
                .filter(|&(c, _)| local[c] != usize::MAX)
                .map(|(c, v)| (local[c], v))
                .collect();
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: idx.len(), ncols: idx.len(), indptr, indices, data }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A − Aᵀ|` over all entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 1, 1.0), (1, 2, 2.0), (0, 1, 0.5), (1, 0, -1.0)]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![1.5, 1.0]);
        assert_eq!(m.transpose_matvec(&[1.0, 2.0]), vec![-2.0, 1.5, 4.0]);
        assert_eq!(m.transpose().get(2, 1), 2.0);
    }

    #[test]
    fn submatrix_and_quad_form() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 2, 1.0), (2, 0, 1.0), (2, 2, 3.0), (1, 1, 5.0)]);
        let s = m.principal_submatrix(&[0, 2]);
        assert_eq!(s.to_dense().as_slice(), &[2.0, 1.0, 1.0, 3.0]);
        assert_eq!(m.quad_form(&[1.0, 0.0, 1.0]), 7.0);
        assert_eq!(m.asymmetry(), 0.0);
    }
}
