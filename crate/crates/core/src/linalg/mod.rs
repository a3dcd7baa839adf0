//! Sparse and dense linear algebra used by the discretizations.

mod cg;
mod cholesky;
mod dense;
mod ordering;
mod solver;
mod sparse;

pub use cg::{pcg, CgOutcome};
pub use cholesky::SparseCholesky;
pub use dense::{DenseCholesky, DenseMatrix};
pub use ordering::nested_dissection;
pub use solver::{LinearSolver, SolverKind};
pub use sparse::CsrMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    #[allow(unused_imports)] // inherent methods win whenever std is linked
    use num_traits::Float;
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
