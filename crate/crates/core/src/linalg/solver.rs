use alloc::vec;
use alloc::vec::Vec;

use super::{nested_dissection, norm2, pcg, CsrMatrix, SparseCholesky};
use crate::{Error, Point, Result};

/// Relative residual accepted by [`LinearSolver::solve`], measured as the
/// normwise backward error `‖b − Ax‖ / (‖A‖‖x‖ + ‖b‖)`.
pub const SOLVE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    Cholesky,
    ConjugateGradient,
}

#[derive(Clone, Debug)]
enum Backend {
    Direct(SparseCholesky),
    Iterative { inv_diag: Vec<f64> },
}

/// Symmetric positive definite solver owning its matrix: sparse Cholesky by
/// default, Jacobi-preconditioned conjugate gradients if the factorization
/// fails or is not requested.
#[derive(Clone, Debug)]
pub struct LinearSolver {
    matrix: CsrMatrix,
    norm_inf: f64,
    backend: Backend,
}

impl LinearSolver {
    /// Cholesky with a nested dissection ordering when coordinates are
    /// given, otherwise the natural ordering.
    pub fn new(matrix: CsrMatrix, coords: Option<&[Point]>) -> Result<Self> {
        Self::with_kind(matrix, coords, SolverKind::Cholesky)
    }

    pub fn with_kind(matrix: CsrMatrix, coords: Option<&[Point]>, kind: SolverKind) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NumericFailure("solver needs a square matrix".into()));
        }
        let norm_inf = (0..matrix.nrows())
            .map(|r| matrix.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let backend = match kind {
            SolverKind::Cholesky => {
                let perm = match coords {
                    Some(c) => nested_dissection(&matrix, c),
                    None => (0..matrix.nrows()).collect(),
                };
                match SparseCholesky::factor(&matrix, perm) {
                    Ok(f) => Backend::Direct(f),
                    Err(_) => Self::jacobi(&matrix)?,
                }
            }
            SolverKind::ConjugateGradient => Self::jacobi(&matrix)?,
        };
        Ok(LinearSolver { matrix, norm_inf, backend })
    }

    fn jacobi(matrix: &CsrMatrix) -> Result<Backend> {
        let diag = matrix.diagonal();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NumericFailure("matrix has a non-positive diagonal entry".into()));
        }
        Ok(Backend::Iterative { inv_diag: diag.iter().map(|d| 1.0 / d).collect() })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn kind(&self) -> SolverKind {
        match self.backend {
            Backend::Direct(_) => SolverKind::Cholesky,
            Backend::Iterative { .. } => SolverKind::ConjugateGradient,
        }
    }

    fn backward_error(&self, b: &[f64], x: &[f64]) -> f64 {
        let ax = self.matrix.matvec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let scale = self.norm_inf * norm2(x) + norm2(b);
        if scale == 0.0 {
            0.0
        } else {
            norm2(&r) / scale
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; b.len()]);
        }
        match &self.backend {
            Backend::Direct(f) => {
                let mut x = f.solve(b);
                let mut err = self.backward_error(b, &x);
                if err > SOLVE_TOL {
                    let ax = self.matrix.matvec(&x);
                    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
                    let dx = f.solve(&r);
                    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
                    err = self.backward_error(b, &x);
                }
                if err > SOLVE_TOL {
                    return Err(Error::LinearSolveFailure { reason: "direct solve inaccurate".into(), residual: err });
                }
                Ok(x)
            }
            Backend::Iterative { inv_diag } => {
                let n = b.len();
                let tol = 1e-3 * SOLVE_TOL * norm2(b);
                let out = pcg(
                    |x, y| self.matrix.matvec_into(x, y),
                    |r, z| {
                        for i in 0..r.len() {
                            z[i] = inv_diag[i] * r[i];
                        }
                    },
                    b,
                    None,
                    tol,
                    20 * n + 100,
                );
                let err = self.backward_error(b, &out.x);
                if err > SOLVE_TOL {
                    return Err(Error::LinearSolveFailure {
                        reason: alloc::format!("conjugate gradients stopped after {} iterations", out.iterations),
                        residual: err,
                    });
                }
                Ok(out.x)
            }
        }
    }
}
