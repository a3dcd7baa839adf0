//! Discrete state spaces `V_* ⊂ V_h` seen through their embedding into the
//! fine P1 space.
//!
//! A space is described by its prolongation `P` (coefficients to fine P1
//! values) and its Galerkin matrix `K_* = Pᵀ K P`, where `K` is the fine
//! matrix of `a(·,·)`. Everything the optimal control solver needs is the
//! fine-space operator `P K_*⁻¹ Pᵀ`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::fem::{assemble_a, CoefficientField, P1Space};
use crate::linalg::{CsrMatrix, LinearSolver};
use crate::mesh::{Mesh, MeshHierarchy};
use crate::{Error, Result};

pub trait GalerkinSpace: Send + Sync {
    /// The fine mesh carrying the P1 representation of every element.
    fn fine_mesh(&self) -> &Mesh;

    /// Fine matrix `K` of `a(·,·)` used to build this space.
    fn fine_operator(&self) -> &CsrMatrix;

    fn dim(&self) -> usize;

    fn fine_dim(&self) -> usize {
        self.fine_mesh().num_vertices()
    }

    /// `P c`.
    fn prolong(&self, coeffs: &[f64]) -> Vec<f64>;

    /// `Pᵀ v`.
    fn restrict(&self, fine: &[f64]) -> Vec<f64>;

    /// `K_*⁻¹ r`.
    fn solve_reduced(&self, rhs: &[f64]) -> Result<Vec<f64>>;

    /// Galerkin solution in this space for a fine load vector:
    /// `P K_*⁻¹ Pᵀ b`.
    fn galerkin_solve(&self, fine_rhs: &[f64]) -> Result<Vec<f64>> {
        if fine_rhs.len() != self.fine_dim() {
            return Err(Error::IncompatibleSpace(format!(
                "load of length {} for fine dimension {}",
                fine_rhs.len(),
                self.fine_dim()
            )));
        }
        let c = self.solve_reduced(&self.restrict(fine_rhs))?;
        Ok(self.prolong(&c))
    }

    /// Fine representation of the `j`-th basis function.
    fn basis_function(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[j] = 1.0;
        self.prolong(&e)
    }
}

/// `V_h` itself: `P = I`.
#[derive(Debug)]
pub struct StandardSpace<'a> {
    mesh: &'a Mesh,
    solver: LinearSolver,
}

impl<'a> StandardSpace<'a> {
    pub fn new(mesh: &'a Mesh, coeff: &CoefficientField) -> Result<Self> {
        let k = assemble_a(&P1Space::new(mesh), coeff)?;
        Self::from_operator(mesh, k)
    }

    pub fn from_operator(mesh: &'a Mesh, k: CsrMatrix) -> Result<Self> {
        if k.nrows() != mesh.num_vertices() {
            return Err(Error::IncompatibleSpace("operator does not match the mesh".into()));
        }
        let solver = LinearSolver::new(k, Some(mesh.vertices()))?;
        Ok(StandardSpace { mesh, solver })
    }

    pub fn solver(&self) -> &LinearSolver {
        &self.solver
    }
}

impl GalerkinSpace for StandardSpace<'_> {
    fn fine_mesh(&self) -> &Mesh {
        self.mesh
    }

    fn fine_operator(&self) -> &CsrMatrix {
        self.solver.matrix()
    }

    fn dim(&self) -> usize {
        self.mesh.num_vertices()
    }

    fn prolong(&self, coeffs: &[f64]) -> Vec<f64> {
        coeffs.to_vec()
    }

    fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        fine.to_vec()
    }

    fn solve_reduced(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(rhs)
    }
}

/// Coarse P1 space `V_H` embedded into the fine mesh of a hierarchy.
#[derive(Debug)]
pub struct CoarseSpace<'a> {
    hier: &'a MeshHierarchy,
    fine_k: CsrMatrix,
    prolongation: CsrMatrix,
    restriction: CsrMatrix,
    solver: LinearSolver,
}

impl<'a> CoarseSpace<'a> {
    pub fn new(hier: &'a MeshHierarchy, fine_k: CsrMatrix) -> Result<Self> {
        if fine_k.nrows() != hier.fine().num_vertices() {
            return Err(Error::IncompatibleSpace("operator does not match the fine mesh".into()));
        }
        let prolongation = crate::multiscale::prolongation(hier)?;
        let restriction = prolongation.transpose();
        let kc = restriction.matmul(&fine_k.matmul(&prolongation));
        let solver = LinearSolver::new(kc, Some(hier.coarse().vertices()))?;
        Ok(CoarseSpace { hier, fine_k, prolongation, restriction, solver })
    }

    pub fn prolongation(&self) -> &CsrMatrix {
        &self.prolongation
    }
}

impl GalerkinSpace for CoarseSpace<'_> {
    fn fine_mesh(&self) -> &Mesh {
        self.hier.fine()
    }

    fn fine_operator(&self) -> &CsrMatrix {
        &self.fine_k
    }

    fn dim(&self) -> usize {
        self.hier.coarse().num_vertices()
    }

    fn prolong(&self, coeffs: &[f64]) -> Vec<f64> {
        self.prolongation.matvec(coeffs)
    }

    fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.restriction.matvec(fine)
    }

    fn solve_reduced(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solver.solve(rhs)
    }
}

/// Ritz projection `R_* ζ` onto `target`: `a(R_* ζ, v) = a(ζ, v)` for all
/// `v` in the target space. `op_fine` must be the fine operator the target
/// was built from.
pub fn ritz_project(op_fine: &CsrMatrix, target: &dyn GalerkinSpace, zeta: &[f64]) -> Result<Vec<f64>> {
    if op_fine.nrows() != target.fine_dim() || zeta.len() != target.fine_dim() {
        return Err(Error::IncompatibleSpace(format!(
            "fine dimension {} does not embed a space on {} fine dofs",
            zeta.len(),
            target.fine_dim()
        )));
    }
    target.galerkin_solve(&op_fine.matvec(zeta))
}
