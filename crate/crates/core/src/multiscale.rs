//! Localized orthogonal decomposition on a coarse/fine hierarchy: the
//! quasi-interpolation `I_H`, the fine-scale kernel `W_h = ker I_H`, the
//! multiscale space `V^ms = {v ∈ V_h : a(v, w) = 0 for all w ∈ W_h}` and the
//! boundary corrector `B` with `B q ∈ W_h`,
//! `a(B q, w) = −∫_Γ q w ds` for all `w ∈ W_h`.
//!
//! Problems posed in `W_h` (or in its restriction to a patch) are solved as
//! saddle point problems through the Schur complement of the constraint
//! `C x = 0`, where `C` holds the rows of `I_H`:
//!
//! ```text
//!   x0 = K⁻¹ r,   S μ = C x0,   x = x0 − K⁻¹ Cᵀ μ,   S = C K⁻¹ Cᵀ.
//! ```
//!
//! Redundant constraint rows (which occur on patches whose interior holds
//! fewer fine dofs than touching coarse nodes) are dropped by a pivoted
//! Cholesky pass over `S`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{
    assemble_a, assemble_boundary_coupling, assemble_domain_load, assemble_mass, p1_gradients, q_rho_project,
    CoefficientField, P1Space,
};
use crate::linalg::{CsrMatrix, DenseCholesky, DenseMatrix, LinearSolver};
use crate::mesh::{barycentric, BoundaryMesh, MeshHierarchy};
use crate::space::GalerkinSpace;
use crate::{Error, Point, Result};

/// Coarse-to-fine prolongation `P` (fine dofs × coarse dofs): the value of
/// every coarse hat function at every fine vertex.
pub fn prolongation(hier: &MeshHierarchy) -> Result<CsrMatrix> {
    let (coarse, fine) = (hier.coarse(), hier.fine());
    let mut triplets = Vec::with_capacity(3 * fine.num_vertices());
    for v in 0..fine.num_vertices() {
        let t = *fine
            .vertex_triangles(v)
            .first()
            .ok_or_else(|| Error::IncompatibleHierarchy(format!("fine vertex {v} has no triangle")))?;
        let parent = hier.parent()[t];
        let lam = barycentric(fine.vertices()[v], coarse.triangle_points(parent));
        for (i, &l) in lam.iter().enumerate() {
            let l = snap(l);
            if l != 0.0 {
                triplets.push((v, coarse.triangles()[parent][i], l));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(fine.num_vertices(), coarse.num_vertices(), &triplets))
}

fn snap(l: f64) -> f64 {
    if l.abs() < 1e-13 {
        0.0
    } else if (l - 1.0).abs() < 1e-13 {
        1.0
    } else {
        l
    }
}

/// `I_H`: on every coarse triangle the local `L2` projection onto affine
/// functions, then at every coarse vertex the unweighted mean over the
/// triangles sharing it. Affine functions on a triangle are their own
/// projections, so `I_H` is the identity on `V_H` without further
/// correction.
#[derive(Clone, Debug)]
pub struct CoarseInterpolation {
    matrix: CsrMatrix,
}

impl CoarseInterpolation {
    /// Coarse dofs × fine dofs.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.matvec(v)
    }

    /// `max_T (H_T⁻¹‖v − I_H v‖_{L2(T)} + ‖∇(v − I_H v)‖_{L2(T)}) / ‖∇v‖_{L2(ω_T)}`
    /// over coarse triangles with `‖∇v‖_{L2(ω_T)} > 0`, with `ω_T` the
    /// one-layer patch of `T`.
    pub fn stability_ratio(&self, hier: &MeshHierarchy, v: &[f64]) -> Result<f64> {
        let (coarse, fine) = (hier.coarse(), hier.fine());
        let p = prolongation(hier)?;
        let iv = p.matvec(&self.apply(v));
        let diff: Vec<f64> = v.iter().zip(&iv).map(|(a, b)| a - b).collect();
        let nc = coarse.num_triangles();
        let mut l2 = vec![0.0; nc];
        let mut grad_diff = vec![0.0; nc];
        let mut grad_v = vec![0.0; nc];
        for (t, tri) in fine.triangles().iter().enumerate() {
            let pts = fine.triangle_points(t);
            let (g, area) = p1_gradients(&pts);
            let d = [diff[tri[0]], diff[tri[1]], diff[tri[2]]];
            let m = area / 12.0
                * (2.0 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + 2.0 * (d[0] * d[1] + d[1] * d[2] + d[0] * d[2]));
            let sq = |w: [f64; 3]| {
                let gx = w[0] * g[0][0] + w[1] * g[1][0] + w[2] * g[2][0];
                let gy = w[0] * g[0][1] + w[1] * g[1][1] + w[2] * g[2][1];
                area * (gx * gx + gy * gy)
            };
            let parent = hier.parent()[t];
            l2[parent] += m;
            grad_diff[parent] += sq(d);
            grad_v[parent] += sq([v[tri[0]], v[tri[1]], v[tri[2]]]);
        }
        let mut worst: f64 = 0.0;
        for t in 0..nc {
            let patch_grad: f64 = coarse.patch(t, 1)?.iter().map(|&s| grad_v[s]).sum();
            if patch_grad > 0.0 {
                let lhs = l2[t].sqrt() / coarse.diameter(t) + grad_diff[t].sqrt();
                worst = worst.max(lhs / patch_grad.sqrt());
            }
        }
        Ok(worst)
    }

    /// Largest stability ratio over `samples` random fine functions with
    /// entries uniform in `[-1, 1]`.
    pub fn measure_constant(&self, hier: &MeshHierarchy, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let v: Vec<f64> = (0..hier.fine().num_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst = worst.max(self.stability_ratio(hier, &v)?);
        }
        Ok(worst)
    }
}

pub fn build_ih(hier: &MeshHierarchy) -> Result<CoarseInterpolation> {
    let (coarse, fine) = (hier.coarse(), hier.fine());
    let nc = coarse.num_vertices();
    let mut valence = vec![0usize; nc];
    for tri in coarse.triangles() {
        for &z in tri {
            valence[z] += 1;
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); coarse.num_triangles()];
    for (t, &p) in hier.parent().iter().enumerate() {
        children[p].push(t);
    }
    let mut triplets = Vec::new();
    for (ct, kids) in children.iter().enumerate() {
        if kids.is_empty() {
            return Err(Error::IncompatibleHierarchy(format!("coarse triangle {ct} has no fine children")));
        }
        let cpts = coarse.triangle_points(ct);
        let area = coarse.area(ct);
        // r_i = ∫_T v λ_i as a row over the fine dofs of T.
        let mut r: BTreeMap<usize, [f64; 3]> = BTreeMap::new();
        for &t in kids {
            let tri = fine.triangles()[t];
            let lam: Vec<[f64; 3]> = tri.iter().map(|&a| barycentric(fine.vertices()[a], cpts)).collect();
            let w = fine.area(t) / 12.0;
            for (k, &a) in tri.iter().enumerate() {
                let entry = r.entry(a).or_insert([0.0; 3]);
                for i in 0..3 {
                    let sum_i = lam[0][i] + lam[1][i] + lam[2][i];
                    entry[i] += w * (lam[k][i] + sum_i);
                }
            }
        }
        // Local inverse mass matrix (3/|T|)[[3,-1,-1],[-1,3,-1],[-1,-1,3]].
        let minv = |i: usize, j: usize| if i == j { 9.0 / area } else { -3.0 / area };
        for (zi, &z) in coarse.triangles()[ct].iter().enumerate() {
            let scale = 1.0 / valence[z] as f64;
            for (&a, ri) in &r {
                let c = (0..3).map(|i| minv(zi, i) * ri[i]).sum::<f64>();
                triplets.push((z, a, scale * c));
            }
        }
    }
    let mut matrix = CsrMatrix::from_triplets(nc, fine.num_vertices(), &triplets);
    // Entries that are rounding noise of exact zeros are dropped so that
    // supports stay local.
    let tol = 1e-14 * matrix.max_abs();
    let mut cleaned = Vec::with_capacity(matrix.nnz());
    for z in 0..nc {
        for (a, v) in matrix.row(z) {
            if v.abs() > tol {
                cleaned.push((z, a, v));
            }
        }
    }
    matrix = CsrMatrix::from_triplets(nc, fine.num_vertices(), &cleaned);
    Ok(CoarseInterpolation { matrix })
}

/// Minimizer of `½ xᵀKx − rᵀx` over fine functions supported on a set of
/// dofs and lying in `ker I_H`.
#[derive(Debug)]
struct PatchSolver {
    dofs: Vec<usize>,
    solver: LinearSolver,
    cons: CsrMatrix,
    z: DenseMatrix,
    schur: Option<DenseCholesky>,
    /// The constraints leave only the zero function.
    trivial: bool,
}

impl PatchSolver {
    fn new(ctx: &LodContext, dofs: Vec<usize>, patch_id: usize) -> Result<Self> {
        let nf = ctx.k.nrows();
        let mut local = vec![usize::MAX; nf];
        for (i, &d) in dofs.iter().enumerate() {
            local[d] = i;
        }
        let kp = ctx.k.principal_submatrix(&dofs);
        let coords: Vec<Point> = dofs.iter().map(|&d| ctx.hier.fine().vertices()[d]).collect();
        let solver = LinearSolver::new(kp, Some(&coords))?;
        let mut rows: Vec<usize> = dofs.iter().flat_map(|&d| ctx.ih_t.row(d).map(|(z, _)| z)).collect();
        rows.sort_unstable();
        rows.dedup();
        let cons_rows: Vec<Vec<(usize, f64)>> = rows
            .iter()
            .map(|&z| {
                ctx.ih
                    .matrix()
                    .row(z)
                    .filter(|&(a, _)| local[a] != usize::MAX)
                    .map(|(a, v)| (local[a], v))
                    .collect()
            })
            .collect();
        let np = dofs.len();
        let mut zcols = Vec::with_capacity(rows.len());
        for row in &cons_rows {
            let mut rhs = vec![0.0; np];
            for &(a, v) in row {
                rhs[a] += v;
            }
            zcols.push(solver.solve(&rhs)?);
        }
        let nr = rows.len();
        let mut s = DenseMatrix::zeros(nr, nr);
        for (i, row) in cons_rows.iter().enumerate() {
            for j in 0..nr {
                s[(i, j)] = row.iter().map(|&(a, v)| v * zcols[j][a]).sum();
            }
        }
        let keep = independent_rows(&s);
        if keep.is_empty() && nr > 0 {
            return Err(Error::NumericFailure(format!("patch {patch_id}: constraint system is singular")));
        }
        let mut sk = DenseMatrix::zeros(keep.len(), keep.len());
        for (i, &a) in keep.iter().enumerate() {
            for (j, &b) in keep.iter().enumerate() {
                sk[(i, j)] = 0.5 * (s[(a, b)] + s[(b, a)]);
            }
        }
        let schur = if keep.is_empty() {
            None
        } else {
            Some(DenseCholesky::factor(&sk).map_err(|e| Error::NumericFailure(format!("patch {patch_id}: {e}")))?)
        };
        let mut triplets = Vec::new();
        for (i, &a) in keep.iter().enumerate() {
            for &(c, v) in &cons_rows[a] {
                triplets.push((i, c, v));
            }
        }
        let cons = CsrMatrix::from_triplets(keep.len(), np, &triplets);
        let kept_cols: Vec<Vec<f64>> = keep.iter().map(|&a| core::mem::take(&mut zcols[a])).collect();
        let z = DenseMatrix::from_columns(np, &kept_cols);
        let trivial = keep.len() == np;
        Ok(PatchSolver { dofs, solver, cons, z, schur, trivial })
    }

    fn solve_local(&self, r: &[f64]) -> Result<Vec<f64>> {
        if self.trivial {
            return Ok(vec![0.0; r.len()]);
        }
        let mut x = self.solver.solve(r)?;
        if let Some(schur) = &self.schur {
            let mu = schur.solve(&self.cons.matvec(&x));
            for (xi, d) in x.iter_mut().zip(self.z.matvec(&mu)) {
                *xi -= d;
            }
        }
        Ok(x)
    }

    /// Restricts a fine vector to the patch, solves, and scatters back.
    fn solve_fine(&self, r: &[f64]) -> Result<Vec<f64>> {
        let rl: Vec<f64> = self.dofs.iter().map(|&d| r[d]).collect();
        let xl = self.solve_local(&rl)?;
        let mut out = vec![0.0; r.len()];
        for (&d, v) in self.dofs.iter().zip(xl) {
            out[d] = v;
        }
        Ok(out)
    }
}

/// Greedy diagonal pivoting on a symmetric positive semidefinite matrix;
/// returns the (sorted) indices of a well conditioned principal block.
fn independent_rows(s: &DenseMatrix) -> Vec<usize> {
    let n = s.nrows();
    if n == 0 {
        return Vec::new();
    }
    let max_diag = (0..n).map(|i| s[(i, i)]).fold(0.0, f64::max);
    let tol = 1e-10 * max_diag;
    let mut chosen: Vec<usize> = Vec::new();
    // Columns of the partial Cholesky factor, one per chosen pivot.
    let mut l: Vec<Vec<f64>> = Vec::new();
    let mut d: Vec<f64> = (0..n).map(|i| s[(i, i)]).collect();
    loop {
        let (best, &val) = match d
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        {
            Some(x) => x,
            None => break,
        };
        if !(val > tol) {
            break;
        }
        let piv = val.sqrt();
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let mut v = s[(i, best)];
                for c in &l {
                    v -= c[i] * c[best];
                }
                v / piv
            })
            .collect();
        for i in 0..n {
            d[i] -= col[i] * col[i];
        }
        chosen.push(best);
        l.push(col);
    }
    chosen.sort_unstable();
    chosen
}

/// Shared data for building correctors on one hierarchy and coefficient.
#[derive(Debug)]
pub struct LodContext<'a> {
    hier: &'a MeshHierarchy,
    k: CsrMatrix,
    ih: CoarseInterpolation,
    ih_t: CsrMatrix,
    prolong: CsrMatrix,
    global: core::cell::OnceCell<PatchSolver>,
}

/// Patch radius `⌈2 ln(1/H)⌉`, at least one layer.
pub fn default_layers(coarse_h: f64) -> usize {
    ((2.0 * (1.0 / coarse_h).ln()).ceil().max(1.0)) as usize
}

impl<'a> LodContext<'a> {
    pub fn new(hier: &'a MeshHierarchy, coeff: &CoefficientField) -> Result<Self> {
        let k = assemble_a(&P1Space::new(hier.fine()), coeff)?;
        Self::with_operator(hier, k)
    }

    pub fn with_operator(hier: &'a MeshHierarchy, k: CsrMatrix) -> Result<Self> {
        if k.nrows() != hier.fine().num_vertices() {
            return Err(Error::IncompatibleSpace("operator does not match the fine mesh".into()));
        }
        let ih = build_ih(hier)?;
        let ih_t = ih.matrix().transpose();
        let prolong = prolongation(hier)?;
        Ok(LodContext { hier, k, ih, ih_t, prolong, global: core::cell::OnceCell::new() })
    }

    pub fn hierarchy(&self) -> &'a MeshHierarchy {
        self.hier
    }

    pub fn fine_operator(&self) -> &CsrMatrix {
        &self.k
    }

    pub fn interpolation(&self) -> &CoarseInterpolation {
        &self.ih
    }

    pub fn prolongation(&self) -> &CsrMatrix {
        &self.prolong
    }

    fn global_solver(&self) -> Result<&PatchSolver> {
        if let Some(s) = self.global.get() {
            return Ok(s);
        }
        let s = PatchSolver::new(self, (0..self.k.nrows()).collect(), usize::MAX)?;
        Ok(self.global.get_or_init(|| s))
    }

    /// Fine dofs all of whose triangles lie in the given coarse patch.
    fn patch_dofs(&self, patch: &[usize]) -> Vec<usize> {
        let fine = self.hier.fine();
        let mut inside = vec![false; self.hier.coarse().num_triangles()];
        for &t in patch {
            inside[t] = true;
        }
        (0..fine.num_vertices())
            .filter(|&v| fine.vertex_triangles(v).iter().all(|&t| inside[self.hier.parent()[t]]))
            .collect()
    }

    fn patch_solver(&self, patch: &[usize], id: usize) -> Result<PatchSolver> {
        PatchSolver::new(self, self.patch_dofs(patch), id)
    }

    /// Corrector of coarse hat function `z`: `c ∈ W_h` (on the `layers`
    /// vertex patch of `z`, or globally for `None`) with
    /// `a(c, w) = a(λ_z, w)` for all `w` in the same space.
    pub fn corrector(&self, z: usize, layers: Option<usize>) -> Result<Vec<f64>> {
        let nc = self.hier.coarse().num_vertices();
        if z >= nc {
            return Err(Error::invalid(format!("coarse dof {z} out of range ({nc})")));
        }
        let mut e = vec![0.0; nc];
        e[z] = 1.0;
        let rhs = self.k.matvec(&self.prolong.matvec(&e));
        match layers {
            None => self.global_solver()?.solve_fine(&rhs),
            Some(l) => {
                let patch = self.hier.coarse().vertex_patch(z, l.max(1))?;
                self.patch_solver(&patch, z)?.solve_fine(&rhs)
            }
        }
    }

    pub fn ms_space(&self, layers: Option<usize>) -> Result<MultiscaleSpace<'a>> {
        let nc = self.hier.coarse().num_vertices();
        let mut columns = Vec::with_capacity(nc);
        for z in 0..nc {
            let c = self.corrector(z, layers)?;
            let mut e = vec![0.0; nc];
            e[z] = 1.0;
            let mut phi = self.prolong.matvec(&e);
            for (p, ci) in phi.iter_mut().zip(&c) {
                *p -= ci;
            }
            columns.push(phi);
        }
        MultiscaleSpace::from_basis(self.hier, self.k.clone(), &columns, layers)
    }

    /// Columns `b_e ∈ W_h` with `a(b_e, w) = −∫_e w ds`, each solved on the
    /// `layers` patch of the coarse triangle holding segment `e`.
    pub fn boundary_corrector(&self, bmesh: &BoundaryMesh, layers: Option<usize>) -> Result<BoundaryCorrector> {
        let fine = self.hier.fine();
        let coupling = assemble_boundary_coupling(&P1Space::new(fine), bmesh)?;
        let coupling_t = coupling.transpose();
        let nf = fine.num_vertices();
        let mut cache: BTreeMap<usize, PatchSolver> = BTreeMap::new();
        let mut columns = Vec::with_capacity(bmesh.len());
        for (e, s) in bmesh.segments().iter().enumerate() {
            let mut load = vec![0.0; nf];
            for (i, v) in coupling_t.row(e) {
                load[i] = v;
            }
            let x = match layers {
                None => self.global_solver()?.solve_fine(&load)?,
                Some(l) => {
                    let ct = self.boundary_edge_parent(s.parent_edge)?;
                    if !cache.contains_key(&ct) {
                        let patch = self.hier.coarse().patch(ct, l)?;
                        cache.insert(ct, self.patch_solver(&patch, ct)?);
                    }
                    cache[&ct].solve_fine(&load)?
                }
            };
            columns.push(x.into_iter().map(|v| -v).collect::<Vec<f64>>());
        }
        Ok(BoundaryCorrector { columns: DenseMatrix::from_columns(nf, &columns), layers })
    }

    fn boundary_edge_parent(&self, edge: usize) -> Result<usize> {
        let fine = self.hier.fine();
        let [a, b] = fine.boundary_edges()[edge].vertices;
        fine.vertex_triangles(a)
            .iter()
            .find(|&&t| fine.triangles()[t].contains(&b))
            .map(|&t| self.hier.parent()[t])
            .ok_or_else(|| Error::IncompatibleMesh(format!("boundary edge {edge} has no triangle")))
    }
}

/// `V^ms` with a dense basis of fine P1 vectors and its Galerkin matrix.
#[derive(Debug)]
pub struct MultiscaleSpace<'a> {
    hier: &'a MeshHierarchy,
    fine_k: CsrMatrix,
    basis: DenseMatrix,
    chol: DenseCholesky,
    layers: Option<usize>,
}

impl<'a> MultiscaleSpace<'a> {
    fn from_basis(hier: &'a MeshHierarchy, fine_k: CsrMatrix, columns: &[Vec<f64>], layers: Option<usize>) -> Result<Self> {
        let nf = hier.fine().num_vertices();
        let n = columns.len();
        let kcols: Vec<Vec<f64>> = columns.iter().map(|c| fine_k.matvec(c)).collect();
        let mut kms = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let a = crate::linalg::dot(&columns[i], &kcols[j]);
                let b = crate::linalg::dot(&columns[j], &kcols[i]);
                kms[(i, j)] = 0.5 * (a + b);
                kms[(j, i)] = 0.5 * (a + b);
            }
        }
        let chol = DenseCholesky::factor(&kms)
            .map_err(|e| Error::NumericFailure(format!("multiscale Galerkin matrix: {e}")))?;
        Ok(MultiscaleSpace { hier, fine_k, basis: DenseMatrix::from_columns(nf, columns), chol, layers })
    }

    pub fn layers(&self) -> Option<usize> {
        self.layers
    }

    pub fn hierarchy(&self) -> &'a MeshHierarchy {
        self.hier
    }

    /// Fine dofs × coarse dofs.
    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }
}

impl GalerkinSpace for MultiscaleSpace<'_> {
    fn fine_mesh(&self) -> &crate::mesh::Mesh {
        self.hier.fine()
    }

    fn fine_operator(&self) -> &CsrMatrix {
        &self.fine_k
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn prolong(&self, coeffs: &[f64]) -> Vec<f64> {
        self.basis.matvec(coeffs)
    }

    fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.basis.transpose_matvec(fine)
    }

    fn solve_reduced(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.chol.solve(rhs))
    }
}

/// The operator `q ↦ Σ_e q_e b_e` with one fine column per boundary
/// element.
#[derive(Clone, Debug)]
pub struct BoundaryCorrector {
    columns: DenseMatrix,
    layers: Option<usize>,
}

impl BoundaryCorrector {
    /// Number of boundary elements.
    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn fine_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn layers(&self) -> Option<usize> {
        self.layers
    }

    pub fn column(&self, e: usize) -> Vec<f64> {
        self.columns.column(e)
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        self.columns.matvec(q)
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        self.columns.transpose_matvec(v)
    }
}

pub fn solve_corrector(
    hier: &MeshHierarchy,
    coeff: &CoefficientField,
    coarse_dof: usize,
    layers: Option<usize>,
) -> Result<Vec<f64>> {
    LodContext::new(hier, coeff)?.corrector(coarse_dof, layers)
}

pub fn build_ms_space<'a>(hier: &'a MeshHierarchy, coeff: &CoefficientField, layers: Option<usize>) -> Result<MultiscaleSpace<'a>> {
    LodContext::new(hier, coeff)?.ms_space(layers)
}

pub fn build_b_star(
    hier: &MeshHierarchy,
    coeff: &CoefficientField,
    bmesh: &BoundaryMesh,
    layers: Option<usize>,
) -> Result<BoundaryCorrector> {
    LodContext::new(hier, coeff)?.boundary_corrector(bmesh, layers)
}

/// Errors `v_h − (v^ms − B G)` between the fine Galerkin solution and the
/// corrected multiscale solution of `a(v, z) = (F, z) + (G, z)_Γ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaErrors {
    pub energy: f64,
    pub l2: f64,
    /// `‖F‖_{L2(Ω)} + ‖G‖_{L2(Γ)}` with `G` after projection.
    pub data_norm: f64,
}

/// Runs the comparison with `G` projected onto piecewise constants on
/// `bmesh`; `ms` and `b_star` must come from `ctx`.
pub fn lemma_check_with(
    ctx: &LodContext,
    ms: &MultiscaleSpace,
    b_star: &BoundaryCorrector,
    bmesh: &BoundaryMesh,
    f: &dyn Fn(Point) -> f64,
    g: &dyn Fn(Point) -> f64,
) -> Result<LemmaErrors> {
    let fine = ctx.hierarchy().fine();
    let p1 = P1Space::new(fine);
    let g_rho = q_rho_project(bmesh, g);
    let coupling = assemble_boundary_coupling(&p1, bmesh)?;
    let mut load = assemble_domain_load(&p1, f);
    for (l, c) in load.iter_mut().zip(coupling.matvec(&g_rho)) {
        *l += c;
    }
    let fine_solver = LinearSolver::new(ctx.fine_operator().clone(), Some(fine.vertices()))?;
    let vh = fine_solver.solve(&load)?;
    let vms = ms.galerkin_solve(&load)?;
    let bg = b_star.apply(&g_rho);
    let e: Vec<f64> = (0..vh.len()).map(|i| vh[i] - (vms[i] - bg[i])).collect();
    let mass = assemble_mass(&p1);
    let f_norm = crate::fem::domain_integral_sq(fine, f).sqrt();
    let g_norm = crate::fem::control_l2_norm(&bmesh.lengths(), &g_rho);
    Ok(LemmaErrors {
        energy: ctx.fine_operator().quad_form(&e).max(0.0).sqrt(),
        l2: mass.quad_form(&e).max(0.0).sqrt(),
        data_norm: f_norm + g_norm,
    })
}

/// Same comparison on the boundary mesh induced by the fine mesh.
pub fn lemma_hm2014_check(
    hier: &MeshHierarchy,
    coeff: &CoefficientField,
    f: &dyn Fn(Point) -> f64,
    g: &dyn Fn(Point) -> f64,
    layers: Option<usize>,
) -> Result<LemmaErrors> {
    let ctx = LodContext::new(hier, coeff)?;
    let bmesh = BoundaryMesh::induced(hier.fine(), 1)?;
    let ms = ctx.ms_space(layers)?;
    let b = ctx.boundary_corrector(&bmesh, layers)?;
    lemma_check_with(&ctx, &ms, &b, &bmesh, f, g)
}
