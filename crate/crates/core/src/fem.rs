//! P1 finite elements: coefficients, assembly of `a(·,·)`, loads, the
//! boundary coupling `∫_Γ u z ds`, the `L2(Γ)` projection onto piecewise
//! constants, state/adjoint solves, norms and discrete estimates of the trace
//! and Poincaré–Friedrichs constants.
//!
//! Domain integrals use the interior three-point rule (barycentric
//! `(2/3, 1/6, 1/6)` and permutations), exact for quadratics, so mass
//! matrices and elementwise-constant coefficients are integrated exactly.
//! Boundary integrals use two-point Gauss rules per straight segment.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, CsrMatrix, LinearSolver};
use crate::mesh::{BoundaryMesh, Mesh, TriangleLocator};
use crate::{Error, Point, Result};

/// Barycentric coordinates of the interior three-point rule; all weights
/// are `|T|/3`.
pub const TRI_QUAD: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Two-point Gauss nodes on `[0, 1]`; weights are `1/2` each.
pub const GAUSS2: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Symmetric 2×2 matrix `[[a11, a12], [a12, a22]]`.
pub type Sym2 = [[f64; 2]; 2];

pub type MatrixField = Arc<dyn Fn(Point) -> Sym2 + Send + Sync>;

pub fn constant(c: f64) -> ScalarField {
    Arc::new(move |_| c)
}

pub fn scalar_field<F: Fn(Point) -> f64 + Send + Sync + 'static>(f: F) -> ScalarField {
    Arc::new(f)
}

fn quad_point(pts: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0],
        l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1],
    ]
}

/// Gradients of the barycentric coordinates of a triangle and its area.
pub fn p1_gradients(pts: &[Point; 3]) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = *pts;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * det;
    let g = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    (g, area)
}

/// Diffusion `A(x)` and reaction `κ(x)` with ellipticity bounds `α ≤ β`.
#[derive(Clone)]
pub struct CoefficientField {
    diffusion: MatrixField,
    kappa: ScalarField,
    alpha: f64,
    beta: f64,
}

impl core::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn new(diffusion: MatrixField, kappa: ScalarField, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= beta) {
            return Err(Error::invalid(format!("need 0 < alpha <= beta, got {alpha}, {beta}")));
        }
        Ok(CoefficientField { diffusion, kappa, alpha, beta })
    }

    /// `A = a(x) I` with `a` sampled at quadrature points.
    pub fn scalar(a: ScalarField, kappa: ScalarField, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(
            Arc::new(move |p| {
                let v = a(p);
                [[v, 0.0], [0.0, v]]
            }),
            kappa,
            alpha,
            beta,
        )
    }

    /// `A = I`, `κ = 1`.
    pub fn identity() -> Self {
        Self::scalar(constant(1.0), constant(1.0), 1.0, 1.0).unwrap()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kappa(&self, p: Point) -> f64 {
        (self.kappa)(p)
    }

    pub fn diffusion(&self, p: Point) -> Sym2 {
        (self.diffusion)(p)
    }

    /// Evaluates `A(p)` and checks symmetry and `α|ξ|² ≤ ξᵀAξ ≤ β|ξ|²`.
    pub fn checked_sample(&self, p: Point) -> Result<(Sym2, f64)> {
        let a = self.diffusion(p);
        let k = self.kappa(p);
        let bad = |reason: alloc::string::String| Error::InvalidCoefficient { x: p[0], y: p[1], reason };
        if (a[0][1] - a[1][0]).abs() > 1e-14 * (a[0][0].abs() + a[1][1].abs()) {
            return Err(bad("A is not symmetric".into()));
        }
        let tr = 0.5 * (a[0][0] + a[1][1]);
        let disc = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[0][1]).sqrt();
        let (lmin, lmax) = (tr - disc, tr + disc);
        let slack = 1e-12 * self.beta;
        if !(lmin >= self.alpha - slack && lmax <= self.beta + slack) {
            return Err(bad(format!(
                "eigenvalues [{lmin:e}, {lmax:e}] outside [{:e}, {:e}]",
                self.alpha, self.beta
            )));
        }
        if !(k >= 0.0) || !k.is_finite() {
            return Err(bad(format!("kappa = {k} is negative or not finite")));
        }
        Ok((a, k))
    }
}

/// Piecewise constant field on the square cells of an `n × n` grid of the
/// unit square. Every triangle of `Mesh::unit_square(m)` and of its
/// refinements lies in one cell when `n` divides `m`.
#[derive(Clone, Debug)]
pub struct CellField {
    n: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::invalid(format!("cell field needs n² = {} values", n * n)));
        }
        Ok(CellField { n, values })
    }

    /// Values `exp(U(ln lo, ln hi))`, one per cell, from a seeded ChaCha8
    /// stream.
    pub fn log_uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (lo.ln(), hi.ln());
        let values = (0..n * n).map(|_| (a + (b - a) * rng.gen::<f64>()).exp().clamp(lo, hi)).collect();
        CellField { n, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    /// Row-major index of the square cell containing `p`.
    pub fn cell_of(&self, p: Point) -> usize {
        let n = self.n as f64;
        let i = ((p[0] * n).floor().max(0.0) as usize).min(self.n - 1);
        let j = ((p[1] * n).floor().max(0.0) as usize).min(self.n - 1);
        j * self.n + i
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.values[self.cell_of(p)]
    }
}

/// Standard P1 space on a mesh; one degree of freedom per vertex.
#[derive(Clone, Copy, Debug)]
pub struct P1Space<'a> {
    mesh: &'a Mesh,
}

impl<'a> P1Space<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        P1Space { mesh }
    }

    pub fn mesh(&self) -> &'a Mesh {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// Sparsity pattern shared by all matrices on this space.
    pub fn pattern(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.dim()];
        for tri in self.mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    rows[a].push(b);
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        CsrMatrix::from_pattern(self.dim(), &rows)
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
        self.mesh.vertices().iter().map(|&p| f(p)).collect()
    }
}

/// Element matrix of `a(·,·)` on triangle `pts`.
pub fn element_matrix(pts: &[Point; 3], coeff: &CoefficientField) -> Result<[[f64; 3]; 3]> {
    let (g, area) = p1_gradients(pts);
    let mut m = [[0.0; 3]; 3];
    for l in &TRI_QUAD {
        let x = quad_point(pts, l);
        let (a, k) = coeff.checked_sample(x)?;
        let w = area / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                let agj = [a[0][0] * g[j][0] + a[0][1] * g[j][1], a[1][0] * g[j][0] + a[1][1] * g[j][1]];
                m[i][j] += w * (agj[0] * g[i][0] + agj[1] * g[i][1] + k * l[i] * l[j]);
            }
        }
    }
    Ok(m)
}

/// Matrix of `a(φ_j, φ_i) = ∫ A∇φ_j·∇φ_i + κ φ_j φ_i`.
pub fn assemble_a(space: &P1Space, coeff: &CoefficientField) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    let mut m = space.pattern();
    let mut kappa_l1 = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let em = element_matrix(&pts, coeff)?;
        kappa_l1 += em.iter().flatten().sum::<f64>();
        for i in 0..3 {
            for j in 0..3 {
                m.add_to(tri[i], tri[j], em[i][j]);
            }
        }
    }
    // Gradient terms vanish on 1ᵀ M 1, leaving ∫ κ.
    if !(kappa_l1 > 0.0) {
        return Err(Error::InvalidCoefficient {
            x: f64::NAN,
            y: f64::NAN,
            reason: "kappa vanishes identically".into(),
        });
    }
    Ok(m)
}

/// Mass matrix `∫ φ_j φ_i`.
pub fn assemble_mass(space: &P1Space) -> CsrMatrix {
    let mesh = space.mesh();
    let mut m = space.pattern();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let w = mesh.area(t) / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                m.add_to(tri[i], tri[j], if i == j { 2.0 * w } else { w });
            }
        }
    }
    m
}

/// Gram matrix of the `H1(Ω)` inner product.
pub fn assemble_h1_gram(space: &P1Space) -> CsrMatrix {
    assemble_a(space, &CoefficientField::identity()).expect("identity coefficient is valid")
}

/// `∫_Ω f φ_i dx` by the interior three-point rule.
pub fn assemble_domain_load(space: &P1Space, f: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let mesh = space.mesh();
    let mut b = vec![0.0; space.dim()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(t);
        let w = mesh.area(t) / 3.0;
        for l in &TRI_QUAD {
            let fx = f(quad_point(&pts, l));
            for i in 0..3 {
                b[tri[i]] += w * fx * l[i];
            }
        }
    }
    b
}

/// `∫_Ω f² dx` by the same rule as the loads.
pub fn domain_integral_sq(mesh: &Mesh, f: &dyn Fn(Point) -> f64) -> f64 {
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        let pts = mesh.triangle_points(t);
        let w = mesh.area(t) / 3.0;
        for l in &TRI_QUAD {
            s += w * f(quad_point(&pts, l)).powi(2);
        }
    }
    s
}

/// Rectangular matrix `(i, e) ↦ ∫_e φ_i ds` mapping piecewise constant
/// boundary data to a load vector. Exact for P1 traces.
pub fn assemble_boundary_coupling(space: &P1Space, bmesh: &BoundaryMesh) -> Result<CsrMatrix> {
    let mesh = space.mesh();
    bmesh.check_compatible(mesh)?;
    let mut triplets = Vec::with_capacity(2 * bmesh.len());
    for (e, s) in bmesh.segments().iter().enumerate() {
        let [a, b] = mesh.boundary_edges()[s.parent_edge].vertices;
        let tm = 0.5 * (s.t0 + s.t1);
        triplets.push((a, e, s.length * (1.0 - tm)));
        triplets.push((b, e, s.length * tm));
    }
    Ok(CsrMatrix::from_triplets(space.dim(), bmesh.len(), &triplets))
}

/// `∫_Γ g φ_i ds` with two-point Gauss on every boundary edge.
pub fn assemble_boundary_load(space: &P1Space, g: &dyn Fn(Point) -> f64) -> Vec<f64> {
    let mesh = space.mesh();
    let mut b = vec![0.0; space.dim()];
    for (e, be) in mesh.boundary_edges().iter().enumerate() {
        let [a, c] = be.vertices;
        let (pa, pc) = (mesh.vertices()[a], mesh.vertices()[c]);
        let len = mesh.boundary_edge_length(e);
        for &s in &GAUSS2 {
            let x = [pa[0] + s * (pc[0] - pa[0]), pa[1] + s * (pc[1] - pa[1])];
            let gx = g(x);
            b[a] += 0.5 * len * gx * (1.0 - s);
            b[c] += 0.5 * len * gx * s;
        }
    }
    b
}

/// Boundary mass matrix `∫_Γ φ_j φ_i ds`.
pub fn assemble_boundary_mass(space: &P1Space) -> CsrMatrix {
    let mesh = space.mesh();
    let mut triplets = Vec::with_capacity(4 * mesh.boundary_edges().len());
    for (e, be) in mesh.boundary_edges().iter().enumerate() {
        let [a, b] = be.vertices;
        let len = mesh.boundary_edge_length(e);
        triplets.extend_from_slice(&[
            (a, a, len / 3.0),
            (b, b, len / 3.0),
            (a, b, len / 6.0),
            (b, a, len / 6.0),
        ]);
    }
    CsrMatrix::from_triplets(space.dim(), space.dim(), &triplets)
}

/// `L2(Γ)` projection onto piecewise constants: the two-point Gauss mean of
/// `g` over every segment.
pub fn q_rho_project(bmesh: &BoundaryMesh, g: &dyn Fn(Point) -> f64) -> Vec<f64> {
    bmesh
        .segments()
        .iter()
        .map(|s| 0.5 * (g(s.point_at(GAUSS2[0])) + g(s.point_at(GAUSS2[1]))))
        .collect()
}

/// `‖w‖_{L2(Γ)}` for a piecewise constant `w`.
pub fn control_l2_norm(lengths: &[f64], w: &[f64]) -> f64 {
    lengths.iter().zip(w).map(|(l, v)| l * v * v).sum::<f64>().sqrt()
}

/// `y†` with `K y† = f_load + N u`.
pub fn solve_state(op: &LinearSolver, coupling: &CsrMatrix, f_load: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let mut rhs = coupling.matvec(u);
    for (r, f) in rhs.iter_mut().zip(f_load) {
        *r += f;
    }
    op.solve(&rhs)
}

/// `p` with `K p = M y − ∫ y_d φ_i`.
pub fn solve_adjoint(op: &LinearSolver, mass: &CsrMatrix, y: &[f64], yd_load: &[f64]) -> Result<Vec<f64>> {
    let mut rhs = mass.matvec(y);
    for (r, d) in rhs.iter_mut().zip(yd_load) {
        *r -= d;
    }
    op.solve(&rhs)
}

pub fn l2_norm(mass: &CsrMatrix, v: &[f64]) -> f64 {
    mass.quad_form(v).max(0.0).sqrt()
}

/// `‖v‖_a = sqrt(vᵀ K v)`.
pub fn energy_norm(op: &CsrMatrix, v: &[f64]) -> f64 {
    op.quad_form(v).max(0.0).sqrt()
}

/// `|v|_{H1}` from the stiffness matrix of the Laplacian.
pub fn h1_seminorm(mesh: &Mesh, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = p1_gradients(&mesh.triangle_points(t));
        let mut grad = [0.0; 2];
        for i in 0..3 {
            grad[0] += v[tri[i]] * g[i][0];
            grad[1] += v[tri[i]] * g[i][1];
        }
        s += area * (grad[0] * grad[0] + grad[1] * grad[1]);
    }
    s.sqrt()
}

pub fn h1_norm(mesh: &Mesh, mass: &CsrMatrix, v: &[f64]) -> f64 {
    (mass.quad_form(v) + h1_seminorm(mesh, v).powi(2)).sqrt()
}

/// `‖v‖_{L2(Γ)}` of the P1 trace, exact per edge.
pub fn trace_l2_norm(mesh: &Mesh, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (e, be) in mesh.boundary_edges().iter().enumerate() {
        let (a, b) = (v[be.vertices[0]], v[be.vertices[1]]);
        s += mesh.boundary_edge_length(e) / 3.0 * (a * a + a * b + b * b);
    }
    s.sqrt()
}

/// Evaluates a P1 function at an arbitrary point of the mesh.
pub fn eval_p1(locator: &TriangleLocator, mesh: &Mesh, values: &[f64], p: Point) -> Option<f64> {
    locator.locate(p).map(|(t, l)| {
        let tri = mesh.triangles()[t];
        l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]]
    })
}

/// Discrete estimates of the trace and Poincaré–Friedrichs constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantEstimates {
    /// `sup ‖v‖_{L2(Γ)} / ‖v‖_{H1}` over the discrete space.
    pub c_tr: f64,
    /// `min(α, 1) · sup ‖v‖²_{H1} / a(v, v)`, so that
    /// `‖v‖²_{H1} ≤ c_pf · max(α⁻¹, 1) · a(v, v)` on the discrete space.
    pub c_pf: f64,
}

const POWER_ITERATIONS: usize = 300;

/// Largest eigenvalue of `A x = λ B x` by power iteration on `B⁻¹A`; returns
/// the largest Rayleigh quotient seen, which is a lower bound that
/// increases towards `λ_max`.
fn generalized_lambda_max(a: &CsrMatrix, b: &LinearSolver, start: &[f64]) -> Result<f64> {
    let bm = b.matrix();
    let rq = |x: &[f64]| a.quad_form(x) / bm.quad_form(x);
    let mut best = rq(start);
    let n = start.len();
    let mut x: Vec<f64> = (0..n).map(|i| start[i] + 1e-3 * ((i as f64) * 0.618_033_988_7).sin()).collect();
    for _ in 0..POWER_ITERATIONS {
        let ax = a.matvec(&x);
        let mut y = b.solve(&ax)?;
        let norm = dot(&y, &bm.matvec(&y)).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NumericFailure("power iteration collapsed".into()));
        }
        y.iter_mut().for_each(|v| *v /= norm);
        best = best.max(rq(&y));
        x = y;
    }
    Ok(best)
}

pub fn estimate_constants(space: &P1Space, coeff: &CoefficientField) -> Result<ConstantEstimates> {
    let gram = assemble_h1_gram(space);
    let stiff = assemble_a(space, coeff)?;
    let bmass = assemble_boundary_mass(space);
    let coords = Some(space.mesh().vertices());
    let gram_solver = LinearSolver::new(gram.clone(), coords)?;
    let a_solver = LinearSolver::new(stiff, coords)?;
    let ones = vec![1.0; space.dim()];
    let c_tr = generalized_lambda_max(&bmass, &gram_solver, &ones)?.sqrt();
    let c_pf = generalized_lambda_max(&gram, &a_solver, &ones)? * coeff.alpha().min(1.0);
    Ok(ConstantEstimates { c_tr, c_pf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryMesh;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn reference_triangle_stiffness() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let coeff = CoefficientField::scalar(constant(1.0), constant(0.0), 1.0, 1.0).unwrap();
        let m = element_matrix(&pts, &coeff).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(m[i][j], expect[i][j], 1e-15));
            }
        }
    }

    #[test]
    fn linear_in_diffusion() {
        let mesh = Mesh::unit_square(3).unwrap();
        let space = P1Space::new(&mesh);
        let c1 = CoefficientField::scalar(constant(1.0), constant(0.0), 1.0, 1.0).unwrap();
        let c2 = CoefficientField::scalar(constant(2.0), constant(0.0), 2.0, 2.0).unwrap();
        // κ = 0 is rejected by assembly; compare element matrices instead.
        for t in 0..mesh.num_triangles() {
            let pts = mesh.triangle_points(t);
            let (a, b) = (element_matrix(&pts, &c1).unwrap(), element_matrix(&pts, &c2).unwrap());
            for i in 0..3 {
                for j in 0..3 {
                    assert!(close(b[i][j], 2.0 * a[i][j], 1e-15));
                }
            }
        }
        assert!(matches!(assemble_a(&space, &c1), Err(Error::InvalidCoefficient { .. })));
    }

    #[test]
    fn constant_quadratic_form_is_area() {
        let mesh = Mesh::unit_square(4).unwrap();
        let space = P1Space::new(&mesh);
        let coeff = CoefficientField::new(
            Arc::new(|p: Point| [[2.0 + p[0], 0.3], [0.3, 1.5]]),
            constant(1.0),
            0.5,
            4.0,
        )
        .unwrap();
        let k = assemble_a(&space, &coeff).unwrap();
        let ones = vec![1.0; space.dim()];
        assert!(close(k.quad_form(&ones), 1.0, 1e-13));
        assert!(k.asymmetry() <= 1e-14 * k.max_abs());
    }

    #[test]
    fn non_spd_coefficient_rejected() {
        let mesh = Mesh::unit_square(2).unwrap();
        let coeff = CoefficientField::new(Arc::new(|_| [[1.0, 2.0], [2.0, 1.0]]), constant(1.0), 0.1, 10.0).unwrap();
        assert!(matches!(
            assemble_a(&P1Space::new(&mesh), &coeff),
            Err(Error::InvalidCoefficient { .. })
        ));
    }

    #[test]
    fn domain_load_partition_of_unity() {
        let mesh = Mesh::unit_square(5).unwrap();
        let space = P1Space::new(&mesh);
        let b1 = assemble_domain_load(&space, &|_| 1.0);
        assert!(close(b1.iter().sum(), 1.0, 1e-14));
        assert!(assemble_domain_load(&space, &|_| 0.0).iter().all(|&v| v == 0.0));
        let b3 = assemble_domain_load(&space, &|_| 3.0);
        for (a, b) in b1.iter().zip(&b3) {
            assert!(close(*b, 3.0 * a, 1e-15));
        }
    }

    #[test]
    fn boundary_coupling_entries() {
        let mesh = Mesh::unit_square(2).unwrap();
        let space = P1Space::new(&mesh);
        let bm = BoundaryMesh::induced(&mesh, 1).unwrap();
        let n = assemble_boundary_coupling(&space, &bm).unwrap();
        let load = n.matvec(&vec![1.0; bm.len()]);
        assert!(close(load.iter().sum(), 4.0, 1e-14));
        let be = mesh.boundary_edges()[0];
        assert!(close(n.get(be.vertices[0], 0), 0.25, 1e-15));
        assert!(close(n.get(be.vertices[1], 0), 0.25, 1e-15));
        let far = mesh.boundary_edges()[2].vertices[1];
        assert_eq!(n.get(far, 0), 0.0);
        let bm3 = BoundaryMesh::induced(&mesh, 3).unwrap();
        let n3 = assemble_boundary_coupling(&space, &bm3).unwrap();
        let col_sums = n3.transpose_matvec(&vec![1.0; space.dim()]);
        for (c, s) in col_sums.iter().zip(bm3.segments()) {
            assert!(close(*c, s.length, 1e-15));
        }
        let other = Mesh::unit_square(3).unwrap();
        assert!(matches!(
            assemble_boundary_coupling(&P1Space::new(&other), &bm),
            Err(Error::IncompatibleMesh(_))
        ));
    }

    #[test]
    fn q_rho_examples() {
        let mesh = Mesh::unit_square(1).unwrap();
        let bm = BoundaryMesh::induced(&mesh, 1).unwrap();
        assert!(q_rho_project(&bm, &|_| 2.5).iter().all(|&v| close(v, 2.5, 1e-15)));
        assert!(close(q_rho_project(&bm, &|p| p[0])[0], 0.5, 1e-15));
        let bm = BoundaryMesh::induced(&mesh, 3).unwrap();
        let q = q_rho_project(&bm, &|p| (3.0 * p[0]).sin() + p[1] * p[1]);
        let lookup = |p: Point| {
            let e = bm.segments().iter().position(|s| {
                let d = crate::mesh::distance(s.start, p) + crate::mesh::distance(p, s.end);
                (d - s.length).abs() < 1e-12
            });
            q[e.unwrap()]
        };
        let qq = q_rho_project(&bm, &lookup);
        for (a, b) in q.iter().zip(&qq) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn constant_state_and_adjoint() {
        let mesh = Mesh::unit_square(6).unwrap();
        let space = P1Space::new(&mesh);
        let k = assemble_a(&space, &CoefficientField::identity()).unwrap();
        let solver = LinearSolver::new(k, Some(mesh.vertices())).unwrap();
        let bm = BoundaryMesh::induced(&mesh, 1).unwrap();
        let n = assemble_boundary_coupling(&space, &bm).unwrap();
        let f = assemble_domain_load(&space, &|_| 1.0);
        let y = solve_state(&solver, &n, &f, &vec![0.0; bm.len()]).unwrap();
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let zero = solve_state(&solver, &n, &vec![0.0; space.dim()], &vec![0.0; bm.len()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let mass = assemble_mass(&space);
        let yd0 = assemble_domain_load(&space, &|_| 0.0);
        let p = solve_adjoint(&solver, &mass, &y, &yd0).unwrap();
        assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let yd = assemble_domain_load(&space, &|_| 1.0);
        let p0 = solve_adjoint(&solver, &mass, &y, &yd).unwrap();
        assert!(p0.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn norms_of_constants() {
        let mesh = Mesh::unit_square(4).unwrap();
        let space = P1Space::new(&mesh);
        let k = assemble_a(&space, &CoefficientField::identity()).unwrap();
        let m = assemble_mass(&space);
        let one = vec![1.0; space.dim()];
        assert!(close(energy_norm(&k, &one), 1.0, 1e-14));
        assert!(close(trace_l2_norm(&mesh, &one), 2.0, 1e-14));
        let v: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * p[1] + p[0]).collect();
        let h1 = h1_norm(&mesh, &m, &v);
        assert!(close(h1 * h1, l2_norm(&m, &v).powi(2) + h1_seminorm(&mesh, &v).powi(2), 1e-12));
        let bmass = assemble_boundary_mass(&space);
        assert!(close(bmass.quad_form(&v).sqrt(), trace_l2_norm(&mesh, &v), 1e-13));
    }

    #[test]
    fn cell_field_lookup() {
        let f = CellField::new(2, (0..4).map(|i| i as f64).collect()).unwrap();
        let mesh = Mesh::unit_square(2).unwrap();
        for t in 0..mesh.num_triangles() {
            let pts = mesh.triangle_points(t);
            let c = quad_point(&pts, &[1.0 / 3.0; 3]);
            // Two triangles per cell, cells in row-major order.
            assert_eq!(f.eval(c), (t / 2) as f64);
            assert!(pts.iter().all(|&p| {
                let q = [c[0] + 0.999 * (p[0] - c[0]), c[1] + 0.999 * (p[1] - c[1])];
                f.eval(q) == f.eval(c)
            }));
        }
        assert!(CellField::new(2, vec![1.0; 8]).is_err());
        let r = CellField::log_uniform(8, 0.01, 1.0, 7);
        assert!(r.values().iter().all(|&v| (0.01..=1.0).contains(&v)));
        assert_eq!(r.values(), CellField::log_uniform(8, 0.01, 1.0, 7).values());
    }
}
