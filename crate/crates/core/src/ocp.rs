//! The discrete reduced control problem and its primal-dual active set
//! solver.
//!
//! For a state space `V_*` with prolongation `P` and Galerkin matrix `K_*`,
//! an optional boundary corrector `B` and a control space with weights `W`
//! (segment lengths, or quadrature weights for nodal controls) and coupling
//! `N` (`N_{ie} = ∫_Γ χ_e φ_i`), the state for a control `u` is
//!
//! ```text
//!   y(u) = P K_*⁻¹ Pᵀ (F + N u) − B u,
//! ```
//!
//! the adjoint is `p = P K_*⁻¹ Pᵀ (M y − b_d)` with `b_d = ∫ y_d φ_i`, and the
//! reduced gradient in `L2(Γ)` is `g = q + γu` with the projected adjoint
//!
//! ```text
//!   q = W⁻¹ (Nᵀ p − Bᵀ (M y − b_d)).
//! ```
//!
//! The second term is the derivative of `½‖y − y_d‖²` through `−B u`. With
//! `B = 0` and piecewise constant controls, `q = Q_ρ(trace p)`; with nodal
//! controls it is the trace of `p` at the quadrature nodes.
//!
//! The active set iteration classifies element `e` as lower-active when
//! `q_e + γ φ1_e > 0`, upper-active when `q_e + γ φ2_e < 0` and inactive
//! otherwise (ties are inactive), solves the stationarity equations on the
//! inactive set by conjugate gradients on the reduced Hessian, and accepts
//! the projection of the result onto the box. It stops once two successive
//! active sets agree and the KKT residual is below the tolerance.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;

use crate::fem::{
    assemble_boundary_coupling, assemble_domain_load, assemble_mass, domain_integral_sq, q_rho_project,
    CoefficientField, P1Space, ScalarField, GAUSS2,
};
use crate::linalg::{pcg, CsrMatrix};
use crate::mesh::{BoundaryMesh, Mesh};
use crate::multiscale::BoundaryCorrector;
use crate::space::{GalerkinSpace, StandardSpace};
use crate::{Error, Point, Result};

/// Problem data: coefficient, source `f`, target `y_d`, bounds `φ1 ≤ φ2` on
/// the boundary and the cost parameter `γ ∈ (0, 1]`.
#[derive(Clone)]
pub struct OcpData {
    pub coeff: CoefficientField,
    pub f: ScalarField,
    pub y_d: ScalarField,
    pub phi1: ScalarField,
    pub phi2: ScalarField,
    pub gamma: f64,
}

impl core::fmt::Debug for OcpData {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("OcpData")
            .field("coeff", &self.coeff)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl OcpData {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlKind {
    /// One value per boundary segment (`W_ρ`).
    Piecewise,
    /// Values at the two Gauss nodes of every boundary segment.
    Nodal,
}

/// Position of a control degree of freedom on the fine boundary: fine
/// boundary edge and parameter range along it (a single parameter for
/// nodal controls).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSite {
    pub edge: usize,
    pub t0: f64,
    pub t1: f64,
}

/// Discrete control space with its `L2(Γ)` weights, coupling to the fine P1
/// space and discrete bounds.
#[derive(Clone, Debug)]
pub struct ControlDiscretization {
    kind: ControlKind,
    weights: Vec<f64>,
    sites: Vec<ControlSite>,
    points: Vec<Point>,
    edge_ranges: Vec<Range<usize>>,
    coupling: CsrMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn check_bounds(bmesh: &BoundaryMesh, data: &OcpData) -> Result<()> {
    for (e, s) in bmesh.segments().iter().enumerate() {
        for &t in GAUSS2.iter().chain(&[0.0, 1.0]) {
            let x = s.point_at(t);
            let (a, b) = ((data.phi1)(x), (data.phi2)(x));
            if !(a <= b) {
                return Err(Error::invalid(format!(
                    "phi1 > phi2 at ({:.6}, {:.6}) on boundary element {e}",
                    x[0], x[1]
                )));
            }
        }
    }
    Ok(())
}

impl ControlDiscretization {
    /// Piecewise constants on `bmesh` with bounds `Q_ρ φ1`, `Q_ρ φ2`.
    pub fn piecewise(mesh: &Mesh, bmesh: &BoundaryMesh, data: &OcpData) -> Result<Self> {
        check_bounds(bmesh, data)?;
        let coupling = assemble_boundary_coupling(&P1Space::new(mesh), bmesh)?;
        let sites = bmesh
            .segments()
            .iter()
            .map(|s| ControlSite { edge: s.parent_edge, t0: s.t0, t1: s.t1 })
            .collect();
        let edge_ranges = (0..mesh.boundary_edges().len()).map(|e| bmesh.edge_segments(e)).collect();
        Ok(ControlDiscretization {
            kind: ControlKind::Piecewise,
            weights: bmesh.lengths(),
            sites,
            points: bmesh.segments().iter().map(|s| s.midpoint()).collect(),
            edge_ranges,
            coupling,
            lower: q_rho_project(bmesh, &*data.phi1),
            upper: q_rho_project(bmesh, &*data.phi2),
        })
    }

    /// Values at the two-point Gauss nodes of every segment of `bmesh`, with
    /// pointwise bounds. `∫_Γ u z ds` is replaced by the Gauss sum.
    pub fn nodal(mesh: &Mesh, bmesh: &BoundaryMesh, data: &OcpData) -> Result<Self> {
        check_bounds(bmesh, data)?;
        bmesh.check_compatible(mesh)?;
        let m = 2 * bmesh.len();
        let mut weights = Vec::with_capacity(m);
        let mut sites = Vec::with_capacity(m);
        let mut points = Vec::with_capacity(m);
        let mut triplets = Vec::with_capacity(2 * m);
        for s in bmesh.segments() {
            let [a, b] = mesh.boundary_edges()[s.parent_edge].vertices;
            for &g in &GAUSS2 {
                let q = weights.len();
                let t = s.t0 + g * (s.t1 - s.t0);
                let w = 0.5 * s.length;
                weights.push(w);
                sites.push(ControlSite { edge: s.parent_edge, t0: t, t1: t });
                points.push(s.point_at(g));
                triplets.push((a, q, w * (1.0 - t)));
                triplets.push((b, q, w * t));
            }
        }
        let edge_ranges = (0..mesh.boundary_edges().len())
            .map(|e| {
                let r = bmesh.edge_segments(e);
                2 * r.start..2 * r.end
            })
            .collect();
        let lower = points.iter().map(|&x| (data.phi1)(x)).collect();
        let upper = points.iter().map(|&x| (data.phi2)(x)).collect();
        Ok(ControlDiscretization {
            kind: ControlKind::Nodal,
            weights,
            sites,
            points,
            edge_ranges,
            coupling: CsrMatrix::from_triplets(mesh.num_vertices(), m, &triplets),
            lower,
            upper,
        })
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sites(&self) -> &[ControlSite] {
        &self.sites
    }

    /// Segment midpoints, or the nodes themselves for nodal controls.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Control dofs on fine boundary edge `e`.
    pub fn edge_dofs(&self, e: usize) -> Range<usize> {
        self.edge_ranges[e].clone()
    }

    /// `(u, v)_{L2(Γ)}` in the discrete inner product.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn project_box(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi))
            .collect()
    }

    /// Largest bound violation of `u`.
    pub fn infeasibility(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Per-element classification of the active set iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActiveSet {
    Lower,
    Upper,
    Inactive,
}

/// Components of the KKT residual, each measured so that zero means the
/// corresponding condition holds exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktReport {
    /// `‖q + γu − λ1 − λ2‖_{L2(Γ)}`.
    pub stationarity: f64,
    /// `max(−min λ1, 0)`.
    pub sign_lower: f64,
    /// `max(max λ2, 0)`.
    pub sign_upper: f64,
    /// `|∫_Γ λ1 (u − φ1)|`.
    pub complementarity_lower: f64,
    /// `|∫_Γ λ2 (u − φ2)|`.
    pub complementarity_upper: f64,
    /// Largest bound violation of `u`.
    pub feasibility: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.sign_lower,
            self.sign_upper,
            self.complementarity_lower,
            self.complementarity_upper,
            self.feasibility,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// State, control, adjoint and multipliers together with diagnostics.
#[derive(Clone, Debug)]
pub struct OcpSolution {
    /// Full state on the fine mesh, including `−B u`.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    /// Adjoint on the fine mesh.
    pub p: Vec<f64>,
    /// Projected adjoint `q` in the control space.
    pub q: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub active: Vec<ActiveSet>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub kkt: KktReport,
    pub cost: f64,
    /// Reduced cost of every accepted iterate, starting with the initial
    /// guess.
    pub cost_history: Vec<f64>,
}

/// `λ1 = max(q + γφ1, 0)`, `λ2 = min(q + γφ2, 0)` elementwise.
pub fn compute_multipliers(q: &[f64], phi1: &[f64], phi2: &[f64], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let l1 = q.iter().zip(phi1).map(|(q, a)| (q + gamma * a).max(0.0)).collect();
    let l2 = q.iter().zip(phi2).map(|(q, b)| (q + gamma * b).min(0.0)).collect();
    (l1, l2)
}

/// Active sets from the multiplier candidates. Elements with equal bounds
/// are always lower-active.
pub fn classify(q: &[f64], lower: &[f64], upper: &[f64], gamma: f64) -> Vec<ActiveSet> {
    q.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&q, (&lo, &hi))| {
            if lo >= hi || q + gamma * lo > 0.0 {
                ActiveSet::Lower
            } else if q + gamma * hi < 0.0 {
                ActiveSet::Upper
            } else {
                ActiveSet::Inactive
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PdasOptions {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for PdasOptions {
    fn default() -> Self {
        PdasOptions { tol: 1e-10, maxit: 50 }
    }
}

/// The assembled reduced problem over a state space.
pub struct OcpProblem<'a> {
    space: &'a dyn GalerkinSpace,
    b_star: Option<&'a BoundaryCorrector>,
    control: ControlDiscretization,
    data: OcpData,
    mass: CsrMatrix,
    yd_load: Vec<f64>,
    yd_norm_sq: f64,
    y_base: Vec<f64>,
}

impl core::fmt::Debug for OcpProblem<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("OcpProblem")
            .field("state_dim", &self.space.dim())
            .field("fine_dim", &self.space.fine_dim())
            .field("controls", &self.control.len())
            .field("b_star", &self.b_star.is_some())
            .finish_non_exhaustive()
    }
}

impl<'a> OcpProblem<'a> {
    pub fn new(
        space: &'a dyn GalerkinSpace,
        b_star: Option<&'a BoundaryCorrector>,
        control: ControlDiscretization,
        data: &OcpData,
    ) -> Result<Self> {
        data.validate()?;
        let mesh = space.fine_mesh();
        let nf = space.fine_dim();
        if control.coupling().nrows() != nf {
            return Err(Error::IncompatibleSpace(format!(
                "control coupling has {} rows for {} fine dofs",
                control.coupling().nrows(),
                nf
            )));
        }
        if let Some(b) = b_star {
            if b.fine_dim() != nf || b.len() != control.len() {
                return Err(Error::IncompatibleSpace(format!(
                    "boundary corrector is {}x{}, expected {}x{}",
                    b.fine_dim(),
                    b.len(),
                    nf,
                    control.len()
                )));
            }
        }
        let p1 = P1Space::new(mesh);
        let mass = assemble_mass(&p1);
        let f_load = assemble_domain_load(&p1, &*data.f);
        let yd_load = assemble_domain_load(&p1, &*data.y_d);
        let yd_norm_sq = domain_integral_sq(mesh, &*data.y_d);
        let y_base = space.galerkin_solve(&f_load)?;
        Ok(OcpProblem { space, b_star, control, data: data.clone(), mass, yd_load, yd_norm_sq, y_base })
    }

    pub fn space(&self) -> &dyn GalerkinSpace {
        self.space
    }

    pub fn b_star(&self) -> Option<&BoundaryCorrector> {
        self.b_star
    }

    pub fn control(&self) -> &ControlDiscretization {
        &self.control
    }

    pub fn data(&self) -> &OcpData {
        &self.data
    }

    pub fn gamma(&self) -> f64 {
        self.data.gamma
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn yd_load(&self) -> &[f64] {
        &self.yd_load
    }

    fn check_control(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.control.len() {
            return Err(Error::invalid(format!(
                "control has {} entries, expected {}",
                u.len(),
                self.control.len()
            )));
        }
        Ok(())
    }

    /// Linear part `S u = P K_*⁻¹ Pᵀ N u − B u`.
    fn control_to_state(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.space.galerkin_solve(&self.control.coupling().matvec(u))?;
        if let Some(b) = self.b_star {
            for (yi, bi) in y.iter_mut().zip(b.apply(u)) {
                *yi -= bi;
            }
        }
        Ok(y)
    }

    /// `Nᵀ p − Bᵀ r` for an adjoint `p` with load `r`.
    fn adjoint_to_control(&self, p: &[f64], r: &[f64]) -> Vec<f64> {
        let mut g = self.control.coupling().transpose_matvec(p);
        if let Some(b) = self.b_star {
            for (gi, bi) in g.iter_mut().zip(b.apply_transpose(r)) {
                *gi -= bi;
            }
        }
        g
    }

    pub fn state(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_control(u)?;
        let mut y = self.control_to_state(u)?;
        for (yi, b) in y.iter_mut().zip(&self.y_base) {
            *yi += b;
        }
        Ok(y)
    }

    /// Tracking load `M y − b_d`.
    pub fn tracking_load(&self, y: &[f64]) -> Vec<f64> {
        let mut r = self.mass.matvec(y);
        for (ri, d) in r.iter_mut().zip(&self.yd_load) {
            *ri -= d;
        }
        r
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.space.galerkin_solve(&self.tracking_load(y))
    }

    /// `q = W⁻¹ (Nᵀ p − Bᵀ (M y − b_d))`.
    pub fn projected_adjoint(&self, y: &[f64], p: &[f64]) -> Vec<f64> {
        let r = self.tracking_load(y);
        let mut q = self.adjoint_to_control(p, &r);
        for (qi, w) in q.iter_mut().zip(self.control.weights()) {
            *qi /= w;
        }
        q
    }

    /// `½‖y − y_d‖² + ½γ‖u‖²_{L2(Γ)}`.
    pub fn cost_of(&self, y: &[f64], u: &[f64]) -> f64 {
        let track = self.mass.quad_form(y) - 2.0 * crate::linalg::dot(y, &self.yd_load) + self.yd_norm_sq;
        0.5 * track + 0.5 * self.gamma() * self.control.inner(u, u)
    }

    pub fn cost(&self, u: &[f64]) -> Result<f64> {
        let y = self.state(u)?;
        Ok(self.cost_of(&y, u))
    }

    /// Reduced gradient `q + γu`, the `L2(Γ)` Riesz representative of the
    /// derivative of the reduced cost.
    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let y = self.state(u)?;
        let p = self.adjoint(&y)?;
        let mut g = self.projected_adjoint(&y, &p);
        for (gi, ui) in g.iter_mut().zip(u) {
            *gi += self.gamma() * ui;
        }
        Ok(g)
    }

    /// Euclidean reduced Hessian `Sᵀ M S + γ W` applied to `v`.
    pub fn hessian_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let y = self.control_to_state(v)?;
        let r = self.mass.matvec(&y);
        let p = self.space.galerkin_solve(&r)?;
        let mut h = self.adjoint_to_control(&p, &r);
        for ((hi, vi), w) in h.iter_mut().zip(v).zip(self.control.weights()) {
            *hi += self.gamma() * w * vi;
        }
        Ok(h)
    }

    /// Initial guess: the discrete projection of `clamp(φ1, φ2, 0)`.
    pub fn initial_control(&self) -> Vec<f64> {
        let clamp0 = |x: Point| 0.0f64.max((self.data.phi1)(x)).min((self.data.phi2)(x));
        match self.control.kind() {
            ControlKind::Nodal => self.control.points().iter().map(|&x| clamp0(x)).collect::<Vec<f64>>(),
            ControlKind::Piecewise => {
                let mesh = self.space.fine_mesh();
                self.control
                    .sites()
                    .iter()
                    .map(|s| {
                        let [a, b] = mesh.boundary_edges()[s.edge].vertices;
                        let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                        GAUSS2
                            .iter()
                            .map(|g| {
                                let t = s.t0 + g * (s.t1 - s.t0);
                                0.5 * clamp0([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
                            })
                            .sum()
                    })
                    .collect()
            }
        }
        .into_iter()
        .zip(self.control.lower().iter().zip(self.control.upper()))
        .map(|(v, (&lo, &hi)): (f64, (&f64, &f64))| v.max(lo).min(hi))
        .collect()
    }

    /// Builds the full solution record for a control: state, adjoint,
    /// multipliers from the projected adjoint, and the KKT report.
    pub fn evaluate(&self, u: Vec<f64>) -> Result<OcpSolution> {
        let y = self.state(&u)?;
        let p = self.adjoint(&y)?;
        let q = self.projected_adjoint(&y, &p);
        let (lambda1, lambda2) = compute_multipliers(&q, self.control.lower(), self.control.upper(), self.gamma());
        let active = classify(&q, self.control.lower(), self.control.upper(), self.gamma());
        let cost = self.cost_of(&y, &u);
        let mut sol = OcpSolution {
            y,
            u,
            p,
            q,
            lambda1,
            lambda2,
            active,
            iterations: 0,
            kkt_residual: 0.0,
            kkt: KktReport::default(),
            cost,
            cost_history: Vec::new(),
        };
        sol.kkt = kkt_residual(&sol, self);
        sol.kkt_residual = sol.kkt.max();
        Ok(sol)
    }

    /// Solves the stationarity equations on the inactive set with the
    /// active components of `u` fixed at their bounds.
    fn inactive_solve(&self, active: &[ActiveSet], warm: &[f64], tol: f64) -> Result<Vec<f64>> {
        let ctl = &self.control;
        let mut u: Vec<f64> = active
            .iter()
            .zip(warm)
            .enumerate()
            .map(|(e, (s, &w))| match s {
                ActiveSet::Lower => ctl.lower()[e],
                ActiveSet::Upper => ctl.upper()[e],
                ActiveSet::Inactive => w,
            })
            .collect();
        let free: Vec<usize> = (0..u.len()).filter(|&e| active[e] == ActiveSet::Inactive).collect();
        if free.is_empty() {
            return Ok(u);
        }
        // Euclidean gradient at u_A (free components zeroed) gives the
        // right-hand side; the warm start enters as the CG initial guess.
        let mut u_a = u.clone();
        for &e in &free {
            u_a[e] = 0.0;
        }
        let g_a = self.gradient(&u_a)?;
        let b: Vec<f64> = free.iter().map(|&e| -ctl.weights()[e] * g_a[e]).collect();
        let x0: Vec<f64> = free.iter().map(|&e| u[e]).collect();
        let gamma = self.gamma();
        let inv_diag: Vec<f64> = free.iter().map(|&e| 1.0 / (gamma * ctl.weights()[e])).collect();
        let rhs_norm = b.iter().zip(&inv_diag).map(|(r, d)| r * r * d * gamma).sum::<f64>().sqrt();
        let target = (tol / gamma.sqrt()).max(1e-15 * rhs_norm / gamma.sqrt());
        let mut failure = None;
        let mut full = vec![0.0; u.len()];
        let out = pcg(
            |x, y| {
                full.iter_mut().for_each(|v| *v = 0.0);
                for (k, &e) in free.iter().enumerate() {
                    full[e] = x[k];
                }
                match self.hessian_apply(&full) {
                    Ok(h) => {
                        for (k, &e) in free.iter().enumerate() {
                            y[k] = h[e];
                        }
                    }
                    Err(err) => {
                        failure.get_or_insert(err);
                        y.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            },
            |r, z| {
                for i in 0..r.len() {
                    z[i] = inv_diag[i] * r[i];
                }
            },
            &b,
            Some(&x0),
            target,
            10 * free.len() + 200,
        );
        if let Some(err) = failure {
            return Err(err);
        }
        for (k, &e) in free.iter().enumerate() {
            u[e] = out.x[k];
        }
        Ok(u)
    }

    /// Primal-dual active set iteration.
    pub fn solve_pdas(&self, opts: &PdasOptions) -> Result<OcpSolution> {
        if !(opts.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        let ctl = &self.control;
        let mut current = self.evaluate(self.initial_control())?;
        let mut cost_history = vec![current.cost];
        let mut history: Vec<Vec<ActiveSet>> = Vec::new();
        let mut best: Option<OcpSolution> = None;
        let mut solves = 0;
        // Sets come from the unprojected Newton iterate; the accepted
        // iterate is its projection onto the box.
        let mut trial_q = current.q.clone();
        loop {
            // The first Newton step starts from empty active sets.
            let sets = if solves == 0 {
                vec![ActiveSet::Inactive; ctl.len()]
            } else {
                classify(&trial_q, ctl.lower(), ctl.upper(), self.gamma())
            };
            if let Some(prev) = history.last() {
                if *prev == sets && current.kkt_residual <= opts.tol {
                    current.iterations = solves;
                    current.cost_history = cost_history;
                    return Ok(current);
                }
                if revisits_earlier(&history, &sets) {
                    history.push(sets);
                    return Err(Error::Cycling { iterations: solves, history });
                }
            }
            if best.as_ref().map_or(true, |b| current.kkt_residual < b.kkt_residual) {
                best = Some(current.clone());
            }
            if solves == opts.maxit {
                let mut b = best.unwrap_or(current);
                b.iterations = solves;
                b.cost_history = cost_history;
                return Err(Error::NonConvergence { iterations: solves, kkt_residual: b.kkt_residual, best: Box::new(b) });
            }
            let raw = self.inactive_solve(&sets, &current.u, 1e-2 * opts.tol)?;
            solves += 1;
            history.push(sets);
            let projected = ctl.project_box(&raw);
            let raw_q = if projected == raw {
                None
            } else {
                let y = self.state(&raw)?;
                Some(self.projected_adjoint(&y, &self.adjoint(&y)?))
            };
            current = self.evaluate(projected)?;
            trial_q = raw_q.unwrap_or_else(|| current.q.clone());
            cost_history.push(current.cost);
        }
    }
}

/// True if `sets` differs from the last entry of `history` but equals an
/// earlier one.
fn revisits_earlier(history: &[Vec<ActiveSet>], sets: &[ActiveSet]) -> bool {
    match history.split_last() {
        Some((last, earlier)) => last.as_slice() != sets && earlier.iter().any(|h| h.as_slice() == sets),
        None => false,
    }
}

/// Reduced gradient `q + γu` at `u`.
pub fn reduced_gradient(problem: &OcpProblem, u: &[f64]) -> Result<Vec<f64>> {
    problem.gradient(u)
}

/// KKT residual of a solution record, computed from its stored fields.
pub fn kkt_residual(sol: &OcpSolution, problem: &OcpProblem) -> KktReport {
    let ctl = problem.control();
    let gamma = problem.gamma();
    let q = problem.projected_adjoint(&sol.y, &sol.p);
    let station: Vec<f64> = (0..ctl.len())
        .map(|e| q[e] + gamma * sol.u[e] - sol.lambda1[e] - sol.lambda2[e])
        .collect();
    let compl_l: f64 = (0..ctl.len())
        .map(|e| ctl.weights()[e] * sol.lambda1[e] * (sol.u[e] - ctl.lower()[e]))
        .sum();
    let compl_u: f64 = (0..ctl.len())
        .map(|e| ctl.weights()[e] * sol.lambda2[e] * (sol.u[e] - ctl.upper()[e]))
        .sum();
    KktReport {
        stationarity: ctl.norm(&station),
        sign_lower: sol.lambda1.iter().fold(0.0, |m: f64, &l| m.max(-l)),
        sign_upper: sol.lambda2.iter().fold(0.0, |m: f64, &l| m.max(l)),
        complementarity_lower: compl_l.abs(),
        complementarity_upper: compl_u.abs(),
        feasibility: ctl.infeasibility(&sol.u),
    }
}

/// Piecewise constant controls on `bmesh` over an arbitrary state space.
pub fn solve_ocp_pdas(
    space: &dyn GalerkinSpace,
    b_star: Option<&BoundaryCorrector>,
    bmesh: &BoundaryMesh,
    data: &OcpData,
    tol: f64,
    maxit: usize,
) -> Result<OcpSolution> {
    let control = ControlDiscretization::piecewise(space.fine_mesh(), bmesh, data)?;
    OcpProblem::new(space, b_star, control, data)?.solve_pdas(&PdasOptions { tol, maxit })
}

/// Variational discretization: the control is represented by its values at
/// the boundary Gauss nodes, where it equals `clamp(φ1, φ2, −p_h/γ)`.
pub fn solve_ocp_variational(
    space: &dyn GalerkinSpace,
    bmesh: &BoundaryMesh,
    data: &OcpData,
    tol: f64,
    maxit: usize,
) -> Result<OcpSolution> {
    let control = ControlDiscretization::nodal(space.fine_mesh(), bmesh, data)?;
    OcpProblem::new(space, None, control, data)?.solve_pdas(&PdasOptions { tol, maxit })
}

/// Standard P1 state space on `mesh` with piecewise constant controls.
pub fn solve_ocp_standard(mesh: &Mesh, bmesh: &BoundaryMesh, data: &OcpData, tol: f64, maxit: usize) -> Result<OcpSolution> {
    let space = StandardSpace::new(mesh, &data.coeff)?;
    solve_ocp_pdas(&space, None, bmesh, data, tol, maxit)
}
