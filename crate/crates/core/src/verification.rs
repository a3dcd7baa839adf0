//! Benchmark problems and independent checks: a dense projected gradient
//! oracle, finite difference gradient checks, least-squares rate fits,
//! a-priori bounds on the optimal triple and error measures between
//! solutions on nested meshes.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fem::{
    assemble_a, assemble_boundary_coupling, assemble_domain_load, assemble_mass, constant, domain_integral_sq,
    h1_norm, l2_norm, q_rho_project, CellField, CoefficientField, ConstantEstimates, P1Space, GAUSS2,
};
use crate::linalg::{dot, DenseCholesky, DenseMatrix};
use crate::mesh::{BoundaryLocator, BoundaryMesh, Mesh, TriangleLocator};
use crate::ocp::{classify, compute_multipliers, ControlKind, KktReport, OcpData, OcpProblem, OcpSolution};
use crate::{Error, Point, Result};

/// Seed of the rough coefficient used when none is given.
pub const ROUGH_SEED: u64 = 20_240_917;

/// Cells per side of the rough coefficient.
pub const ROUGH_CELLS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    /// Closed-form optimal triple `(ȳ, ū, p̄)` of constants.
    Exact { y: f64, u: f64, p: f64 },
    /// Numerical reference on a mesh refined by at least `factor` in both
    /// `h` and `ρ`.
    Overkill { factor: usize },
}

#[derive(Clone, Debug)]
pub struct BenchmarkCase {
    pub id: String,
    pub data: OcpData,
    pub reference: Reference,
    /// Human-readable description of the expected active sets.
    pub active_sets: &'static str,
}

fn smooth_f(p: Point) -> f64 {
    1.0 + 0.1 * (core::f64::consts::PI * p[0]).sin() * p[1]
}

fn smooth_yd(p: Point) -> f64 {
    use core::f64::consts::PI;
    1.13 + 0.1 * (PI * p[0]).cos() * (PI * p[1]).cos()
}

/// Rough coefficient `a(x) I`, `a` piecewise constant on the cells of a
/// 64×64 grid with log-uniform values in `[0.01, 1]`, `κ = 1`.
pub fn rough_coefficient(seed: u64) -> CoefficientField {
    let cells = CellField::log_uniform(ROUGH_CELLS, 0.01, 1.0, seed);
    CoefficientField::scalar(Arc::new(move |p| cells.eval(p)), constant(1.0), 0.01, 1.0)
        .expect("bounds are ordered")
}

/// One of `const-exact`, `smooth-active`, `rough-random`. The seed only
/// affects `rough-random`.
pub fn benchmark_case(id: &str, seed: u64) -> Result<BenchmarkCase> {
    let smooth = |coeff: CoefficientField| OcpData {
        coeff,
        f: Arc::new(smooth_f),
        y_d: Arc::new(smooth_yd),
        phi1: constant(0.0),
        phi2: constant(0.05),
        gamma: 0.1,
    };
    match id {
        "const-exact" => Ok(BenchmarkCase {
            id: id.into(),
            data: OcpData {
                coeff: CoefficientField::identity(),
                f: constant(1.0),
                y_d: constant(1.0),
                phi1: constant(-1.0),
                phi2: constant(1.0),
                gamma: 1.0,
            },
            reference: Reference::Exact { y: 1.0, u: 0.0, p: 0.0 },
            active_sets: "both bounds inactive",
        }),
        "smooth-active" => Ok(BenchmarkCase {
            id: id.into(),
            data: smooth(CoefficientField::identity()),
            reference: Reference::Overkill { factor: 8 },
            active_sets: "lower and upper bound each active on part of the boundary",
        }),
        "rough-random" => Ok(BenchmarkCase {
            id: id.into(),
            data: smooth(rough_coefficient(seed)),
            reference: Reference::Overkill { factor: 8 },
            active_sets: "data dependent",
        }),
        other => Err(Error::invalid(format!("unknown benchmark case '{other}'"))),
    }
}

/// Checks that a solution has lower-active, upper-active and inactive
/// elements.
pub fn check_nontrivial_active_sets(sol: &OcpSolution) -> Result<()> {
    use crate::ocp::ActiveSet::*;
    let has = |s| sol.active.contains(&s);
    if has(Lower) && has(Upper) && has(Inactive) {
        Ok(())
    } else {
        Err(Error::NumericFailure(format!(
            "reference active sets are degenerate (lower {}, upper {}, inactive {})",
            has(Lower),
            has(Upper),
            has(Inactive)
        )))
    }
}

/// Dense projected gradient solver for piecewise constant controls on a
/// standard P1 space with at most 200 dofs. It shares only assembly with
/// the active set solver.
pub fn oracle_solve_pg(mesh: &Mesh, bmesh: &BoundaryMesh, data: &OcpData, tol: f64) -> Result<OcpSolution> {
    const MAX_DOFS: usize = 200;
    const MAX_ITER: usize = 1_000_000;
    data.validate()?;
    let nf = mesh.num_vertices();
    if nf > MAX_DOFS {
        return Err(Error::invalid(format!("oracle limited to {MAX_DOFS} dofs, got {nf}")));
    }
    let p1 = P1Space::new(mesh);
    let k = assemble_a(&p1, &data.coeff)?.to_dense();
    let chol = DenseCholesky::factor(&k)?;
    let mass = assemble_mass(&p1).to_dense();
    let n = assemble_boundary_coupling(&p1, bmesh)?.to_dense();
    let f = assemble_domain_load(&p1, &*data.f);
    let bd = assemble_domain_load(&p1, &*data.y_d);
    let yd_sq = domain_integral_sq(mesh, &*data.y_d);
    let w = bmesh.lengths();
    let lo = q_rho_project(bmesh, &*data.phi1);
    let hi = q_rho_project(bmesh, &*data.phi2);
    if lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return Err(Error::invalid("phi1 > phi2"));
    }
    let m = w.len();
    let gamma = data.gamma;
    let s_cols: Vec<Vec<f64>> = (0..m).map(|e| chol.solve(&n.column(e))).collect();
    let s = DenseMatrix::from_columns(nf, &s_cols);
    let y0 = chol.solve(&f);
    let winner = |a: &[f64], b: &[f64]| -> f64 { (0..m).map(|e| w[e] * a[e] * b[e]).sum() };
    let state = |u: &[f64]| -> Vec<f64> {
        let su = s.matvec(u);
        y0.iter().zip(&su).map(|(a, b)| a + b).collect()
    };
    let cost = |y: &[f64], u: &[f64]| -> f64 {
        0.5 * (dot(y, &mass.matvec(y)) - 2.0 * dot(y, &bd) + yd_sq) + 0.5 * gamma * winner(u, u)
    };
    let adjoint_proj = |y: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let r: Vec<f64> = mass.matvec(y).iter().zip(&bd).map(|(a, b)| a - b).collect();
        let p = chol.solve(&r);
        let q: Vec<f64> = n.transpose_matvec(&p).iter().zip(&w).map(|(a, b)| a / b).collect();
        (p, q)
    };
    // Crude Lipschitz estimate of u ↦ W⁻¹ Sᵀ M S u in the W inner product;
    // the step is halved whenever the cost increases beyond rounding.
    let mut v = vec![1.0; m];
    let mut lip: f64 = 0.0;
    for _ in 0..10 {
        let nv = winner(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let sv = s.matvec(&v);
        let hv: Vec<f64> = s.transpose_matvec(&mass.matvec(&sv)).iter().zip(&w).map(|(a, b)| a / b).collect();
        lip = lip.max(winner(&v, &hv));
        v = hv;
    }
    let mut sigma = 1.0 / (gamma + lip);
    let project = |u: &[f64]| -> Vec<f64> { (0..m).map(|e| u[e].max(lo[e]).min(hi[e])).collect() };
    let mut u = project(&vec![0.0; m]);
    let mut y = state(&u);
    let mut j = cost(&y, &u);
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > MAX_ITER {
            return Err(Error::NumericFailure(format!("projected gradient oracle exceeded {MAX_ITER} iterations")));
        }
        let (_, q) = adjoint_proj(&y);
        let g: Vec<f64> = (0..m).map(|e| q[e] + gamma * u[e]).collect();
        let (u_new, y_new, j_new) = loop {
            let cand = project(&(0..m).map(|e| u[e] - sigma * g[e]).collect::<Vec<f64>>());
            let yc = state(&cand);
            let jc = cost(&yc, &cand);
            if jc <= j + 1e-10 * j.abs() {
                break (cand, yc, jc);
            }
            sigma *= 0.5;
        };
        let d: Vec<f64> = (0..m).map(|e| u_new[e] - u[e]).collect();
        let step = winner(&d, &d).sqrt();
        u = u_new;
        y = y_new;
        j = j_new;
        if step <= tol {
            break;
        }
    }
    let (p, q) = adjoint_proj(&y);
    let (lambda1, lambda2) = compute_multipliers(&q, &lo, &hi, gamma);
    let active = classify(&q, &lo, &hi, gamma);
    let station: Vec<f64> = (0..m).map(|e| q[e] + gamma * u[e] - lambda1[e] - lambda2[e]).collect();
    let kkt = KktReport {
        stationarity: winner(&station, &station).sqrt(),
        sign_lower: 0.0,
        sign_upper: 0.0,
        complementarity_lower: (0..m).map(|e| w[e] * lambda1[e] * (u[e] - lo[e])).sum::<f64>().abs(),
        complementarity_upper: (0..m).map(|e| w[e] * lambda2[e] * (u[e] - hi[e])).sum::<f64>().abs(),
        feasibility: (0..m).map(|e| (lo[e] - u[e]).max(u[e] - hi[e]).max(0.0)).fold(0.0, f64::max),
    };
    Ok(OcpSolution {
        y,
        u,
        p,
        q,
        lambda1,
        lambda2,
        active,
        iterations,
        kkt_residual: kkt.max(),
        kkt,
        cost: j,
        cost_history: Vec::new(),
    })
}

/// Least-squares slope of `log(error)` against `log(size)` and the rates
/// between consecutive levels.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    /// `None` on the first level and wherever an error was excluded.
    pub pairwise: Vec<Option<f64>>,
    /// Levels left out because their error was not positive.
    pub excluded: Vec<usize>,
}

pub fn fit_rates(sizes: &[f64], errors: &[f64]) -> Result<RateFit> {
    if sizes.len() != errors.len() {
        return Err(Error::invalid("sizes and errors differ in length"));
    }
    if sizes.len() < 3 {
        return Err(Error::invalid(format!("rates need at least 3 levels, got {}", sizes.len())));
    }
    let ok = |i: usize| errors[i] > 0.0 && errors[i].is_finite() && sizes[i] > 0.0;
    let excluded: Vec<usize> = (0..sizes.len()).filter(|&i| !ok(i)).collect();
    let pts: Vec<(f64, f64)> = (0..sizes.len()).filter(|&i| ok(i)).map(|i| (sizes[i].ln(), errors[i].ln())).collect();
    if pts.len() < 2 {
        return Err(Error::invalid("fewer than two positive errors"));
    }
    let nf = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("all sizes are equal"));
    }
    let pairwise = (0..sizes.len())
        .map(|i| {
            if i == 0 || !ok(i) || !ok(i - 1) || sizes[i] == sizes[i - 1] {
                None
            } else {
                Some((errors[i] / errors[i - 1]).ln() / (sizes[i] / sizes[i - 1]).ln())
            }
        })
        .collect();
    Ok(RateFit { slope: sxy / sxx, pairwise, excluded })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.value <= self.bound
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppendixReport {
    pub c_sharp: f64,
    pub checks: Vec<BoundCheck>,
}

impl AppendixReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(BoundCheck::holds)
    }
}

/// A-priori bounds on `‖ȳ − y_d‖`, `‖ū‖_{L2(Γ)}`, `‖ȳ‖_{H1}` and
/// `‖p̄‖_{H1}` with the constant
///
/// ```text
///   C♯ = 2‖y_d‖² + 4 c²‖f‖² + (4 (C_Tr c)² + 1) min(‖φ1‖²_Γ, ‖φ2‖²_Γ),
///   c  = C_PF max(α⁻¹, 1).
/// ```
///
/// The state bound is `c (‖f‖ + C_Tr γ^{-1/2} C♯^{1/2})`, from the stability
/// estimate of the state equation and the bound on `‖ū‖`. With estimated
/// constants (discrete suprema, hence lower bounds) the check is advisory.
pub fn appendix_bounds_check(
    problem: &OcpProblem,
    sol: &OcpSolution,
    constants: ConstantEstimates,
) -> AppendixReport {
    let data = problem.data();
    let mesh = problem.space().fine_mesh();
    let alpha = data.coeff.alpha();
    let c = constants.c_pf * (1.0 / alpha).max(1.0);
    let f_sq = domain_integral_sq(mesh, &*data.f);
    let yd_sq = domain_integral_sq(mesh, &*data.y_d);
    let bmesh = BoundaryMesh::induced(mesh, 1).expect("k = 1 is valid");
    let boundary_sq = |g: &dyn Fn(Point) -> f64| -> f64 {
        bmesh
            .segments()
            .iter()
            .map(|s| 0.5 * s.length * GAUSS2.iter().map(|&t| g(s.point_at(t)).powi(2)).sum::<f64>())
            .sum()
    };
    let phi_sq = boundary_sq(&*data.phi1).min(boundary_sq(&*data.phi2));
    let c_sharp = 2.0 * yd_sq + 4.0 * c * c * f_sq + (4.0 * (constants.c_tr * c).powi(2) + 1.0) * phi_sq;
    let mass = problem.mass();
    let diff_sq = mass.quad_form(&sol.y) - 2.0 * dot(&sol.y, problem.yd_load()) + yd_sq;
    let gamma = data.gamma;
    let u_norm = problem.control().norm(&sol.u);
    let root = c_sharp.sqrt();
    AppendixReport {
        c_sharp,
        checks: vec![
            BoundCheck { name: "tracking", value: diff_sq.max(0.0).sqrt(), bound: root },
            BoundCheck { name: "control", value: u_norm, bound: root / gamma.sqrt() },
            BoundCheck {
                name: "state_h1",
                value: h1_norm(mesh, mass, &sol.y),
                bound: c * (f_sq.sqrt() + constants.c_tr * root / gamma.sqrt()),
            },
            BoundCheck { name: "adjoint_h1", value: h1_norm(mesh, mass, &sol.p), bound: c * root },
        ],
    }
}

/// Relative errors `|⟨g, δ⟩ − (J(u + εδ) − J(u − εδ)) / 2ε|` over
/// `directions` random directions with entries uniform in `[-1, 1]`.
pub fn finite_difference_check(problem: &OcpProblem, u: &[f64], directions: usize, eps: f64, seed: u64) -> Result<Vec<f64>> {
    let g = problem.gradient(u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(directions);
    for _ in 0..directions {
        let d: Vec<f64> = (0..u.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
        let um: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a - eps * b).collect();
        let fd = (problem.cost(&up)? - problem.cost(&um)?) / (2.0 * eps);
        let an = problem.control().inner(&g, &d);
        out.push((fd - an).abs() / an.abs().max(fd.abs()).max(1e-300));
    }
    Ok(out)
}

/// Values of a P1 function on `from` at the vertices of `to`. Exact when
/// `to` refines `from`.
pub fn transfer_p1(from: &Mesh, values: &[f64], to: &Mesh) -> Result<Vec<f64>> {
    let loc = TriangleLocator::new(from);
    to.vertices()
        .iter()
        .map(|&x| {
            crate::fem::eval_p1(&loc, from, values, x)
                .ok_or_else(|| Error::IncompatibleMesh(format!("point ({:.6}, {:.6}) outside mesh", x[0], x[1])))
        })
        .collect()
}

/// Evaluates the control of a solution at boundary points of its mesh.
pub struct ControlEvaluator<'a> {
    problem: &'a OcpProblem<'a>,
    sol: &'a OcpSolution,
    locator: BoundaryLocator<'a>,
}

impl<'a> ControlEvaluator<'a> {
    pub fn new(problem: &'a OcpProblem<'a>, sol: &'a OcpSolution) -> Self {
        ControlEvaluator { problem, sol, locator: BoundaryLocator::new(problem.space().fine_mesh()) }
    }

    /// Piecewise controls: the value on the segment containing `x`. Nodal
    /// controls: `clamp(φ1, φ2, −p_h/γ)` with the trace of the adjoint.
    pub fn eval(&self, x: Point) -> Result<f64> {
        let (edge, t) = self
            .locator
            .locate(x)
            .ok_or_else(|| Error::IncompatibleMesh(format!("({:.6}, {:.6}) is not on the boundary", x[0], x[1])))?;
        let ctl = self.problem.control();
        match ctl.kind() {
            ControlKind::Piecewise => {
                let range = ctl.edge_dofs(edge);
                let sites = &ctl.sites()[range.clone()];
                let k = sites.iter().position(|s| t <= s.t1 + 1e-12).unwrap_or(sites.len() - 1);
                Ok(self.sol.u[range.start + k])
            }
            ControlKind::Nodal => {
                let mesh = self.problem.space().fine_mesh();
                let [a, b] = mesh.boundary_edges()[edge].vertices;
                let p = (1.0 - t) * self.sol.p[a] + t * self.sol.p[b];
                let data = self.problem.data();
                Ok((-p / data.gamma).max((data.phi1)(x)).min((data.phi2)(x)))
            }
        }
    }
}

/// `‖u_a − u_b‖_{L2(Γ)}` by two-point Gauss rules on `subdivisions` equal
/// pieces of every boundary edge of `quad_mesh`.
pub fn control_distance(a: &ControlEvaluator, b: &ControlEvaluator, quad_mesh: &Mesh, subdivisions: usize) -> Result<f64> {
    let mut s = 0.0;
    let k = subdivisions.max(1);
    for (e, be) in quad_mesh.boundary_edges().iter().enumerate() {
        let (pa, pb) = (quad_mesh.vertices()[be.vertices[0]], quad_mesh.vertices()[be.vertices[1]]);
        let len = quad_mesh.boundary_edge_length(e) / k as f64;
        for j in 0..k {
            for &g in &GAUSS2 {
                let t = (j as f64 + g) / k as f64;
                let x = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                s += 0.5 * len * (a.eval(x)? - b.eval(x)?).powi(2);
            }
        }
    }
    Ok(s.sqrt())
}

/// Errors of a solution against a reference on a refinement of its mesh:
/// `‖y − y_ref‖_{L2(Ω)}`, `‖u − u_ref‖_{L2(Γ)}` and `‖p − p_ref‖_a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolutionErrors {
    pub y_l2: f64,
    pub u_l2: f64,
    pub p_energy: f64,
}

pub fn solution_errors(
    problem: &OcpProblem,
    sol: &OcpSolution,
    ref_problem: &OcpProblem,
    ref_sol: &OcpSolution,
    subdivisions: usize,
) -> Result<SolutionErrors> {
    let mesh = problem.space().fine_mesh();
    let ref_mesh = ref_problem.space().fine_mesh();
    let y = transfer_p1(mesh, &sol.y, ref_mesh)?;
    let p = transfer_p1(mesh, &sol.p, ref_mesh)?;
    let dy: Vec<f64> = y.iter().zip(&ref_sol.y).map(|(a, b)| a - b).collect();
    let dp: Vec<f64> = p.iter().zip(&ref_sol.p).map(|(a, b)| a - b).collect();
    let u_l2 = control_distance(
        &ControlEvaluator::new(problem, sol),
        &ControlEvaluator::new(ref_problem, ref_sol),
        ref_mesh,
        subdivisions,
    )?;
    Ok(SolutionErrors {
        y_l2: l2_norm(ref_problem.mass(), &dy),
        u_l2,
        p_energy: ref_problem.space().fine_operator().quad_form(&dp).max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::solve_ocp_standard;

    #[test]
    fn exact_rates() {
        let r = fit_rates(&[1.0, 0.5, 0.25], &[1.0, 0.5, 0.25]).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert_eq!(r.pairwise[0], None);
        let r = fit_rates(&[1.0, 0.5, 0.25], &[1.0, 0.25, 0.0625]).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        let r = fit_rates(&[1.0, 0.5, 0.25, 0.125], &[1.0, 0.0, 0.25, 0.125]).unwrap();
        assert_eq!(r.excluded, vec![1]);
        assert!(fit_rates(&[1.0, 0.5], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn oracle_constant_case() {
        let mesh = Mesh::unit_square(4).unwrap();
        let bm = BoundaryMesh::induced(&mesh, 1).unwrap();
        let case = benchmark_case("const-exact", ROUGH_SEED).unwrap();
        let sol = oracle_solve_pg(&mesh, &bm, &case.data, 1e-12).unwrap();
        assert!(sol.u.iter().all(|v| v.abs() < 1e-10));
        assert!(sol.y.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(sol.p.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn oracle_point_set_one_step() {
        let mesh = Mesh::unit_square(3).unwrap();
        let bm = BoundaryMesh::induced(&mesh, 1).unwrap();
        let mut data = benchmark_case("smooth-active", ROUGH_SEED).unwrap().data;
        data.phi1 = constant(0.02);
        data.phi2 = constant(0.02);
        let sol = oracle_solve_pg(&mesh, &bm, &data, 1e-12).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.u.iter().all(|&v| v == 0.02));
    }

    #[test]
    fn oracle_agrees_with_active_set_solver() {
        let mesh = Mesh::unit_square(8).unwrap();
        let bm = BoundaryMesh::induced(&mesh, 1).unwrap();
        let data = benchmark_case("smooth-active", ROUGH_SEED).unwrap().data;
        let a = oracle_solve_pg(&mesh, &bm, &data, 1e-12).unwrap();
        let b = solve_ocp_standard(&mesh, &bm, &data, 1e-10, 50).unwrap();
        let d: f64 = bm
            .lengths()
            .iter()
            .zip(a.u.iter().zip(&b.u))
            .map(|(w, (x, y))| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(d <= 1e-8, "distance {d:e}");
    }

    #[test]
    fn unknown_case() {
        assert!(matches!(benchmark_case("nope", 1), Err(Error::InvalidArgument(_))));
    }
}
