//! Level construction, reference solutions and convergence studies.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use neumann_ocp_core::fem::{estimate_constants, P1Space};
use neumann_ocp_core::mesh::{BoundaryMesh, Mesh, MeshHierarchy};
use neumann_ocp_core::multiscale::LodContext;
use neumann_ocp_core::ocp::{
    ActiveSet, ControlDiscretization, KktReport, OcpData, OcpProblem, OcpSolution, PdasOptions,
};
use neumann_ocp_core::space::{GalerkinSpace, StandardSpace};
use neumann_ocp_core::verification::{
    appendix_bounds_check, benchmark_case, fit_rates, solution_errors, AppendixReport, BenchmarkCase, RateFit,
    Reference, SolutionErrors,
};

use crate::config::{Mode, StudyConfig, Sweep};
use crate::RunError;

/// Two-point Gauss rules per level boundary segment when measuring control
/// errors on a reference edge no coarser than the level's edges.
fn control_subdivisions(spec: &LevelSpec) -> usize {
    2 * spec.k
}

/// Mesh parameters of one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelSpec {
    pub level: usize,
    /// Cells per side of the mesh carrying the state (the fine mesh in
    /// multiscale mode).
    pub n: usize,
    /// Boundary segments per fine boundary edge.
    pub k: usize,
    pub coarse_n: Option<usize>,
}

pub fn level_specs(cfg: &StudyConfig) -> Vec<LevelSpec> {
    (0..cfg.levels)
        .map(|level| {
            let scale = 1usize << level;
            match cfg.sweep {
                Sweep::Mesh => LevelSpec { level, n: cfg.n0 * scale, k: cfg.k, coarse_n: None },
                Sweep::Boundary => LevelSpec { level, n: cfg.n0, k: cfg.k * scale, coarse_n: None },
                Sweep::Coarse => LevelSpec {
                    level,
                    n: cfg.fine_n.unwrap_or(cfg.n0 * scale),
                    k: cfg.k,
                    coarse_n: Some(cfg.n0 * scale),
                },
            }
        })
        .collect()
}

/// Benchmark data with the configured cost parameter and seed.
pub fn case_for(cfg: &StudyConfig) -> Result<BenchmarkCase, RunError> {
    let mut case = benchmark_case(&cfg.case, cfg.seed).map_err(|e| RunError::Config(e.to_string()))?;
    // The constant triple stays optimal for any γ since its adjoint is 0.
    if let Some(g) = cfg.gamma {
        case.data.gamma = g;
    }
    Ok(case)
}

/// Geometry of a level as seen by the solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelGeometry {
    pub h: f64,
    pub rho: f64,
    pub coarse_h: Option<f64>,
    pub layers: Option<usize>,
    pub state_dofs: usize,
    pub controls: usize,
}

fn control_for(mode: Mode, mesh: &Mesh, bmesh: &BoundaryMesh, data: &OcpData) -> Result<ControlDiscretization, RunError> {
    Ok(match mode {
        Mode::Variational => ControlDiscretization::nodal(mesh, bmesh, data)?,
        Mode::Standard | Mode::Multiscale => ControlDiscretization::piecewise(mesh, bmesh, data)?,
    })
}

/// Builds the discrete problem of one level, runs the active set solver and
/// hands problem and result to `f`. In multiscale mode `f` also receives the
/// standard P1 problem and solution on the same fine mesh and boundary mesh.
pub fn with_level<R>(
    cfg: &StudyConfig,
    data: &OcpData,
    spec: &LevelSpec,
    mesh_override: Option<&Mesh>,
    f: impl FnOnce(LevelRun<'_>) -> Result<R, RunError>,
) -> Result<R, RunError> {
    let opts = PdasOptions { tol: cfg.tol, maxit: cfg.maxit };
    let start = Instant::now();
    match cfg.mode {
        Mode::Standard | Mode::Variational => {
            let owned;
            let mesh = match mesh_override {
                Some(m) => m,
                None => {
                    owned = Mesh::unit_square(spec.n)?;
                    &owned
                }
            };
            let bmesh = BoundaryMesh::induced(mesh, spec.k)?;
            let space = StandardSpace::new(mesh, &data.coeff)?;
            let problem = OcpProblem::new(&space, None, control_for(cfg.mode, mesh, &bmesh, data)?, data)?;
            let result = problem.solve_pdas(&opts);
            let seconds = start.elapsed().as_secs_f64();
            let geometry = LevelGeometry {
                h: mesh.h(),
                rho: bmesh.rho(),
                coarse_h: None,
                layers: None,
                state_dofs: space.dim(),
                controls: problem.control().len(),
            };
            f(LevelRun { problem: &problem, result, geometry, seconds, fine: None })
        }
        Mode::Multiscale => {
            let nc = spec.coarse_n.ok_or_else(|| RunError::Config("multiscale level without coarse mesh".into()))?;
            if !spec.n.is_multiple_of(nc) || !(spec.n / nc).is_power_of_two() {
                return Err(RunError::Config(format!("fine n = {} does not refine coarse n = {nc}", spec.n)));
            }
            let hier = MeshHierarchy::by_refinement(Mesh::unit_square(nc)?, (spec.n / nc).trailing_zeros() as usize);
            let fine = hier.fine();
            let bmesh = BoundaryMesh::induced(fine, spec.k)?;
            let layers = cfg.layers.resolve(hier.coarse().h());
            let ctx = LodContext::new(&hier, &data.coeff)?;
            let ms = ctx.ms_space(layers)?;
            let b_star = ctx.boundary_corrector(&bmesh, layers)?;
            let problem = OcpProblem::new(&ms, Some(&b_star), control_for(cfg.mode, fine, &bmesh, data)?, data)?;
            let result = problem.solve_pdas(&opts);
            let seconds = start.elapsed().as_secs_f64();
            let fine_space = StandardSpace::from_operator(fine, ctx.fine_operator().clone())?;
            let fine_problem = OcpProblem::new(&fine_space, None, control_for(Mode::Standard, fine, &bmesh, data)?, data)?;
            let fine_result = fine_problem.solve_pdas(&opts);
            let geometry = LevelGeometry {
                h: fine.h(),
                rho: bmesh.rho(),
                coarse_h: Some(hier.coarse().h()),
                layers,
                state_dofs: ms.dim(),
                controls: problem.control().len(),
            };
            f(LevelRun { problem: &problem, result, geometry, seconds, fine: Some((&fine_problem, fine_result)) })
        }
    }
}

/// Everything `with_level` produces for one level.
pub struct LevelRun<'a> {
    pub problem: &'a OcpProblem<'a>,
    pub result: neumann_ocp_core::Result<OcpSolution>,
    pub geometry: LevelGeometry,
    /// Wall clock time of space construction and solve.
    pub seconds: f64,
    /// Fine P1 problem on the same meshes (multiscale mode).
    pub fine: Option<(&'a OcpProblem<'a>, neumann_ocp_core::Result<OcpSolution>)>,
}

/// Results of one study level.
#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub spec: LevelSpec,
    pub geometry: LevelGeometry,
    pub errors: SolutionErrors,
    pub iterations: usize,
    pub seconds: f64,
    pub kkt: KktReport,
    pub cost_history: Vec<f64>,
    /// Lower-active, upper-active and inactive control counts.
    pub active_counts: [usize; 3],
    pub appendix: Option<AppendixReport>,
    /// KKT report of the fine P1 comparison solve (multiscale mode).
    pub fine_kkt: Option<KktReport>,
}

/// Least-squares rates over all levels.
#[derive(Clone, Debug)]
pub struct StudyFits {
    pub y: RateFit,
    pub u: RateFit,
    pub p: RateFit,
    /// Rate of `err_y + err_u`.
    pub combined: RateFit,
}

#[derive(Clone, Debug)]
pub struct StudyReport {
    pub sweep: Sweep,
    pub levels: Vec<LevelOutcome>,
    /// `None` with fewer than three levels.
    pub fits: Option<StudyFits>,
    /// Description of what the errors are measured against.
    pub reference: String,
    /// Optimality report of the numerical reference solve, if there is one.
    pub reference_kkt: Option<KktReport>,
}

impl StudyReport {
    /// Mesh size the rates refer to: `h`, `ρ` or `H`.
    pub fn sizes(&self) -> Vec<f64> {
        self.levels.iter().map(|l| sweep_size(self.sweep, &l.geometry)).collect()
    }
}

pub fn sweep_size(sweep: Sweep, g: &LevelGeometry) -> f64 {
    match sweep {
        Sweep::Mesh => g.h,
        Sweep::Boundary => g.rho,
        Sweep::Coarse => g.coarse_h.unwrap_or(g.h),
    }
}

fn counts(active: &[ActiveSet]) -> [usize; 3] {
    let c = |s| active.iter().filter(|&&a| a == s).count();
    [c(ActiveSet::Lower), c(ActiveSet::Upper), c(ActiveSet::Inactive)]
}

fn exact_errors(problem: &OcpProblem, sol: &OcpSolution, y: f64, u: f64, p: f64) -> SolutionErrors {
    let dy: Vec<f64> = sol.y.iter().map(|v| v - y).collect();
    let du: Vec<f64> = sol.u.iter().map(|v| v - u).collect();
    let dp: Vec<f64> = sol.p.iter().map(|v| v - p).collect();
    SolutionErrors {
        y_l2: problem.mass().quad_form(&dy).max(0.0).sqrt(),
        u_l2: problem.control().norm(&du),
        p_energy: problem.space().fine_operator().quad_form(&dp).max(0.0).sqrt(),
    }
}

/// What the errors of a study are measured against.
enum Against<'a> {
    Exact { y: f64, u: f64, p: f64 },
    Solution(&'a OcpProblem<'a>, &'a OcpSolution),
    /// The fine P1 solution computed with each multiscale level.
    FineLevel,
}

fn run_level(cfg: &StudyConfig, data: &OcpData, spec: &LevelSpec, against: &Against) -> Result<LevelOutcome, RunError> {
    with_level(cfg, data, spec, None, |run| {
        let sol = run.result?;
        let mut fine_kkt = None;
        let errors = match against {
            Against::Exact { y, u, p } => exact_errors(run.problem, &sol, *y, *u, *p),
            Against::Solution(rp, rs) => solution_errors(run.problem, &sol, rp, rs, control_subdivisions(spec))?,
            Against::FineLevel => {
                let (fp, fr) = run.fine.ok_or_else(|| RunError::Config("fine comparison needs multiscale mode".into()))?;
                let fs = fr?;
                fine_kkt = Some(fs.kkt);
                solution_errors(run.problem, &sol, fp, &fs, control_subdivisions(spec))?
            }
        };
        let appendix = if cfg.appendix_bounds {
            let fine_mesh = run.problem.space().fine_mesh();
            let constants = estimate_constants(&P1Space::new(fine_mesh), &data.coeff)?;
            Some(appendix_bounds_check(run.problem, &sol, constants))
        } else {
            None
        };
        Ok(LevelOutcome {
            spec: *spec,
            geometry: run.geometry,
            errors,
            iterations: sol.iterations,
            seconds: run.seconds,
            kkt: sol.kkt,
            cost_history: sol.cost_history.clone(),
            active_counts: counts(&sol.active),
            appendix,
            fine_kkt,
        })
    })
}

/// Runs `f(i)` for `i < count` on `jobs` threads; results come back in
/// index order.
pub fn run_pool<T: Send>(count: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, count.max(1));
    if jobs == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let out = f(i);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|o| o.expect("every level ran"))
        .collect()
}

/// Runs every level of a study against the case's reference.
///
/// * exact cases: the closed-form triple;
/// * mesh sweeps: the variational solution on the unit square refined by the
///   case's overkill factor beyond the finest level;
/// * boundary sweeps: the variational solution on the (fixed) level mesh,
///   which is the limit of the piecewise constant solutions as `ρ → 0`;
/// * coarse sweeps: the P1 solution on the fine mesh of each level.
pub fn run_study(cfg: &StudyConfig, jobs: usize) -> Result<StudyReport, RunError> {
    let case = case_for(cfg)?;
    let specs = level_specs(cfg);
    let data = &case.data;
    let levels_with = |against: &Against| -> Result<Vec<LevelOutcome>, RunError> {
        run_pool(specs.len(), jobs, |i| run_level(cfg, data, &specs[i], against)).into_iter().collect()
    };
    let mut reference_kkt = None;
    let (levels, reference) = match (&case.reference, cfg.sweep) {
        (Reference::Exact { y, u, p }, _) => {
            (levels_with(&Against::Exact { y: *y, u: *u, p: *p })?, format!("exact ({y}, {u}, {p})"))
        }
        (Reference::Overkill { .. }, Sweep::Coarse) => {
            (levels_with(&Against::FineLevel)?, "P1 solution on the fine mesh of each level".to_string())
        }
        (Reference::Overkill { factor }, sweep) => {
            let (n, what) = match sweep {
                Sweep::Mesh => {
                    let finest = specs.iter().map(|s| s.n).max().unwrap_or(cfg.n0);
                    (finest * factor, "variational solution")
                }
                _ => (cfg.n0, "variational solution on the level mesh"),
            };
            let mesh = Mesh::unit_square(n)?;
            let bmesh = BoundaryMesh::induced(&mesh, 1)?;
            let space = StandardSpace::new(&mesh, &data.coeff)?;
            let problem = OcpProblem::new(&space, None, ControlDiscretization::nodal(&mesh, &bmesh, data)?, data)?;
            let sol = problem.solve_pdas(&PdasOptions { tol: cfg.tol, maxit: cfg.maxit })?;
            let levels = levels_with(&Against::Solution(&problem, &sol))?;
            reference_kkt = Some(sol.kkt);
            (levels, format!("{what}, n = {n}"))
        }
    };
    let sizes: Vec<f64> = levels.iter().map(|l| sweep_size(cfg.sweep, &l.geometry)).collect();
    let fits = if levels.len() >= 3 {
        let col = |g: &dyn Fn(&SolutionErrors) -> f64| -> Vec<f64> { levels.iter().map(|l| g(&l.errors)).collect() };
        let fit = |e: Vec<f64>| fit_rates(&sizes, &e).ok();
        match (
            fit(col(&|e| e.y_l2)),
            fit(col(&|e| e.u_l2)),
            fit(col(&|e| e.p_energy)),
            fit(col(&|e| e.y_l2 + e.u_l2)),
        ) {
            (Some(y), Some(u), Some(p), Some(combined)) => Some(StudyFits { y, u, p, combined }),
            _ => None,
        }
    } else {
        None
    };
    Ok(StudyReport { sweep: cfg.sweep, levels, fits, reference, reference_kkt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> StudyConfig {
        StudyConfig::from_json(text).unwrap()
    }

    #[test]
    fn specs_follow_the_sweep() {
        let c = cfg(r#"{"case": "smooth-active", "mode": "standard", "n0": 4, "levels": 3, "k": 2}"#);
        let n: Vec<_> = level_specs(&c).iter().map(|s| (s.n, s.k)).collect();
        assert_eq!(n, vec![(4, 2), (8, 2), (16, 2)]);
        let c = cfg(r#"{"case": "smooth-active", "mode": "standard", "sweep": "boundary", "n0": 4, "levels": 3}"#);
        let n: Vec<_> = level_specs(&c).iter().map(|s| (s.n, s.k)).collect();
        assert_eq!(n, vec![(4, 1), (4, 2), (4, 4)]);
        let c = cfg(
            r#"{"case": "rough-random", "mode": "multiscale", "sweep": "coarse", "n0": 2, "levels": 3, "fine_n": 16}"#,
        );
        let n: Vec<_> = level_specs(&c).iter().map(|s| (s.n, s.coarse_n)).collect();
        assert_eq!(n, vec![(16, Some(2)), (16, Some(4)), (16, Some(8))]);
    }

    #[test]
    fn pool_keeps_order() {
        let out = run_pool(7, 3, |i| i * i);
        assert_eq!(out, vec![0, 1, 4, 9, 16, 25, 36]);
        assert_eq!(run_pool(0, 4, |i| i), Vec::<usize>::new());
    }

    #[test]
    fn exact_study_has_zero_errors() {
        let c = cfg(r#"{"case": "const-exact", "mode": "standard", "n0": 2, "levels": 3}"#);
        let r = run_study(&c, 2).unwrap();
        assert_eq!(r.levels.len(), 3);
        for l in &r.levels {
            assert!(l.errors.y_l2 < 1e-12 && l.errors.u_l2 < 1e-12 && l.errors.p_energy < 1e-12);
            assert!(l.kkt.max() <= 1e-10);
        }
    }
}
