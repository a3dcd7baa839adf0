use neumann_ocp_core::fem::{
    assemble_a, assemble_boundary_coupling, assemble_domain_load, estimate_constants, P1Space,
};
use neumann_ocp_core::linalg::DenseCholesky;
use neumann_ocp_core::mesh::{BoundaryMesh, Mesh, MeshHierarchy};
use neumann_ocp_core::ocp::{solve_ocp_pdas, ControlDiscretization, OcpProblem, PdasOptions};
use neumann_ocp_core::space::{CoarseSpace, StandardSpace};
use neumann_ocp_core::verification::{
    appendix_bounds_check, benchmark_case, check_nontrivial_active_sets, finite_difference_check, oracle_solve_pg,
    ROUGH_SEED,
};

const CASES: [&str; 3] = ["const-exact", "smooth-active", "rough-random"];

#[test]
fn state_matches_dense_solve() {
    for (id, n) in [("smooth-active", 8), ("rough-random", 16), ("rough-random", 21)] {
        let data = benchmark_case(id, ROUGH_SEED).unwrap().data;
        let mesh = Mesh::unit_square(n).unwrap();
        assert!(mesh.num_vertices() <= 500);
        let bmesh = BoundaryMesh::induced(&mesh, 2).unwrap();
        let space = StandardSpace::new(&mesh, &data.coeff).unwrap();
        let control = ControlDiscretization::piecewise(&mesh, &bmesh, &data).unwrap();
        let problem = OcpProblem::new(&space, None, control, &data).unwrap();
        let u: Vec<f64> = (0..bmesh.len()).map(|e| 0.05 * ((e as f64) * 0.7).sin()).collect();
        let y = problem.state(&u).unwrap();

        let p1 = P1Space::new(&mesh);
        let k = assemble_a(&p1, &data.coeff).unwrap().to_dense();
        let mut rhs = assemble_domain_load(&p1, &*data.f);
        for (r, c) in rhs.iter_mut().zip(assemble_boundary_coupling(&p1, &bmesh).unwrap().matvec(&u)) {
            *r += c;
        }
        let dense = DenseCholesky::factor(&k).unwrap().solve(&rhs);
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = y.iter().zip(&dense).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff <= 1e-10 * scale, "{id} n={n}: {diff:e}");
    }
}

#[test]
fn standard_and_generic_spaces_agree_bitwise() {
    let data = benchmark_case("rough-random", ROUGH_SEED).unwrap().data;
    let hier = MeshHierarchy::by_refinement(Mesh::unit_square(12).unwrap(), 0);
    let mesh = hier.fine();
    let bmesh = BoundaryMesh::induced(mesh, 1).unwrap();
    let standard = StandardSpace::new(mesh, &data.coeff).unwrap();
    let generic = CoarseSpace::new(&hier, assemble_a(&P1Space::new(mesh), &data.coeff).unwrap()).unwrap();
    let a = solve_ocp_pdas(&standard, None, &bmesh, &data, 1e-10, 50).unwrap();
    let b = solve_ocp_pdas(&generic, None, &bmesh, &data, 1e-10, 50).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.y, b.y);
    assert_eq!(a.p, b.p);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn oracle_and_active_set_costs_agree() {
    for id in CASES {
        let data = benchmark_case(id, ROUGH_SEED).unwrap().data;
        for n in [5, 10] {
            let mesh = Mesh::unit_square(n).unwrap();
            let bmesh = BoundaryMesh::induced(&mesh, 1).unwrap();
            let space = StandardSpace::new(&mesh, &data.coeff).unwrap();
            let control = ControlDiscretization::piecewise(&mesh, &bmesh, &data).unwrap();
            let problem = OcpProblem::new(&space, None, control, &data).unwrap();
            let pd = problem.solve_pdas(&PdasOptions::default()).unwrap();
            let pg = oracle_solve_pg(&mesh, &bmesh, &data, 1e-12).unwrap();
            let (jd, jg) = (problem.cost(&pd.u).unwrap(), problem.cost(&pg.u).unwrap());
            assert!(jd <= jg + 1e-12 && jg <= jd + 1e-12, "{id} n={n}: {jd} vs {jg}");
        }
    }
}

#[test]
fn cost_decreases_along_iterates() {
    for id in CASES {
        let data = benchmark_case(id, ROUGH_SEED).unwrap().data;
        for n in [8, 32] {
            let mesh = Mesh::unit_square(n).unwrap();
            let bmesh = BoundaryMesh::induced(&mesh, 1).unwrap();
            let space = StandardSpace::new(&mesh, &data.coeff).unwrap();
            let control = ControlDiscretization::piecewise(&mesh, &bmesh, &data).unwrap();
            let sol = OcpProblem::new(&space, None, control, &data).unwrap().solve_pdas(&PdasOptions::default()).unwrap();
            // the cost is evaluated by expanding the square, so allow cancellation error
            for w in sol.cost_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(0.1), "{id} n={n}: {:?}", sol.cost_history);
            }
            if id == "smooth-active" {
                check_nontrivial_active_sets(&sol).unwrap();
            }
        }
    }
}

#[test]
fn reduced_gradient_matches_finite_differences() {
    let data = benchmark_case("rough-random", ROUGH_SEED).unwrap().data;
    let mesh = Mesh::unit_square(10).unwrap();
    for (k, nodal) in [(1, false), (3, false), (1, true)] {
        let bmesh = BoundaryMesh::induced(&mesh, k).unwrap();
        let space = StandardSpace::new(&mesh, &data.coeff).unwrap();
        let control = if nodal {
            ControlDiscretization::nodal(&mesh, &bmesh, &data).unwrap()
        } else {
            ControlDiscretization::piecewise(&mesh, &bmesh, &data).unwrap()
        };
        let problem = OcpProblem::new(&space, None, control, &data).unwrap();
        let u: Vec<f64> = problem.initial_control().iter().enumerate().map(|(i, v)| v + 0.01 * (i as f64).cos()).collect();
        let errs = finite_difference_check(&problem, &u, 5, 1e-5, 7).unwrap();
        assert!(errs.iter().all(|&e| e <= 1e-6), "k={k} nodal={nodal}: {errs:?}");
    }
}

#[test]
fn a_priori_bounds_hold() {
    for id in ["smooth-active", "rough-random"] {
        let data = benchmark_case(id, ROUGH_SEED).unwrap().data;
        for n in [8, 24] {
            let mesh = Mesh::unit_square(n).unwrap();
            let bmesh = BoundaryMesh::induced(&mesh, 1).unwrap();
            let space = StandardSpace::new(&mesh, &data.coeff).unwrap();
            let control = ControlDiscretization::piecewise(&mesh, &bmesh, &data).unwrap();
            let problem = OcpProblem::new(&space, None, control, &data).unwrap();
            let sol = problem.solve_pdas(&PdasOptions::default()).unwrap();
            let constants = estimate_constants(&P1Space::new(&mesh), &data.coeff).unwrap();
            let report = appendix_bounds_check(&problem, &sol, constants);
            assert!(report.all_hold(), "{id} n={n}: {:?}", report.checks);
        }
    }
}

#[test]
fn trace_constant_grows_under_refinement() {
    let coeff = benchmark_case("smooth-active", ROUGH_SEED).unwrap().data.coeff;
    let c: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| estimate_constants(&P1Space::new(&Mesh::unit_square(n).unwrap()), &coeff).unwrap().c_tr)
        .collect();
    assert!(c[0] <= c[1] * (1.0 + 1e-6) && c[1] <= c[2] * (1.0 + 1e-6), "{c:?}");
}
