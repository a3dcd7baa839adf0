use neumann_ocp_core::fem::q_rho_project;
use neumann_ocp_core::mesh::{BoundaryMesh, Mesh, MeshHierarchy};
use neumann_ocp_core::verification::fit_rates;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_square_covers_the_domain(n in 1usize..24) {
        let m = Mesh::unit_square(n).unwrap();
        prop_assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
        prop_assert_eq!(m.num_triangles(), 2 * n * n);
        prop_assert!((0..m.num_triangles()).all(|t| m.area(t) > 0.0));
        prop_assert!((m.total_area() - 1.0).abs() < 1e-12);
        prop_assert!((m.boundary_length() - 4.0).abs() < 1e-12);
        prop_assert_eq!(m.boundary_edges().len(), 4 * n);
    }

    #[test]
    fn induced_boundary_mesh_subdivides_edges(n in 1usize..16, k in 1usize..6) {
        let m = Mesh::unit_square(n).unwrap();
        let b = BoundaryMesh::induced(&m, k).unwrap();
        prop_assert_eq!(b.len(), 4 * n * k);
        prop_assert!((b.total_length() - 4.0).abs() < 1e-12);
        prop_assert!((b.rho() - 1.0 / (n * k) as f64).abs() < 1e-14);
        prop_assert!(b.check_compatible(&m).is_ok());
    }

    #[test]
    fn patches_grow_with_layers(n in 2usize..8, t in 0usize..128, l in 0usize..6) {
        let m = Mesh::unit_square(n).unwrap();
        let t = t % m.num_triangles();
        let small = m.patch(t, l).unwrap();
        let large = m.patch(t, l + 1).unwrap();
        prop_assert!(small.contains(&t));
        prop_assert!(small.iter().all(|s| large.contains(s)));
        let hier = MeshHierarchy::by_refinement(m, 1);
        let cs = hier.coarse_patch(t, l).unwrap();
        prop_assert!(cs.iter().all(|s| hier.coarse_patch(t, l + 1).unwrap().contains(s)));
    }

    #[test]
    fn refinement_areas_are_consistent(n in 1usize..8) {
        let hier = MeshHierarchy::by_refinement(Mesh::unit_square(n).unwrap(), 2);
        let mut child_area = vec![0.0; hier.coarse().num_triangles()];
        for (t, &p) in hier.parent().iter().enumerate() {
            child_area[p] += hier.fine().area(t);
        }
        for (t, a) in child_area.iter().enumerate() {
            prop_assert!((a - hier.coarse().area(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn fit_rates_tolerates_one_percent_noise(
        rate in 0.5f64..3.0,
        c in 1e-3f64..1e3,
        noise in prop::collection::vec(-0.01f64..0.01, 5),
    ) {
        let sizes: Vec<f64> = (0..5).map(|i| 0.5f64.powi(i + 2)).collect();
        let clean: Vec<f64> = sizes.iter().map(|h| c * h.powf(rate)).collect();
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(e, d)| e * (1.0 + d)).collect();
        let r0 = fit_rates(&sizes, &clean).unwrap().slope;
        let r1 = fit_rates(&sizes, &noisy).unwrap().slope;
        prop_assert!((r0 - rate).abs() < 1e-10);
        prop_assert!((r1 - r0).abs() <= 0.05);
    }

    #[test]
    fn fit_rates_is_scale_invariant(
        errors in prop::collection::vec(1e-8f64..1.0, 4),
        c in 1e-6f64..1e6,
    ) {
        let sizes = [0.5, 0.25, 0.125, 0.0625];
        let scaled: Vec<f64> = errors.iter().map(|e| c * e).collect();
        let a = fit_rates(&sizes, &errors).unwrap().slope;
        let b = fit_rates(&sizes, &scaled).unwrap().slope;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn q_rho_is_a_best_approximation(w in prop::collection::vec(-2.0f64..2.0, 16)) {
        let m = Mesh::unit_square(4).unwrap();
        let b = BoundaryMesh::induced(&m, 1).unwrap();
        // quadratic along each side, so the three-point rule below is exact
        let g = |p: [f64; 2]| p[0] * p[0] - 2.0 * p[1] * p[0] + p[1];
        let q = q_rho_project(&b, &g);
        let dist = |c: &[f64]| -> f64 {
            b.segments()
                .iter()
                .zip(c)
                .map(|(s, &ci)| {
                    let nodes = [(0.5 - 0.5 * 0.6f64.sqrt(), 5.0), (0.5, 8.0), (0.5 + 0.5 * 0.6f64.sqrt(), 5.0)];
                    nodes.iter().map(|&(t, wt)| wt / 18.0 * s.length * (g(s.point_at(t)) - ci).powi(2)).sum::<f64>()
                })
                .sum()
        };
        prop_assert!(dist(&q) <= dist(&w) + 1e-14);
    }
}
