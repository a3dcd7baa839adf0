use std::io::Cursor;

use neumann_ocp::meshio::{read_mesh, write_mesh, MeshIoError};
use neumann_ocp::run::{run_solve, RunOptions};
use neumann_ocp::StudyConfig;
use neumann_ocp_core::mesh::Mesh;
use tempfile::TempDir;

#[test]
fn round_trip_is_exact() {
    let m = Mesh::unit_square(7).unwrap();
    let mut buf = Vec::new();
    write_mesh(&m, &mut buf).unwrap();
    let back = read_mesh(Cursor::new(&buf)).unwrap();
    assert_eq!(back.vertices(), m.vertices());
    assert_eq!(back.triangles(), m.triangles());
    assert_eq!(back.boundary_edges(), m.boundary_edges());
}

#[test]
fn parse_errors_name_the_line() {
    let cases = [
        ("3 1 3\n0 0\n1 0\n", 4),
        ("3 1 3\n0 0\n1 0\n0 x\n", 4),
        ("3 1\n", 1),
        ("3 1 3\n0 0\n1 0\n0 1\n0 1 2 3\n", 5),
    ];
    for (text, line) in cases {
        match read_mesh(Cursor::new(text)) {
            Err(MeshIoError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let trailing = "3 1 3\n0 0\n1 0\n0 1\n0 1 2\n0 1 0\n1 2 1\n2 0 3\n\nextra\n";
    assert!(matches!(read_mesh(Cursor::new(trailing)), Err(MeshIoError::Parse { line: 10, .. })));
}

#[test]
fn invalid_meshes_are_rejected() {
    // clockwise triangle
    let text = "3 1 3\n0 0\n1 0\n0 1\n0 2 1\n0 1 0\n1 2 1\n2 0 3\n";
    assert!(matches!(read_mesh(Cursor::new(text)), Err(MeshIoError::Invalid(_))));
}

#[test]
fn solve_on_a_mesh_file() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("square.mesh");
    write_mesh(&Mesh::unit_square(6).unwrap(), std::fs::File::create(&path).unwrap()).unwrap();
    let cfg = StudyConfig::from_json(&format!(
        r#"{{"case": "const-exact", "mode": "standard", "n0": 6, "mesh_file": {:?}}}"#,
        path.display().to_string()
    ))
    .unwrap();
    let opts = RunOptions { out: Some(tmp.path().join("out")), ..RunOptions::default() };
    let s = run_solve(&cfg, &opts).unwrap();
    assert!(s.kkt_residual <= 1e-10);
}
