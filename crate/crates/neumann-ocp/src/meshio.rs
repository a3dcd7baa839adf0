//! Line-oriented text format for triangulations.
//!
//! ```text
//! NV NT NE
//! x y                 (NV lines)
//! i j k               (NT lines, 0-based, counterclockwise)
//! i j side_id         (NE lines)
//! ```
//!
//! Tokens are separated by arbitrary whitespace.

use std::io::{BufRead, Write};

use neumann_ocp_core::mesh::{BoundaryEdge, Mesh};

#[derive(Debug, thiserror::Error)]
pub enum MeshIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    Invalid(#[from] neumann_ocp_core::Error),
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-blank line split into tokens.
    fn next_tokens(&mut self, what: &str) -> Result<Vec<String>, MeshIoError> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.err(format!("unexpected end of file, expected {what}"))),
                Some(l) => {
                    let l = l?;
                    let toks: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
                    if !toks.is_empty() {
                        return Ok(toks);
                    }
                }
            }
        }
    }

    fn err(&self, msg: String) -> MeshIoError {
        MeshIoError::Parse { line: self.line, msg }
    }

    fn record<T: std::str::FromStr, const N: usize>(&mut self, what: &str) -> Result<[T; N], MeshIoError> {
        let toks = self.next_tokens(what)?;
        if toks.len() != N {
            return Err(self.err(format!("expected {N} fields for {what}, found {}", toks.len())));
        }
        let mut out = Vec::with_capacity(N);
        for t in &toks {
            out.push(t.parse::<T>().map_err(|_| self.err(format!("cannot parse '{t}' in {what}")))?);
        }
        Ok(out.try_into().unwrap_or_else(|_| unreachable!()))
    }
}

pub fn read_mesh<R: BufRead>(reader: R) -> Result<Mesh, MeshIoError> {
    let mut lines = Lines { inner: reader.lines(), line: 0 };
    let [nv, nt, ne] = lines.record::<usize, 3>("header")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let [x, y] = lines.record::<f64, 2>("vertex")?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(lines.err("non-finite coordinate".into()));
        }
        vertices.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        triangles.push(lines.record::<usize, 3>("triangle")?);
    }
    let mut edges = Vec::with_capacity(ne);
    for _ in 0..ne {
        let [a, b, side] = lines.record::<usize, 3>("boundary edge")?;
        edges.push(BoundaryEdge { vertices: [a, b], side });
    }
    while let Some(l) = lines.inner.next() {
        lines.line += 1;
        if !l?.trim().is_empty() {
            return Err(lines.err("trailing data after the last boundary edge".into()));
        }
    }
    Ok(Mesh::new(vertices, triangles, edges)?)
}

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.boundary_edges().len())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {}", v[0], v[1])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    for e in mesh.boundary_edges() {
        writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], e.side)?;
    }
    w.flush()
}

pub fn load_mesh(path: &std::path::Path) -> Result<Mesh, MeshIoError> {
    read_mesh(std::io::BufReader::new(std::fs::File::open(path)?))
}
