//! Triangulations of polygonal domains, boundary partitions and coarse/fine
//! hierarchies.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)] // inherent methods win whenever std is linked
use num_traits::Float;

use crate::{Error, Point, Result};

const GEOM_TOL: f64 = 1e-12;

/// A boundary edge of a triangulation, oriented as in its triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub side: usize,
}

/// A conforming triangulation with counterclockwise triangles.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    h: f64,
    vt_offsets: Vec<usize>,
    vt_list: Vec<usize>,
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Validates and builds a mesh.
    ///
    /// Every triangle must have positive signed area and the boundary edges
    /// must be exactly the edges that belong to a single triangle.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        let nv = vertices.len();
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::invalid(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::invalid(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for i in 0..3 {
                *edge_count.entry(edge_key(tri[i], tri[(i + 1) % 3])).or_insert(0) += 1;
            }
        }
        if let Some((e, _)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::invalid(format!("edge {e:?} shared by more than two triangles")));
        }
        let mut listed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for be in &boundary_edges {
            let key = edge_key(be.vertices[0], be.vertices[1]);
            match edge_count.get(&key) {
                Some(1) => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "boundary edge {:?} is not an edge of exactly one triangle",
                        be.vertices
                    )))
                }
            }
            *listed.entry(key).or_insert(0) += 1;
        }
        if listed.values().any(|&c| c > 1) {
            return Err(Error::invalid("boundary edges overlap"));
        }
        let n_boundary = edge_count.values().filter(|&&c| c == 1).count();
        if n_boundary != listed.len() {
            return Err(Error::invalid(format!(
                "boundary edges cover {} of {} boundary edges",
                listed.len(),
                n_boundary
            )));
        }
        Ok(Self::from_parts_unchecked(vertices, triangles, boundary_edges))
    }

    fn from_parts_unchecked(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Self {
        let mut h: f64 = 0.0;
        for tri in &triangles {
            for i in 0..3 {
                h = h.max(distance(vertices[tri[i]], vertices[tri[(i + 1) % 3]]));
            }
        }
        let nv = vertices.len();
        let mut vt_offsets = vec![0usize; nv + 1];
        for tri in &triangles {
            for &v in tri {
                vt_offsets[v + 1] += 1;
            }
        }
        for i in 0..nv {
            vt_offsets[i + 1] += vt_offsets[i];
        }
        let mut fill = vt_offsets.clone();
        let mut vt_list = vec![0usize; vt_offsets[nv]];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vt_list[fill[v]] = t;
                fill[v] += 1;
            }
        }
        Mesh {
            vertices,
            triangles,
            boundary_edges,
            h,
            vt_offsets,
            vt_list,
        }
    }

    /// Structured mesh of `[0,1]²` with `2n²` right triangles.
    ///
    /// Cell `(i, j)` is cut along the diagonal through `(i, j)` when `i + j`
    /// is even and along the other one otherwise (union jack); boundary
    /// sides are numbered 0 (bottom), 1 (right), 2 (top), 3 (left).
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("unit square mesh needs n >= 1"));
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let step = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { 1.0 } else { i as f64 * step };
                let y = if j == n { 1.0 } else { j as f64 * step };
                vertices.push([x, y]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                if (i + j) % 2 == 0 {
                    triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                    triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                } else {
                    triangles.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                    triangles.push([id(i + 1, j + 1), id(i, j + 1), id(i + 1, j)]);
                }
            }
        }
        let mut boundary_edges = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary_edges.push(BoundaryEdge { vertices: [id(i, 0), id(i + 1, 0)], side: 0 });
        }
        for j in 0..n {
            boundary_edges.push(BoundaryEdge { vertices: [id(n, j), id(n, j + 1)], side: 1 });
        }
        for i in (0..n).rev() {
            boundary_edges.push(BoundaryEdge { vertices: [id(i + 1, n), id(i, n)], side: 2 });
        }
        for j in (0..n).rev() {
            boundary_edges.push(BoundaryEdge { vertices: [id(0, j + 1), id(0, j)], side: 3 });
        }
        Ok(Self::from_parts_unchecked(vertices, triangles, boundary_edges))
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        distance(a, b).max(distance(b, c)).max(distance(c, a))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn boundary_edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.boundary_edges[e].vertices;
        distance(self.vertices[a], self.vertices[b])
    }

    pub fn boundary_length(&self) -> f64 {
        (0..self.boundary_edges.len()).map(|e| self.boundary_edge_length(e)).sum()
    }

    /// Triangles that contain vertex `v`.
    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vt_list[self.vt_offsets[v]..self.vt_offsets[v + 1]]
    }

    /// Triangle ids within `layers` vertex-adjacency layers of triangle `t`.
    ///
    /// Zero layers is `{t}`; each further layer adds every triangle that
    /// shares a vertex with the previous patch. The result is sorted.
    pub fn patch(&self, t: usize, layers: usize) -> Result<Vec<usize>> {
        if t >= self.num_triangles() {
            return Err(Error::invalid(format!("unknown triangle {t}")));
        }
        let mut inside = vec![false; self.num_triangles()];
        inside[t] = true;
        let mut frontier = vec![t];
        self.grow(&mut inside, &mut frontier, layers);
        Ok(collect_marked(&inside))
    }

    /// Triangles within `layers` layers around vertex `v`; one layer is the
    /// star of `v`.
    pub fn vertex_patch(&self, v: usize, layers: usize) -> Result<Vec<usize>> {
        if v >= self.num_vertices() {
            return Err(Error::invalid(format!("unknown vertex {v}")));
        }
        if layers == 0 {
            return Err(Error::invalid("vertex patches need at least one layer"));
        }
        let mut inside = vec![false; self.num_triangles()];
        let mut frontier = Vec::new();
        for &t in self.vertex_triangles(v) {
            inside[t] = true;
            frontier.push(t);
        }
        self.grow(&mut inside, &mut frontier, layers - 1);
        Ok(collect_marked(&inside))
    }

    fn grow(&self, inside: &mut [bool], frontier: &mut Vec<usize>, layers: usize) {
        for _ in 0..layers {
            let mut next = Vec::new();
            for &s in frontier.iter() {
                for &v in &self.triangles[s] {
                    for &u in self.vertex_triangles(v) {
                        if !inside[u] {
                            inside[u] = true;
                            next.push(u);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            *frontier = next;
        }
    }

    /// Red refinement: every triangle is split into four similar children.
    ///
    /// Children of triangle `t` are `4t..4t+4`; new vertices are appended
    /// after the old ones, so old vertex ids are preserved.
    pub fn refine_uniform(&self) -> Refinement {
        let mut vertices = self.vertices.clone();
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *midpoints.entry(edge_key(a, b)).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                vertices.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut parent = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let mab = midpoint(a, b, &mut vertices);
            let mbc = midpoint(b, c, &mut vertices);
            let mca = midpoint(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]]);
            parent.extend_from_slice(&[t; 4]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for be in &self.boundary_edges {
            let [a, b] = be.vertices;
            let m = midpoint(a, b, &mut vertices);
            boundary_edges.push(BoundaryEdge { vertices: [a, m], side: be.side });
            boundary_edges.push(BoundaryEdge { vertices: [m, b], side: be.side });
        }
        Refinement {
            mesh: Self::from_parts_unchecked(vertices, triangles, boundary_edges),
            parent,
        }
    }
}

fn collect_marked(marks: &[bool]) -> Vec<usize> {
    marks.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Result of [`Mesh::refine_uniform`].
#[derive(Clone, Debug)]
pub struct Refinement {
    pub mesh: Mesh,
    /// Parent triangle of every child triangle.
    pub parent: Vec<usize>,
}

pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    Mesh::unit_square(n)
}

pub fn refine_uniform(mesh: &Mesh) -> Refinement {
    mesh.refine_uniform()
}

/// One straight piece of the boundary partition, lying inside a single
/// boundary edge of the underlying mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment {
    pub start: Point,
    pub end: Point,
    pub length: f64,
    /// Index into [`Mesh::boundary_edges`].
    pub parent_edge: usize,
    /// Position of `start` and `end` along the parent edge, in `[0, 1]`.
    pub t0: f64,
    pub t1: f64,
}

impl BoundarySegment {
    pub fn point_at(&self, s: f64) -> Point {
        [
            self.start[0] + s * (self.end[0] - self.start[0]),
            self.start[1] + s * (self.end[1] - self.start[1]),
        ]
    }

    pub fn midpoint(&self) -> Point {
        self.point_at(0.5)
    }
}

/// A partition of the boundary into straight segments, each inside one
/// boundary edge of the mesh it was built from.
#[derive(Clone, Debug)]
pub struct BoundaryMesh {
    segments: Vec<BoundarySegment>,
    edge_ranges: Vec<Range<usize>>,
    rho: f64,
    num_mesh_vertices: usize,
}

impl BoundaryMesh {
    /// Splits every boundary edge of `mesh` into `k` equal segments.
    pub fn induced(mesh: &Mesh, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("boundary refinement factor must be >= 1"));
        }
        let mut segments = Vec::with_capacity(k * mesh.boundary_edges().len());
        let mut edge_ranges = Vec::with_capacity(mesh.boundary_edges().len());
        let mut rho: f64 = 0.0;
        for (e, be) in mesh.boundary_edges().iter().enumerate() {
            let (a, b) = (mesh.vertices()[be.vertices[0]], mesh.vertices()[be.vertices[1]]);
            let first = segments.len();
            for i in 0..k {
                let t0 = i as f64 / k as f64;
                let t1 = if i + 1 == k { 1.0 } else { (i + 1) as f64 / k as f64 };
                let start = lerp(a, b, t0);
                let end = lerp(a, b, t1);
                let length = distance(start, end);
                rho = rho.max(length);
                segments.push(BoundarySegment { start, end, length, parent_edge: e, t0, t1 });
            }
            edge_ranges.push(first..segments.len());
        }
        Ok(BoundaryMesh {
            segments,
            edge_ranges,
            rho,
            num_mesh_vertices: mesh.num_vertices(),
        })
    }

    pub fn segments(&self) -> &[BoundarySegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Maximum segment length.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.length).collect()
    }

    /// Segments lying on boundary edge `e` of the parent mesh.
    pub fn edge_segments(&self, e: usize) -> Range<usize> {
        self.edge_ranges[e].clone()
    }

    /// Checks that this partition was built on `mesh`.
    pub fn check_compatible(&self, mesh: &Mesh) -> Result<()> {
        if self.num_mesh_vertices != mesh.num_vertices()
            || self.edge_ranges.len() != mesh.boundary_edges().len()
        {
            return Err(Error::IncompatibleMesh(format!(
                "boundary mesh built on {} vertices / {} edges, mesh has {} / {}",
                self.num_mesh_vertices,
                self.edge_ranges.len(),
                mesh.num_vertices(),
                mesh.boundary_edges().len()
            )));
        }
        for (e, be) in mesh.boundary_edges().iter().enumerate() {
            let (a, b) = (mesh.vertices()[be.vertices[0]], mesh.vertices()[be.vertices[1]]);
            for s in &self.segments[self.edge_ranges[e].clone()] {
                if distance(s.start, lerp(a, b, s.t0)) > 1e-10 || distance(s.end, lerp(a, b, s.t1)) > 1e-10 {
                    return Err(Error::IncompatibleMesh(format!(
                        "segment on edge {e} does not lie on the mesh edge"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Segment that contains the point at parameter `t` of boundary edge `e`.
    pub fn segment_on_edge(&self, e: usize, t: f64) -> usize {
        let range = self.edge_ranges[e].clone();
        let segs = &self.segments[range.clone()];
        let i = segs.partition_point(|s| s.t1 < t);
        range.start + i.min(segs.len() - 1)
    }
}

pub fn induced_boundary_mesh(mesh: &Mesh, k: usize) -> Result<BoundaryMesh> {
    BoundaryMesh::induced(mesh, k)
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
pub fn barycentric(p: Point, [a, b, c]: [Point; 3]) -> [f64; 3] {
    let area = signed_area(a, b, c);
    let l0 = signed_area(p, b, c) / area;
    let l1 = signed_area(a, p, c) / area;
    [l0, l1, 1.0 - l0 - l1]
}

/// A coarse mesh together with a nested fine mesh.
#[derive(Clone, Debug)]
pub struct MeshHierarchy {
    coarse: Mesh,
    fine: Mesh,
    parent: Vec<usize>,
}

impl MeshHierarchy {
    /// Checks that every fine triangle lies inside its parent.
    pub fn new(coarse: Mesh, fine: Mesh, parent: Vec<usize>) -> Result<Self> {
        if parent.len() != fine.num_triangles() {
            return Err(Error::IncompatibleHierarchy(format!(
                "parent map has {} entries for {} fine triangles",
                parent.len(),
                fine.num_triangles()
            )));
        }
        if coarse.h() < fine.h() * (1.0 - 1e-12) {
            return Err(Error::IncompatibleHierarchy("coarse mesh is finer than fine mesh".into()));
        }
        for (t, &p) in parent.iter().enumerate() {
            if p >= coarse.num_triangles() {
                return Err(Error::IncompatibleHierarchy(format!("fine triangle {t} has unknown parent {p}")));
            }
            let ct = coarse.triangle_points(p);
            for x in fine.triangle_points(t) {
                if barycentric(x, ct).iter().any(|&l| l < -1e-10) {
                    return Err(Error::IncompatibleHierarchy(format!(
                        "fine triangle {t} is not contained in coarse triangle {p}"
                    )));
                }
            }
        }
        Ok(MeshHierarchy { coarse, fine, parent })
    }

    /// Builds the fine mesh by `levels` red refinements of `coarse`.
    pub fn by_refinement(coarse: Mesh, levels: usize) -> Self {
        let mut fine = coarse.clone();
        let mut parent: Vec<usize> = (0..coarse.num_triangles()).collect();
        for _ in 0..levels {
            let r = fine.refine_uniform();
            parent = r.parent.iter().map(|&p| parent[p]).collect();
            fine = r.mesh;
        }
        MeshHierarchy { coarse, fine, parent }
    }

    pub fn coarse(&self) -> &Mesh {
        &self.coarse
    }

    pub fn fine(&self) -> &Mesh {
        &self.fine
    }

    /// Coarse parent of every fine triangle.
    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn coarse_patch(&self, t: usize, layers: usize) -> Result<Vec<usize>> {
        self.coarse.patch(t, layers)
    }
}

pub fn coarse_patch(hier: &MeshHierarchy, t: usize, layers: usize) -> Result<Vec<usize>> {
    hier.coarse_patch(t, layers)
}

/// Uniform bucket grid over the triangles of a mesh for point location.
#[derive(Clone, Debug)]
pub struct TriangleLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> TriangleLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (lo, hi) = bounding_box(mesh.vertices());
        let n_cells = (mesh.num_triangles() as f64).sqrt().ceil().max(1.0);
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / n_cells).max(1e-300);
        let nx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let cell_of = |p: Point| -> (usize, usize) {
            let i = (((p[0] - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let j = (((p[1] - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
            (i, j)
        };
        let mut counts = vec![0usize; nx * ny + 1];
        let mut ranges = Vec::with_capacity(mesh.num_triangles());
        for t in 0..mesh.num_triangles() {
            let pts = mesh.triangle_points(t);
            let (blo, bhi) = bounding_box(&pts);
            let (i0, j0) = cell_of([blo[0] - GEOM_TOL, blo[1] - GEOM_TOL]);
            let (i1, j1) = cell_of([bhi[0] + GEOM_TOL, bhi[1] + GEOM_TOL]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
            ranges.push((i0, j0, i1, j1));
        }
        for c in 0..nx * ny {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; counts[nx * ny]];
        for (t, &(i0, j0, i1, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    items[fill[j * nx + i]] = t;
                    fill[j * nx + i] += 1;
                }
            }
        }
        TriangleLocator { mesh, origin: lo, cell, nx, ny, offsets: counts, items }
    }

    /// Triangle containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let i = (((p[0] - self.origin[0]) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((p[1] - self.origin[1]) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        let c = j * self.nx + i;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.items[self.offsets[c]..self.offsets[c + 1]] {
            let l = barycentric(p, self.mesh.triangle_points(t));
            let worst = l[0].min(l[1]).min(l[2]);
            if worst >= -1e-10 {
                return Some((t, l));
            }
            if best.map_or(true, |b| worst > b.2) {
                best = Some((t, l, worst));
            }
        }
        best.filter(|b| b.2 >= -1e-8).map(|b| (b.0, b.1))
    }
}

fn bounding_box(points: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

/// Locates points on the boundary of a mesh: returns the boundary edge and
/// the parameter along it.
#[derive(Clone, Debug)]
pub struct BoundaryLocator<'a> {
    mesh: &'a Mesh,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    offsets: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> BoundaryLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let (lo, hi) = bounding_box(mesh.vertices());
        let n_cells = (mesh.boundary_edges().len() as f64).max(1.0);
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / n_cells).max(1e-300);
        let nx = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
        let cell_of = |p: Point| -> (usize, usize) {
            let i = (((p[0] - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let j = (((p[1] - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
            (i, j)
        };
        let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (e, be) in mesh.boundary_edges().iter().enumerate() {
            let pts = [mesh.vertices()[be.vertices[0]], mesh.vertices()[be.vertices[1]]];
            let (blo, bhi) = bounding_box(&pts);
            let (i0, j0) = cell_of([blo[0] - GEOM_TOL, blo[1] - GEOM_TOL]);
            let (i1, j1) = cell_of([bhi[0] + GEOM_TOL, bhi[1] + GEOM_TOL]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells.entry(j * nx + i).or_default().push(e);
                }
            }
        }
        let mut offsets = vec![0usize; nx * ny + 1];
        let mut items = Vec::new();
        for c in 0..nx * ny {
            if let Some(list) = cells.get(&c) {
                items.extend_from_slice(list);
            }
            offsets[c + 1] = items.len();
        }
        BoundaryLocator { mesh, origin: lo, cell, nx, ny, offsets, items }
    }

    /// Boundary edge containing `p` (within `1e-9`) and the parameter of `p`
    /// along it.
    pub fn locate(&self, p: Point) -> Option<(usize, f64)> {
        let i = (((p[0] - self.origin[0]) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let j = (((p[1] - self.origin[1]) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        let c = j * self.nx + i;
        for &e in &self.items[self.offsets[c]..self.offsets[c + 1]] {
            let [a, b] = self.mesh.boundary_edges()[e].vertices;
            let (pa, pb) = (self.mesh.vertices()[a], self.mesh.vertices()[b]);
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let t = ((p[0] - pa[0]) * d[0] + (p[1] - pa[1]) * d[1]) / len2;
            if !(-1e-12..=1.0 + 1e-12).contains(&t) {
                continue;
            }
            let q = lerp(pa, pb, t);
            if distance(p, q) <= 1e-9 {
                return Some((e, t.clamp(0.0, 1.0)));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let m = Mesh::unit_square(1).unwrap();
        assert_eq!((m.num_triangles(), m.num_vertices(), m.boundary_edges().len()), (2, 4, 4));
        let m = Mesh::unit_square(2).unwrap();
        assert_eq!((m.num_triangles(), m.num_vertices()), (8, 9));
        assert!((m.h() - 2f64.sqrt() / 2.0).abs() < 1e-15);
        let m = Mesh::unit_square(4).unwrap();
        assert!((m.boundary_length() - 4.0).abs() < 1e-12);
        assert!(matches!(Mesh::unit_square(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unit_square_passes_validation() {
        let m = Mesh::unit_square(3).unwrap();
        let again = Mesh::new(m.vertices().to_vec(), m.triangles().to_vec(), m.boundary_edges().to_vec());
        assert!(again.is_ok());
    }

    #[test]
    fn validation_rejects_bad_meshes() {
        let m = Mesh::unit_square(1).unwrap();
        let mut tris = m.triangles().to_vec();
        tris[0].swap(1, 2);
        assert!(Mesh::new(m.vertices().to_vec(), tris, m.boundary_edges().to_vec()).is_err());
        let mut edges = m.boundary_edges().to_vec();
        edges.pop();
        assert!(Mesh::new(m.vertices().to_vec(), m.triangles().to_vec(), edges).is_err());
        let mut edges = m.boundary_edges().to_vec();
        edges.push(edges[0]);
        assert!(Mesh::new(m.vertices().to_vec(), m.triangles().to_vec(), edges).is_err());
    }

    #[test]
    fn refinement_quadruples_and_halves_h() {
        let m = Mesh::unit_square(1).unwrap();
        let r = m.refine_uniform();
        assert_eq!(r.mesh.num_triangles(), 8);
        assert!((r.mesh.h() - m.h() / 2.0).abs() < 1e-15);
        let r2 = r.mesh.refine_uniform();
        assert_eq!(r2.mesh.num_triangles(), 32);
        assert!((r2.mesh.total_area() - 1.0).abs() < 1e-12);
        assert!((r2.mesh.boundary_length() - 4.0).abs() < 1e-12);
        assert!(Mesh::new(
            r2.mesh.vertices().to_vec(),
            r2.mesh.triangles().to_vec(),
            r2.mesh.boundary_edges().to_vec()
        )
        .is_ok());
    }

    #[test]
    fn refined_vertices_are_vertices_or_midpoints_of_parent() {
        let m = Mesh::unit_square(2).unwrap();
        let r = m.refine_uniform();
        let mut allowed: Vec<Point> = m.vertices().to_vec();
        for tri in m.triangles() {
            for i in 0..3 {
                let (a, b) = (m.vertices()[tri[i]], m.vertices()[tri[(i + 1) % 3]]);
                allowed.push(lerp(a, b, 0.5));
            }
        }
        for v in r.mesh.vertices() {
            assert!(allowed.iter().any(|a| distance(*a, *v) < 1e-14));
        }
    }

    #[test]
    fn induced_boundary_meshes() {
        let m1 = Mesh::unit_square(1).unwrap();
        let b = BoundaryMesh::induced(&m1, 1).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.segments().iter().all(|s| (s.length - 1.0).abs() < 1e-15));
        let b = BoundaryMesh::induced(&m1, 2).unwrap();
        assert_eq!(b.len(), 8);
        assert!(b.segments().iter().all(|s| (s.length - 0.5).abs() < 1e-15));
        let m2 = Mesh::unit_square(2).unwrap();
        let b = BoundaryMesh::induced(&m2, 3).unwrap();
        assert_eq!(b.len(), 24);
        assert!((b.rho() - 1.0 / 6.0).abs() < 1e-15);
        assert!((b.total_length() - 4.0).abs() < 1e-12);
        assert!(BoundaryMesh::induced(&m2, 0).is_err());
        assert!(b.check_compatible(&m2).is_ok());
        assert!(b.check_compatible(&m1).is_err());
    }

    #[test]
    fn patches() {
        let coarse = Mesh::unit_square(2).unwrap();
        let hier = MeshHierarchy::by_refinement(coarse, 1);
        for t in 0..8 {
            assert_eq!(hier.coarse_patch(t, 0).unwrap(), vec![t]);
            assert_eq!(hier.coarse_patch(t, 1).unwrap(), (0..8).collect::<Vec<_>>());
        }
        assert!(hier.coarse_patch(8, 0).is_err());
        let m = Mesh::unit_square(6).unwrap();
        let mut prev = m.patch(17, 0).unwrap();
        for l in 1..10 {
            let next = m.patch(17, l).unwrap();
            assert!(prev.iter().all(|t| next.contains(t)));
            prev = next;
        }
        assert_eq!(prev.len(), m.num_triangles());
        // Both bottom corners lie on the diagonal of their cell.
        assert_eq!(m.vertex_patch(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(m.vertex_patch(6, 1).unwrap(), vec![10, 11]);
    }

    #[test]
    fn hierarchy_nesting() {
        let hier = MeshHierarchy::by_refinement(Mesh::unit_square(2).unwrap(), 2);
        assert_eq!(hier.fine().num_triangles(), 8 * 16);
        let rebuilt = MeshHierarchy::new(hier.coarse().clone(), hier.fine().clone(), hier.parent().to_vec());
        assert!(rebuilt.is_ok());
        let mut bad = hier.parent().to_vec();
        bad[0] = 7;
        assert!(MeshHierarchy::new(hier.coarse().clone(), hier.fine().clone(), bad).is_err());
    }

    #[test]
    fn locators() {
        let m = Mesh::unit_square(5).unwrap();
        let loc = TriangleLocator::new(&m);
        for p in [[0.0, 0.0], [1.0, 1.0], [0.31, 0.77], [0.2, 0.2]] {
            let (t, l) = loc.locate(p).unwrap();
            let pts = m.triangle_points(t);
            let q = [
                l[0] * pts[0][0] + l[1] * pts[1][0] + l[2] * pts[2][0],
                l[0] * pts[0][1] + l[1] * pts[1][1] + l[2] * pts[2][1],
            ];
            assert!(distance(p, q) < 1e-12);
        }
        assert!(loc.locate([1.5, 0.5]).is_none());
        let bl = BoundaryLocator::new(&m);
        let (e, t) = bl.locate([0.5, 0.0]).unwrap();
        assert_eq!(m.boundary_edges()[e].side, 0);
        assert!((t - 0.5).abs() < 1e-12);
        assert!(bl.locate([0.5, 0.5]).is_none());
    }
}
