//! Structured background triangulations and their Clough-Tocher refinement.
//!
//! The background mesh is a uniform `N x N` grid of squares, each split along
//! the diagonal from its lower-left to its upper-right corner. Every triangle is
//! stored counterclockwise. Faces (edges) carry the one or two adjacent cells,
//! with the lower-indexed cell first; the stored face normal points out of that
//! first cell.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::vtk;

pub type Point = Point2<f64>;

/// An edge of a triangulation together with its adjacent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Endpoints with `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    /// Adjacent cells, lower index first. `cells[1]` is `None` on the mesh boundary.
    pub cells: [Option<usize>; 2],
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.cells[1].is_none()
    }

    /// The neighbour of `cell` across this face, if any.
    pub fn other(&self, cell: usize) -> Option<usize> {
        match self.cells {
            [Some(a), b] if a == cell => b,
            [a, Some(b)] if b == cell => a,
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub faces: Vec<Face>,
    /// `cell_faces[t][i]` is the face joining local vertices `i` and `i + 1`.
    pub cell_faces: Vec<[usize; 3]>,
    /// Nominal mesh size (side length of a grid square).
    pub h: f64,
}

impl BackgroundMesh {
    /// Builds face connectivity for an arbitrary counterclockwise triangle list.
    ///
    /// Faces are numbered in order of first appearance when scanning triangles
    /// and their local edges `(0,1), (1,2), (2,0)`.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, h: f64) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut faces: Vec<Face> = Vec::with_capacity(triangles.len() * 3 / 2 + 1);
        let mut cell_faces = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let id = *lookup.entry(key).or_insert_with(|| {
                    faces.push(Face { vertices: [key.0, key.1], cells: [None, None] });
                    faces.len() - 1
                });
                let face = &mut faces[id];
                if face.cells[0].is_none() {
                    face.cells[0] = Some(t);
                } else {
                    debug_assert!(face.cells[1].is_none(), "non-manifold edge {key:?}");
                    face.cells[1] = Some(t);
                }
                local[i] = id;
            }
            cell_faces.push(local);
        }
        Self { vertices, triangles, faces, cell_faces, h }
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(&self.triangle_points(t))
    }

    pub fn diameter(&self, t: usize) -> f64 {
        diameter(&self.triangle_points(t))
    }

    pub fn face_points(&self, f: usize) -> [Point; 2] {
        let [a, b] = self.faces[f].vertices;
        [self.vertices[a], self.vertices[b]]
    }

    pub fn face_length(&self, f: usize) -> f64 {
        let [a, b] = self.face_points(f);
        (b - a).norm()
    }

    /// Unit normal of face `f`, pointing out of its first (lower-indexed) cell.
    pub fn face_normal(&self, f: usize) -> Vector2<f64> {
        let face = &self.faces[f];
        let [a, b] = self.face_points(f);
        let t = (b - a).normalize();
        let mut n = Vector2::new(t.y, -t.x);
        let owner = face.cells[0].expect("face without adjacent cell");
        let centroid = centroid(&self.triangle_points(owner));
        if n.dot(&(a - centroid)) < 0.0 {
            n = -n;
        }
        n
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Writes the mesh as a legacy ASCII VTK unstructured grid.
    pub fn write_vtk<W: Write>(&self, out: W, cell_data: &[(&str, &[f64])]) -> std::io::Result<()> {
        vtk::write_triangles(out, "cutsv mesh", &self.vertices, &self.triangles, cell_data)
    }
}

pub fn signed_area(p: &[Point; 3]) -> f64 {
    let u = p[1] - p[0];
    let v = p[2] - p[0];
    0.5 * (u.x * v.y - u.y * v.x)
}

pub fn diameter(p: &[Point; 3]) -> f64 {
    let d01 = (p[1] - p[0]).norm();
    let d12 = (p[2] - p[1]).norm();
    let d20 = (p[0] - p[2]).norm();
    d01.max(d12).max(d20)
}

pub fn centroid(p: &[Point; 3]) -> Point {
    Point::new((p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0)
}

/// Barycentric coordinates of `x` with respect to the triangle `p`.
pub fn barycentric(p: &[Point; 3], x: &Point) -> [f64; 3] {
    let area = signed_area(p);
    let l0 = signed_area(&[*x, p[1], p[2]]) / area;
    let l1 = signed_area(&[p[0], *x, p[2]]) / area;
    [l0, l1, 1.0 - l0 - l1]
}

/// Closed point-in-triangle test with a relative barycentric tolerance.
pub fn contains(p: &[Point; 3], x: &Point, tol: f64) -> bool {
    barycentric(p, x).iter().all(|&l| l >= -tol)
}

/// Type-I triangulation of the unit square with `n` squares per side.
pub fn build_type1_mesh(n: usize) -> Result<BackgroundMesh> {
    build_type1_mesh_on_box(n, Point::new(0.0, 0.0), Point::new(1.0, 1.0))
}

/// Type-I triangulation of the axis-aligned box `[lower, upper]`.
pub fn build_type1_mesh_on_box(n: usize, lower: Point, upper: Point) -> Result<BackgroundMesh> {
    if n == 0 {
        return Err(Error::InvalidSubdivision(n));
    }
    let extent = upper - lower;
    if !(extent.x > 0.0 && extent.y > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "box [{lower}, {upper}] has non-positive extent"
        )));
    }
    let stride = n + 1;
    let mut vertices = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(
                lower.x + extent.x * i as f64 / n as f64,
                lower.y + extent.y * j as f64 / n as f64,
            ));
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = i + j * stride;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let h = extent.x.max(extent.y) / n as f64;
    Ok(BackgroundMesh::from_triangles(vertices, triangles, h))
}

/// Position of a refined face relative to the macro mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtFaceKind {
    /// Joins a macro vertex to the barycenter, inside one macro cell.
    MacroInterior,
    /// Lies on an edge of the macro mesh.
    MacroBoundary,
}

/// Clough-Tocher (barycentric) refinement of a background mesh.
///
/// Vertex numbering keeps the macro vertices first; barycenter `t` is vertex
/// `n_macro_vertices + t`. Child `c` of macro cell `t` has index `3t + c` and
/// vertices `(v_c, v_{c+1}, barycenter)`.
#[derive(Debug, Clone)]
pub struct CtMesh {
    pub macro_mesh: BackgroundMesh,
    pub mesh: BackgroundMesh,
    pub child_to_macro: Vec<usize>,
    pub macro_to_children: Vec<[usize; 3]>,
    pub barycenters: Vec<usize>,
    pub face_kinds: Vec<CtFaceKind>,
}

impl CtMesh {
    pub fn n_cells(&self) -> usize {
        self.mesh.triangles.len()
    }
}

pub fn clough_tocher_refine(macro_mesh: &BackgroundMesh) -> CtMesh {
    let nv = macro_mesh.vertices.len();
    let nt = macro_mesh.triangles.len();
    let mut vertices = macro_mesh.vertices.clone();
    vertices.reserve(nt);
    let mut triangles = Vec::with_capacity(3 * nt);
    let mut child_to_macro = Vec::with_capacity(3 * nt);
    let mut macro_to_children = Vec::with_capacity(nt);
    let mut barycenters = Vec::with_capacity(nt);
    for (t, tri) in macro_mesh.triangles.iter().enumerate() {
        let b = nv + t;
        vertices.push(centroid(&macro_mesh.triangle_points(t)));
        barycenters.push(b);
        for c in 0..3 {
            triangles.push([tri[c], tri[(c + 1) % 3], b]);
            child_to_macro.push(t);
        }
        macro_to_children.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    let mesh = BackgroundMesh::from_triangles(vertices, triangles, macro_mesh.h);
    let face_kinds = mesh
        .faces
        .iter()
        .map(|f| {
            if f.vertices[1] >= nv {
                CtFaceKind::MacroInterior
            } else {
                CtFaceKind::MacroBoundary
            }
        })
        .collect();
    CtMesh { macro_mesh: macro_mesh.clone(), mesh, child_to_macro, macro_to_children, barycenters, face_kinds }
}

/// All triangles sharing at least one vertex with triangle `t` (including `t`), sorted.
pub fn element_patch(mesh: &BackgroundMesh, t: usize) -> Result<Vec<usize>> {
    let tri = mesh
        .triangles
        .get(t)
        .ok_or(Error::InvalidTriangle { index: t, len: mesh.triangles.len() })?;
    Ok(mesh
        .triangles
        .iter()
        .enumerate()
        .filter(|(_, other)| other.iter().any(|v| tri.contains(v)))
        .map(|(i, _)| i)
        .collect())
}
