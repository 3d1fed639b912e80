//! The implicit circular domain, exact circle/triangle clipping, and the
//! classification of macro and Clough-Tocher cells and faces.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::mesh::{contains, signed_area, CtMesh, Point};

/// Distance to the circle below which a mesh vertex counts as lying on it.
pub const TOL_GEOM: f64 = 1e-12;

/// Arcs are split so that no piece spans more than this angle.
const MAX_ARC_SPAN: f64 = PI / 8.0;

/// Total arc angle below which a cell does not count as cut.
const ARC_TOL: f64 = 1e-12;

/// Disk `{x : |x - center| < radius}` described by `phi(x) = |x - center|^2 - radius^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitCircle {
    pub center: Point,
    pub radius: f64,
}

impl ImplicitCircle {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::InvalidGeometry(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn from_radius_squared(center: Point, radius_squared: f64) -> Result<Self> {
        if !(radius_squared > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "squared radius must be positive, got {radius_squared}"
            )));
        }
        Self::new(center, radius_squared.sqrt())
    }

    /// Disk of center (0.5, 0.5) and squared radius 0.2 inside the unit square.
    pub fn reference() -> Self {
        Self { center: Point::new(0.5, 0.5), radius: 0.2f64.sqrt() }
    }

    pub fn phi(&self, x: &Point) -> f64 {
        (x - self.center).norm_squared() - self.radius * self.radius
    }

    /// Outward unit normal of the circle through the radial projection of `x`.
    pub fn normal(&self, x: &Point) -> Vector2<f64> {
        (x - self.center).normalize()
    }

    pub fn point_at(&self, angle: f64) -> Point {
        self.center + self.radius * Vector2::new(angle.cos(), angle.sin())
    }

    pub fn angle_of(&self, x: &Point) -> f64 {
        let d = x - self.center;
        d.y.atan2(d.x)
    }

    pub fn is_near(&self, x: &Point) -> bool {
        ((x - self.center).norm() - self.radius).abs() <= TOL_GEOM
    }

    /// Inside test with vertices close to the circle snapped to the inside.
    pub fn is_inside_snapped(&self, x: &Point) -> bool {
        (x - self.center).norm() <= self.radius + TOL_GEOM
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius
    }

    /// Decomposes `tri ∩ disk` into a convex chord polygon plus circular segments.
    pub fn clip_triangle(&self, tri: &[Point; 3]) -> CellClip {
        let inside = tri.map(|p| self.is_inside_snapped(&p));
        if inside.iter().all(|&b| b) {
            return CellClip { polygon: tri.to_vec(), arcs: Vec::new(), full: true };
        }

        let r2 = self.radius * self.radius;
        let mut walk: Vec<(Point, Mark)> = Vec::with_capacity(6);
        for i in 0..3 {
            let j = (i + 1) % 3;
            let (a, b) = (tri[i], tri[j]);
            if inside[i] {
                walk.push((a, Mark::Vertex));
            }
            let d = b - a;
            let f = a - self.center;
            let qa = d.norm_squared();
            let qb = f.dot(&d);
            let qc = f.norm_squared() - r2;
            let disc = qb * qb - qa * qc;
            match (inside[i], inside[j]) {
                (true, true) => {}
                // A snapped vertex is its own crossing point, so that every cell around it
                // sees the same arc endpoint.
                (true, false) if self.is_near(&a) => walk.push((a, Mark::Exit)),
                (false, true) if self.is_near(&b) => walk.push((b, Mark::Enter)),
                (true, false) => {
                    let t = ((-qb + disc.max(0.0).sqrt()) / qa).clamp(0.0, 1.0);
                    walk.push((a + t * d, Mark::Exit));
                }
                (false, true) => {
                    let t = ((-qb - disc.max(0.0).sqrt()) / qa).clamp(0.0, 1.0);
                    walk.push((a + t * d, Mark::Enter));
                }
                (false, false) => {
                    if disc > 0.0 {
                        let s = disc.sqrt();
                        let (t1, t2) = ((-qb - s) / qa, (-qb + s) / qa);
                        // Tangential contact has zero measure and is dropped.
                        if t1 > 0.0 && t2 < 1.0 && (t2 - t1) * qa.sqrt() > TOL_GEOM {
                            walk.push((a + t1 * d, Mark::Enter));
                            walk.push((a + t2 * d, Mark::Exit));
                        }
                    }
                }
            }
        }

        let mut polygon = Vec::with_capacity(walk.len() + 4);
        let mut arcs = Vec::new();
        if walk.is_empty() {
            if self.disk_inside(tri) {
                self.push_arc(0.0, 2.0 * PI, &mut polygon, &mut arcs);
            }
            return CellClip { polygon, arcs, full: false };
        }

        let n = walk.len();
        for idx in 0..n {
            let (p, mark) = walk[idx];
            polygon.push(p);
            if mark == Mark::Exit {
                let (q, next) = walk[(idx + 1) % n];
                debug_assert_eq!(next, Mark::Enter);
                let start = self.angle_of(&p);
                let span = (self.angle_of(&q) - start).rem_euclid(2.0 * PI);
                if span > ARC_TOL && contains(tri, &self.point_at(start + 0.5 * span), 1e-9) {
                    self.push_arc(start, span, &mut polygon, &mut arcs);
                }
            }
        }
        dedup_cyclic(&mut polygon);
        CellClip { polygon, arcs, full: false }
    }

    /// Appends interior subdivision points of an arc to `polygon` and its pieces to `arcs`.
    fn push_arc(&self, start: f64, span: f64, polygon: &mut Vec<Point>, arcs: &mut Vec<Arc>) {
        let pieces = (span / MAX_ARC_SPAN).ceil().max(1.0) as usize;
        let step = span / pieces as f64;
        for m in 0..pieces {
            if m > 0 || span >= 2.0 * PI {
                polygon.push(self.point_at(start + m as f64 * step));
            }
            arcs.push(Arc { start: start + m as f64 * step, span: step });
        }
    }

    fn disk_inside(&self, tri: &[Point; 3]) -> bool {
        if !contains(tri, &self.center, 0.0) {
            return false;
        }
        (0..3).all(|i| {
            let a = tri[i];
            let b = tri[(i + 1) % 3];
            let t = (b - a).normalize();
            let w = self.center - a;
            (w.x * t.y - w.y * t.x).abs() >= self.radius
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Vertex,
    Enter,
    Exit,
}

fn dedup_cyclic(points: &mut Vec<Point>) {
    points.dedup_by(|a, b| (*a - *b).norm() < 1e-14);
    while points.len() > 1 && (points[0] - points[points.len() - 1]).norm() < 1e-14 {
        points.pop();
    }
}

/// Counterclockwise circular arc `[start, start + span]` in angle space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub span: f64,
}

/// `K ∩ disk` as a convex chord polygon plus the circular segments cut off by
/// the chords of `arcs`. The arcs together form `K̄ ∩ Γ`.
#[derive(Debug, Clone)]
pub struct CellClip {
    pub polygon: Vec<Point>,
    pub arcs: Vec<Arc>,
    /// The cell lies inside the (snapped) disk.
    pub full: bool,
}

impl CellClip {
    pub fn is_empty(&self) -> bool {
        !self.full && self.arcs.is_empty() && polygon_area(&self.polygon) <= 0.0
    }

    pub fn arc_length(&self, radius: f64) -> f64 {
        radius * self.arcs.iter().map(|a| a.span).sum::<f64>()
    }

    pub fn area(&self, radius: f64) -> f64 {
        polygon_area(&self.polygon)
            + self
                .arcs
                .iter()
                .map(|a| 0.5 * radius * radius * (a.span - a.span.sin()))
                .sum::<f64>()
    }
}

pub fn polygon_area(p: &[Point]) -> f64 {
    if p.len() < 3 {
        return 0.0;
    }
    (1..p.len() - 1).map(|i| signed_area(&[p[0], p[i], p[i + 1]])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    Interior,
    Cut,
    Exterior,
}

/// Classification of the macro and refined meshes relative to the domain.
#[derive(Debug, Clone)]
pub struct CutTopology {
    pub macro_class: Vec<CellClass>,
    /// Class of each refined cell, inherited from its macro parent.
    pub ct_class: Vec<CellClass>,
    /// Refined cells with an interior or cut parent, in increasing order.
    pub active_cells: Vec<usize>,
    /// Position of a refined cell in `active_cells`.
    pub active_slot: Vec<Option<usize>>,
    /// Faces of cut refined cells that are interior to the active mesh (ghost-penalty faces).
    pub ghost_faces: Vec<usize>,
    /// All interior faces of the active refined mesh.
    pub active_interior_faces: Vec<usize>,
    /// Active cells that are cut or share a face with a cut cell.
    pub strip: Vec<bool>,
    /// Active cells outside the strip; the divergence-free region.
    pub strip_interior_cells: Vec<usize>,
    /// Mesh vertices within `TOL_GEOM` of the circle; their sign was snapped inside.
    pub degenerate_vertices: Vec<usize>,
}

impl CutTopology {
    pub fn is_active(&self, cell: usize) -> bool {
        self.active_slot[cell].is_some()
    }

    pub fn n_active(&self) -> usize {
        self.active_cells.len()
    }

    pub fn macros_of(&self, class: CellClass) -> Vec<usize> {
        (0..self.macro_class.len()).filter(|&t| self.macro_class[t] == class).collect()
    }

    pub fn cells_of(&self, class: CellClass) -> Vec<usize> {
        (0..self.ct_class.len()).filter(|&k| self.ct_class[k] == class).collect()
    }

    pub fn strip_cells(&self) -> Vec<usize> {
        (0..self.strip.len()).filter(|&k| self.strip[k]).collect()
    }

    pub fn is_cut(&self, cell: usize) -> bool {
        self.ct_class[cell] == CellClass::Cut
    }
}

/// Classifies every macro cell by exact circle/triangle intersection and derives the
/// refined cell, face, and strip sets.
pub fn classify(ct: &CtMesh, dom: &ImplicitCircle) -> CutTopology {
    let macro_mesh = &ct.macro_mesh;
    let macro_class: Vec<CellClass> = (0..macro_mesh.triangles.len())
        .map(|t| {
            let pts = macro_mesh.triangle_points(t);
            let clip = dom.clip_triangle(&pts);
            if clip.full {
                CellClass::Interior
            } else if clip.arcs.iter().map(|a| a.span).sum::<f64>() > ARC_TOL {
                CellClass::Cut
            } else {
                CellClass::Exterior
            }
        })
        .collect();
    let ct_class: Vec<CellClass> = ct.child_to_macro.iter().map(|&t| macro_class[t]).collect();

    let mut active_slot = vec![None; ct_class.len()];
    let mut active_cells = Vec::new();
    for (k, class) in ct_class.iter().enumerate() {
        if *class != CellClass::Exterior {
            active_slot[k] = Some(active_cells.len());
            active_cells.push(k);
        }
    }

    let mut ghost_faces = Vec::new();
    let mut active_interior_faces = Vec::new();
    let mut strip = vec![false; ct_class.len()];
    for (f, face) in ct.mesh.faces.iter().enumerate() {
        let (Some(a), Some(b)) = (face.cells[0], face.cells[1]) else { continue };
        if active_slot[a].is_none() || active_slot[b].is_none() {
            continue;
        }
        active_interior_faces.push(f);
        let (ca, cb) = (ct_class[a] == CellClass::Cut, ct_class[b] == CellClass::Cut);
        if ca || cb {
            ghost_faces.push(f);
            strip[a] = true;
            strip[b] = true;
        }
    }
    for &k in &active_cells {
        if ct_class[k] == CellClass::Cut {
            strip[k] = true;
        }
    }
    let strip_interior_cells = active_cells.iter().copied().filter(|&k| !strip[k]).collect();

    let degenerate_vertices = ct
        .mesh
        .vertices
        .iter()
        .enumerate()
        .filter(|(_, v)| dom.is_near(v))
        .map(|(i, _)| i)
        .collect();

    CutTopology {
        macro_class,
        ct_class,
        active_cells,
        active_slot,
        ghost_faces,
        active_interior_faces,
        strip,
        strip_interior_cells,
        degenerate_vertices,
    }
}

/// Areas of the strip, its interior complement, and the cut and interior macro domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripMeasures {
    pub strip: f64,
    pub strip_interior: f64,
    pub cut: f64,
    pub interior: f64,
    pub active: f64,
}

pub fn boundary_distance_strip(ct: &CtMesh, topo: &CutTopology) -> StripMeasures {
    let mut m = StripMeasures { strip: 0.0, strip_interior: 0.0, cut: 0.0, interior: 0.0, active: 0.0 };
    for &k in &topo.active_cells {
        let area = ct.mesh.signed_area(k);
        m.active += area;
        if topo.strip[k] {
            m.strip += area;
        } else {
            m.strip_interior += area;
        }
        match topo.ct_class[k] {
            CellClass::Interior => m.interior += area,
            CellClass::Cut => m.cut += area,
            CellClass::Exterior => unreachable!("inactive cell in active list"),
        }
    }
    m
}
