//! The cut Scott-Vogelius pair on the active Clough-Tocher mesh: continuous
//! vector Lagrange elements of degree `k` for velocity and discontinuous
//! orthonormal polynomials of degree `k - 1` for pressure.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::CutTopology;
use crate::mesh::{barycentric, CtMesh, Point};
use crate::poly::{n_monomials, PolyBasis};
use crate::quadrature::{segment_rule, triangle_rule};

/// Barycentric multi-indices of the local Lagrange nodes: vertices, then the
/// nodes of edges `(0,1), (1,2), (2,0)` walking from the first to the second
/// vertex, then interior nodes.
pub fn lagrange_multi_indices(k: usize) -> Vec<[usize; 3]> {
    let mut out = vec![[k, 0, 0], [0, k, 0], [0, 0, k]];
    for (a, b) in [(0usize, 1usize), (1, 2), (2, 0)] {
        for m in 1..k {
            let mut idx = [0; 3];
            idx[a] = k - m;
            idx[b] = m;
            out.push(idx);
        }
    }
    for j in 1..k {
        for l in 1..k - j {
            out.push([k - j - l, j, l]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceField {
    Velocity,
    Pressure,
}

/// Values (`m = 0`) or gradients (`m = 1`) of all local scalar shape functions.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisEval {
    Values(Vec<f64>),
    Gradients(Vec<[f64; 2]>),
}

/// Normal-derivative jumps sampled at Gauss points of a face.
#[derive(Debug, Clone)]
pub struct JumpTrace {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// One entry per point for pressure, two (interleaved) for velocity.
    pub values: Vec<f64>,
    pub components: usize,
}

#[derive(Debug, Clone)]
pub struct SvSpace {
    pub degree: usize,
    /// Active refined cells; the slot of a cell is its position here.
    pub cells: Vec<usize>,
    pub slot: Vec<Option<usize>>,
    pub n_nodes: usize,
    pub node_points: Vec<Point>,
    n_local: usize,
    cell_nodes: Vec<usize>,
    velocity_basis: Vec<PolyBasis>,
    pressure_basis: Vec<PolyBasis>,
}

pub fn build_space(ct: &CtMesh, topo: &CutTopology, k: usize) -> Result<SvSpace> {
    if k < 2 {
        return Err(Error::InvalidDegree(k));
    }
    let mesh = &ct.mesh;
    let mut vertex_active = vec![false; mesh.vertices.len()];
    let mut face_active = vec![false; mesh.faces.len()];
    for &c in &topo.active_cells {
        for &v in &mesh.triangles[c] {
            vertex_active[v] = true;
        }
        for &f in &mesh.cell_faces[c] {
            face_active[f] = true;
        }
    }
    let mut node_points = Vec::new();
    let mut vertex_node = vec![usize::MAX; mesh.vertices.len()];
    for (v, _) in vertex_active.iter().enumerate().filter(|(_, a)| **a) {
        vertex_node[v] = node_points.len();
        node_points.push(mesh.vertices[v]);
    }
    let mut face_first_node = vec![usize::MAX; mesh.faces.len()];
    for (f, active) in face_active.iter().enumerate() {
        if !active {
            continue;
        }
        face_first_node[f] = node_points.len();
        let [a, b] = mesh.face_points(f);
        for m in 1..k {
            let t = m as f64 / k as f64;
            node_points.push(a + t * (b - a));
        }
    }

    let multi = lagrange_multi_indices(k);
    let n_local = multi.len();
    let mut cell_nodes = Vec::with_capacity(topo.active_cells.len() * n_local);
    let mut velocity_basis = Vec::with_capacity(topo.active_cells.len());
    let mut pressure_basis = Vec::with_capacity(topo.active_cells.len());
    let mut local_points = Vec::with_capacity(n_local);
    for &c in &topo.active_cells {
        let tri = mesh.triangles[c];
        let pts = mesh.triangle_points(c);
        local_points.clear();
        for idx in &multi {
            let w = idx.map(|i| i as f64 / k as f64);
            local_points.push(Point::from(w[0] * pts[0].coords + w[1] * pts[1].coords + w[2] * pts[2].coords));
        }
        for &gv in &tri {
            cell_nodes.push(vertex_node[gv]);
        }
        for (e, (a, _b)) in [(0usize, 1usize), (1, 2), (2, 0)].iter().enumerate() {
            let f = mesh.cell_faces[c][e];
            let forward = mesh.faces[f].vertices[0] == tri[*a];
            for m in 1..k {
                let along = if forward { m - 1 } else { k - m - 1 };
                cell_nodes.push(face_first_node[f] + along);
            }
        }
        for p in local_points.iter().skip(3 + 3 * (k - 1)) {
            cell_nodes.push(node_points.len());
            node_points.push(*p);
        }
        velocity_basis.push(PolyBasis::lagrange(&pts, k, &local_points));
        pressure_basis.push(PolyBasis::orthonormal(&pts, k - 1));
    }

    Ok(SvSpace {
        degree: k,
        cells: topo.active_cells.clone(),
        slot: topo.active_slot.clone(),
        n_nodes: node_points.len(),
        node_points,
        n_local,
        cell_nodes,
        velocity_basis,
        pressure_basis,
    })
}

impl SvSpace {
    pub fn n_velocity(&self) -> usize {
        2 * self.n_nodes
    }

    pub fn n_pressure_local(&self) -> usize {
        n_monomials(self.degree - 1)
    }

    pub fn n_pressure(&self) -> usize {
        self.cells.len() * self.n_pressure_local()
    }

    pub fn n_velocity_local(&self) -> usize {
        self.n_local
    }

    /// Global scalar node ids of the local shape functions of a slot.
    pub fn nodes(&self, slot: usize) -> &[usize] {
        &self.cell_nodes[slot * self.n_local..(slot + 1) * self.n_local]
    }

    /// Global velocity dof of scalar node `node`, component `comp`.
    pub fn velocity_dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn pressure_dofs(&self, slot: usize) -> std::ops::Range<usize> {
        let n = self.n_pressure_local();
        slot * n..(slot + 1) * n
    }

    pub fn velocity_basis(&self, slot: usize) -> &PolyBasis {
        &self.velocity_basis[slot]
    }

    pub fn pressure_basis(&self, slot: usize) -> &PolyBasis {
        &self.pressure_basis[slot]
    }

    pub fn slot_of(&self, cell: usize) -> Result<usize> {
        self.slot.get(cell).copied().flatten().ok_or(Error::InactiveCell(cell))
    }

    /// Shape function values (`order = 0`) or gradients (`order = 1`) on `cell` at `x`.
    pub fn eval_basis(&self, ct: &CtMesh, cell: usize, x: &Point, order: usize) -> Result<BasisEval> {
        let slot = self.slot_of(cell)?;
        let pts = ct.mesh.triangle_points(cell);
        if barycentric(&pts, x).iter().any(|&l| l < -1e-10) {
            return Err(Error::PointOutsideCell { cell, x: x.x, y: x.y });
        }
        let basis = &self.velocity_basis[slot];
        match order {
            0 => {
                let mut v = vec![0.0; self.n_local];
                basis.values(x, &mut v);
                Ok(BasisEval::Values(v))
            }
            1 => {
                let mut g = vec![[0.0; 2]; self.n_local];
                basis.gradients(x, &mut g);
                Ok(BasisEval::Gradients(g))
            }
            _ => Err(Error::InvalidDerivativeOrder { order, min: 0, max: 1 }),
        }
    }

    /// Nodal interpolant of a vector field.
    pub fn interpolate_velocity<F: Fn(&Point) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity()];
        for (node, p) in self.node_points.iter().enumerate() {
            let v = f(p);
            out[Self::velocity_dof(node, 0)] = v[0];
            out[Self::velocity_dof(node, 1)] = v[1];
        }
        out
    }

    /// Cellwise `L2` projection of a scalar field onto the pressure space.
    pub fn project_pressure<F: Fn(&Point) -> f64>(&self, ct: &CtMesh, f: F) -> Vec<f64> {
        let np = self.n_pressure_local();
        let mut out = vec![0.0; self.n_pressure()];
        let mut vals = vec![0.0; np];
        for (slot, &c) in self.cells.iter().enumerate() {
            let rule = triangle_rule(&ct.mesh.triangle_points(c), 2 * self.degree + 2);
            let basis = &self.pressure_basis[slot];
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                basis.values(x, &mut vals);
                let fx = f(x);
                for (j, v) in vals.iter().enumerate() {
                    out[slot * np + j] += w * fx * v;
                }
            }
        }
        out
    }

    fn gather_velocity(&self, coeffs: &[f64], slot: usize, comp: usize) -> Vec<f64> {
        self.nodes(slot).iter().map(|&n| coeffs[Self::velocity_dof(n, comp)]).collect()
    }

    pub fn velocity_at(&self, coeffs: &[f64], slot: usize, x: &Point) -> [f64; 2] {
        let basis = &self.velocity_basis[slot];
        [0, 1].map(|c| basis.combine(x, 0, 0, &self.gather_velocity(coeffs, slot, c)))
    }

    /// Velocity Jacobian, `grad[c] = [∂x u_c, ∂y u_c]`.
    pub fn velocity_gradient_at(&self, coeffs: &[f64], slot: usize, x: &Point) -> [[f64; 2]; 2] {
        let basis = &self.velocity_basis[slot];
        [0, 1].map(|c| {
            let local = self.gather_velocity(coeffs, slot, c);
            [basis.combine(x, 1, 0, &local), basis.combine(x, 0, 1, &local)]
        })
    }

    pub fn divergence_at(&self, coeffs: &[f64], slot: usize, x: &Point) -> f64 {
        let g = self.velocity_gradient_at(coeffs, slot, x);
        g[0][0] + g[1][1]
    }

    pub fn pressure_at(&self, coeffs: &[f64], slot: usize, x: &Point) -> f64 {
        self.pressure_basis[slot].combine(x, 0, 0, &coeffs[self.pressure_dofs(slot)])
    }

    /// Jump `[∂_n^order w]` across an interior face of the active mesh, relative to the
    /// stored face normal, sampled at `degree + 1` Gauss points.
    pub fn face_normal_jump(
        &self,
        ct: &CtMesh,
        face: usize,
        field: SpaceField,
        order: usize,
        coeffs: &[f64],
    ) -> Result<JumpTrace> {
        let (min, max) = match field {
            SpaceField::Velocity => (1, self.degree),
            SpaceField::Pressure => (0, self.degree - 1),
        };
        if order < min || order > max {
            return Err(Error::InvalidDerivativeOrder { order, min, max });
        }
        let (s1, s2) = self.face_slots(ct, face)?;
        let n = ct.mesh.face_normal(face);
        let [a, b] = ct.mesh.face_points(face);
        let (points, weights) = segment_rule(&a, &b, self.degree + 1);
        let components = if field == SpaceField::Velocity { 2 } else { 1 };
        let mut values = Vec::with_capacity(points.len() * components);
        for x in &points {
            match field {
                SpaceField::Velocity => {
                    for c in 0..2 {
                        let v1 = directional_combination(&self.velocity_basis[s1], x, &n, order, &self.gather_velocity(coeffs, s1, c));
                        let v2 = directional_combination(&self.velocity_basis[s2], x, &n, order, &self.gather_velocity(coeffs, s2, c));
                        values.push(v1 - v2);
                    }
                }
                SpaceField::Pressure => {
                    let v1 = directional_combination(&self.pressure_basis[s1], x, &n, order, &coeffs[self.pressure_dofs(s1)]);
                    let v2 = directional_combination(&self.pressure_basis[s2], x, &n, order, &coeffs[self.pressure_dofs(s2)]);
                    values.push(v1 - v2);
                }
            }
        }
        Ok(JumpTrace { points, weights, values, components })
    }

    /// Slots of the two cells of an interior face of the active mesh (owner first).
    pub fn face_slots(&self, ct: &CtMesh, face: usize) -> Result<(usize, usize)> {
        let f = ct.mesh.faces.get(face).ok_or(Error::BoundaryFace(face))?;
        match f.cells {
            [Some(a), Some(b)] => match (self.slot[a], self.slot[b]) {
                (Some(s1), Some(s2)) => Ok((s1, s2)),
                _ => Err(Error::BoundaryFace(face)),
            },
            _ => Err(Error::BoundaryFace(face)),
        }
    }
}

fn directional_combination(basis: &PolyBasis, x: &Point, n: &Vector2<f64>, order: usize, coeffs: &[f64]) -> f64 {
    let mut d = vec![0.0; basis.len()];
    basis.directional(x, n, order, &mut d);
    d.iter().zip(coeffs).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify, ImplicitCircle};
    use crate::mesh::{build_type1_mesh, clough_tocher_refine};
    use approx::assert_abs_diff_eq;

    fn setup(n: usize) -> (CtMesh, CutTopology) {
        let ct = clough_tocher_refine(&build_type1_mesh(n).unwrap());
        let topo = classify(&ct, &ImplicitCircle::reference());
        (ct, topo)
    }

    #[test]
    fn multi_indices_cover_all_nodes() {
        for k in 2..5 {
            let m = lagrange_multi_indices(k);
            assert_eq!(m.len(), n_monomials(k));
            assert!(m.iter().all(|i| i.iter().sum::<usize>() == k));
            let mut sorted = m.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), m.len());
        }
    }

    #[test]
    fn degree_one_rejected() {
        let (ct, topo) = setup(4);
        assert!(matches!(build_space(&ct, &topo, 1), Err(Error::InvalidDegree(1))));
    }

    #[test]
    fn partition_of_unity() {
        let (ct, topo) = setup(5);
        let space = build_space(&ct, &topo, 2).unwrap();
        for &c in topo.active_cells.iter().take(20) {
            let p = ct.mesh.triangle_points(c);
            let x = Point::from(0.2 * p[0].coords + 0.5 * p[1].coords + 0.3 * p[2].coords);
            let BasisEval::Values(v) = space.eval_basis(&ct, c, &x, 0).unwrap() else { panic!() };
            assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            let BasisEval::Gradients(g) = space.eval_basis(&ct, c, &x, 1).unwrap() else { panic!() };
            assert_abs_diff_eq!(g.iter().map(|g| g[0]).sum::<f64>(), 0.0, epsilon = 1e-11);
            assert_abs_diff_eq!(g.iter().map(|g| g[1]).sum::<f64>(), 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn eval_outside_cell_rejected() {
        let (ct, topo) = setup(5);
        let space = build_space(&ct, &topo, 2).unwrap();
        let c = topo.active_cells[0];
        assert!(matches!(
            space.eval_basis(&ct, c, &Point::new(5.0, 5.0), 0),
            Err(Error::PointOutsideCell { .. })
        ));
    }

    #[test]
    fn gradient_of_square() {
        let (ct, topo) = setup(5);
        let space = build_space(&ct, &topo, 2).unwrap();
        let u = space.interpolate_velocity(|p| [p.x * p.x, 0.0]);
        for (slot, &c) in space.cells.iter().enumerate().step_by(7) {
            let p = ct.mesh.triangle_points(c);
            let x = Point::from((p[0].coords + p[1].coords + p[2].coords) / 3.0);
            let g = space.velocity_gradient_at(&u, slot, &x);
            assert_abs_diff_eq!(g[0][0], 2.0 * x.x, epsilon = 1e-12);
            assert_abs_diff_eq!(g[0][1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pressure_dim() {
        let (ct, topo) = setup(10);
        let space = build_space(&ct, &topo, 2).unwrap();
        assert_eq!(space.n_pressure(), 3 * topo.n_active());
    }

    #[test]
    fn jump_order_checked() {
        let (ct, topo) = setup(5);
        let space = build_space(&ct, &topo, 2).unwrap();
        let f = topo.ghost_faces[0];
        let u = vec![0.0; space.n_velocity()];
        assert!(space.face_normal_jump(&ct, f, SpaceField::Velocity, 0, &u).is_err());
        assert!(space.face_normal_jump(&ct, f, SpaceField::Velocity, 3, &u).is_err());
        let p = vec![0.0; space.n_pressure()];
        assert!(space.face_normal_jump(&ct, f, SpaceField::Pressure, 2, &p).is_err());
    }

    #[test]
    fn boundary_face_rejected() {
        let (ct, topo) = setup(5);
        let space = build_space(&ct, &topo, 2).unwrap();
        let f = ct
            .mesh
            .faces
            .iter()
            .position(|f| f.cells.iter().flatten().filter(|&&c| topo.is_active(c)).count() == 1)
            .unwrap();
        let u = vec![0.0; space.n_velocity()];
        assert!(matches!(
            space.face_normal_jump(&ct, f, SpaceField::Velocity, 1, &u),
            Err(Error::BoundaryFace(_))
        ));
    }
}
