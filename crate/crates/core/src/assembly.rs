//! Assembly of the bilinear and linear forms of the cut Scott-Vogelius method.
//!
//! The velocity form is kept in separate parts (viscous, grad-div, Nitsche
//! consistency, boundary penalty, ghost penalty) so that different `γ` and `η`
//! can be combined without reassembly. Volume terms are integrated over
//! `K ∩ Ω` only.

use std::path::Path;

use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};
use crate::geometry::{CellClass, CutTopology, ImplicitCircle};
use crate::mesh::{CtMesh, Point};
use crate::quadrature::{cut_volume_rule_from_clip, interface_rule_from_clip, segment_rule, QuadRule};
use crate::space::SvSpace;

pub type VectorField<'a> = &'a dyn Fn(&Point) -> [f64; 2];

/// A parameter given either as a literal or as `c / h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamRule {
    Constant(f64),
    InverseH(f64),
}

impl ParamRule {
    pub fn resolve(&self, h: f64) -> f64 {
        match *self {
            ParamRule::Constant(v) => v,
            ParamRule::InverseH(c) => c / h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    /// Grad-div parameter `γ >= 0`.
    pub gamma: ParamRule,
    /// Nitsche penalty `η > 0`.
    pub eta: ParamRule,
    pub degree: usize,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self { gamma: ParamRule::Constant(0.0), eta: ParamRule::Constant(100.0), degree: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedParams {
    pub gamma: f64,
    pub eta: f64,
}

impl MethodParams {
    pub fn resolve(&self, h: f64) -> Result<ResolvedParams> {
        let gamma = self.gamma.resolve(h);
        let eta = self.eta.resolve(h);
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("grad-div parameter must be finite and >= 0, got {gamma}")));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("Nitsche penalty must be finite and > 0, got {eta}")));
        }
        Ok(ResolvedParams { gamma, eta })
    }
}

/// Quadrature rules for every active slot: `K ∩ Ω` volumes and, for cut cells, `K̄ ∩ Γ`.
#[derive(Debug, Clone)]
pub struct CellRules {
    pub volume: Vec<Option<QuadRule>>,
    pub interface: Vec<Option<QuadRule>>,
    pub degree: usize,
}

pub fn build_rules(ct: &CtMesh, topo: &CutTopology, dom: &ImplicitCircle, degree: usize) -> CellRules {
    let mut volume = Vec::with_capacity(topo.n_active());
    let mut interface = Vec::with_capacity(topo.n_active());
    for &c in &topo.active_cells {
        let clip = dom.clip_triangle(&ct.mesh.triangle_points(c));
        volume.push(Some(cut_volume_rule_from_clip(&clip, dom, degree)));
        interface.push(if topo.is_cut(c) { Some(interface_rule_from_clip(&clip, dom, degree)) } else { None });
    }
    CellRules { volume, interface, degree }
}

impl CellRules {
    fn volume(&self, slot: usize, cell: usize) -> Result<&QuadRule> {
        self.volume.get(slot).and_then(Option::as_ref).ok_or(Error::MissingRule { cell, kind: "volume" })
    }

    fn interface(&self, slot: usize, cell: usize) -> Result<&QuadRule> {
        self.interface.get(slot).and_then(Option::as_ref).ok_or(Error::MissingRule { cell, kind: "interface" })
    }
}

/// Parts of `a_h`; see [`VelocityForms::combine`].
#[derive(Debug, Clone)]
pub struct VelocityForms {
    /// `(∇u, ∇v)` over `Ω`.
    pub viscous: CsrMatrix<f64>,
    /// `(div u, div v)` over `Ω`.
    pub grad_div: CsrMatrix<f64>,
    /// `s_h(u, v) = -∫_Γ (n·∇u)·v + (n·∇v)·u`.
    pub nitsche: CsrMatrix<f64>,
    /// `j_h(u, v) = Σ_K h_K^{-1} ∫_{K_Γ} u·v`.
    pub penalty: CsrMatrix<f64>,
    /// Velocity ghost penalty over the ghost faces, orders `1..=k`.
    pub ghost: CsrMatrix<f64>,
}

impl VelocityForms {
    /// `a_h = viscous + γ grad_div + nitsche + ghost + η penalty`.
    pub fn combine(&self, gamma: f64, eta: f64) -> CsrMatrix<f64> {
        let mut a = &self.viscous + &self.nitsche;
        a = &a + &self.ghost;
        a = &a + &(&self.penalty * eta);
        if gamma != 0.0 {
            a = &a + &(&self.grad_div * gamma);
        }
        a
    }

    /// Matrix of the mesh-dependent norm `|v|_1^2 + η j_h + ghost + γ ||div v||^2`.
    pub fn norm_matrix(&self, gamma: f64, eta: f64) -> CsrMatrix<f64> {
        let mut n = &self.viscous + &self.ghost;
        n = &n + &(&self.penalty * eta);
        if gamma != 0.0 {
            n = &n + &(&self.grad_div * gamma);
        }
        n
    }
}

/// Right-hand side parts; `F = volume + nitsche + η penalty`, `G = continuity`.
#[derive(Debug, Clone)]
pub struct RhsParts {
    pub volume: Vec<f64>,
    pub nitsche: Vec<f64>,
    pub penalty: Vec<f64>,
    pub continuity: Vec<f64>,
}

impl RhsParts {
    pub fn momentum(&self, eta: f64) -> Vec<f64> {
        self.volume.iter().zip(&self.nitsche).zip(&self.penalty).map(|((v, n), p)| v + n + eta * p).collect()
    }
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub velocity: VelocityForms,
    /// `b(q, v)`, rows are pressure dofs.
    pub b: CsrMatrix<f64>,
    /// Pressure ghost penalty `J_h`, unscaled.
    pub ghost_pressure: CsrMatrix<f64>,
    /// `∫_{Ω_h^i} q` for every pressure basis function.
    pub mean: Vec<f64>,
    pub rhs: RhsParts,
    pub h: f64,
}

impl AssembledSystem {
    pub fn n_velocity(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_pressure(&self) -> usize {
        self.b.nrows()
    }

    pub fn a(&self, params: &ResolvedParams) -> CsrMatrix<f64> {
        self.velocity.combine(params.gamma, params.eta)
    }

    /// Writes `A`, `B`, `J` and the right-hand sides in Matrix Market format.
    pub fn export_matrix_market(&self, dir: &Path, params: &ResolvedParams) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let save = |name: &str, m: &CsrMatrix<f64>| -> Result<()> {
            nalgebra_sparse::io::save_to_matrix_market_file(m, dir.join(name))?;
            Ok(())
        };
        save("A.mtx", &self.a(params))?;
        save("B.mtx", &self.b)?;
        save("J.mtx", &self.ghost_pressure)?;
        let column = |name: &str, v: &[f64]| -> Result<()> {
            let mut coo = CooMatrix::new(v.len(), 1);
            for (i, x) in v.iter().enumerate() {
                if *x != 0.0 {
                    coo.push(i, 0, *x);
                }
            }
            save(name, &CsrMatrix::from(&coo))
        };
        column("F.mtx", &self.rhs.momentum(params.eta))?;
        column("G.mtx", &self.rhs.continuity)?;
        column("m.mtx", &self.mean)?;
        Ok(())
    }
}

struct CellBasis {
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl CellBasis {
    fn new(n: usize) -> Self {
        Self { values: vec![0.0; n], grads: vec![[0.0; 2]; n] }
    }

    fn eval(&mut self, space: &SvSpace, slot: usize, x: &Point) {
        let basis = space.velocity_basis(slot);
        basis.values(x, &mut self.values);
        basis.gradients(x, &mut self.grads);
    }
}

fn csr(rows: usize, cols: usize, coo: CooMatrix<f64>) -> CsrMatrix<f64> {
    debug_assert_eq!((coo.nrows(), coo.ncols()), (rows, cols));
    CsrMatrix::from(&coo)
}

/// Adds `local[i][j]` on both velocity components: entries `(2 n_i + c, 2 n_j + c)`.
fn push_scalar_block(coo: &mut CooMatrix<f64>, nodes: &[usize], local: &[f64]) {
    let n = nodes.len();
    for i in 0..n {
        for j in 0..n {
            let v = local[i * n + j];
            if v != 0.0 {
                for c in 0..2 {
                    coo.push(SvSpace::velocity_dof(nodes[i], c), SvSpace::velocity_dof(nodes[j], c), v);
                }
            }
        }
    }
}

pub fn assemble_velocity_forms(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
) -> Result<VelocityForms> {
    let nu = space.n_velocity();
    let nl = space.n_velocity_local();
    let mut viscous = CooMatrix::new(nu, nu);
    let mut grad_div = CooMatrix::new(nu, nu);
    let mut nitsche = CooMatrix::new(nu, nu);
    let mut penalty = CooMatrix::new(nu, nu);
    let mut eval = CellBasis::new(nl);
    let mut local = vec![0.0; nl * nl];
    let mut local_div = vec![0.0; 4 * nl * nl];
    let mut local_pen = vec![0.0; nl * nl];

    for (slot, &cell) in space.cells.iter().enumerate() {
        let nodes = space.nodes(slot);
        let rule = rules.volume(slot, cell)?;
        local.iter_mut().for_each(|v| *v = 0.0);
        local_div.iter_mut().for_each(|v| *v = 0.0);
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            eval.eval(space, slot, x);
            let g = &eval.grads;
            for i in 0..nl {
                for j in 0..nl {
                    local[i * nl + j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    for c in 0..2 {
                        for d in 0..2 {
                            local_div[((2 * i + c) * nl + j) * 2 + d] += w * g[i][c] * g[j][d];
                        }
                    }
                }
            }
        }
        push_scalar_block(&mut viscous, nodes, &local);
        for i in 0..nl {
            for c in 0..2 {
                for j in 0..nl {
                    for d in 0..2 {
                        let v = local_div[((2 * i + c) * nl + j) * 2 + d];
                        if v != 0.0 {
                            grad_div.push(SvSpace::velocity_dof(nodes[i], c), SvSpace::velocity_dof(nodes[j], d), v);
                        }
                    }
                }
            }
        }

        if !topo.is_cut(cell) {
            continue;
        }
        let iface = rules.interface(slot, cell)?;
        let h_k = ct.mesh.diameter(cell);
        local.iter_mut().for_each(|v| *v = 0.0);
        local_pen.iter_mut().for_each(|v| *v = 0.0);
        for ((x, w), n) in iface.points.iter().zip(&iface.weights).zip(&iface.normals) {
            eval.eval(space, slot, x);
            let phi = &eval.values;
            let dn: Vec<f64> = eval.grads.iter().map(|g| g[0] * n.x + g[1] * n.y).collect();
            for i in 0..nl {
                for j in 0..nl {
                    local[i * nl + j] -= w * (dn[j] * phi[i] + dn[i] * phi[j]);
                    local_pen[i * nl + j] += w * phi[i] * phi[j] / h_k;
                }
            }
        }
        push_scalar_block(&mut nitsche, nodes, &local);
        push_scalar_block(&mut penalty, nodes, &local_pen);
    }

    let ghost = assemble_velocity_ghost(ct, space, topo)?;
    Ok(VelocityForms {
        viscous: csr(nu, nu, viscous),
        grad_div: csr(nu, nu, grad_div),
        nitsche: csr(nu, nu, nitsche),
        penalty: csr(nu, nu, penalty),
        ghost,
    })
}

/// Velocity ghost penalty `Σ_F Σ_{ℓ=1}^{k} h_F^{2ℓ-1} ∫_F [∂_n^ℓ u]·[∂_n^ℓ v]`.
pub fn assemble_velocity_ghost(ct: &CtMesh, space: &SvSpace, topo: &CutTopology) -> Result<CsrMatrix<f64>> {
    let nu = space.n_velocity();
    let k = space.degree;
    let nl = space.n_velocity_local();
    let mut coo = CooMatrix::new(nu, nu);
    let mut d1 = vec![0.0; nl];
    let mut d2 = vec![0.0; nl];
    for &f in &topo.ghost_faces {
        let (s1, s2) = space.face_slots(ct, f)?;
        let n = ct.mesh.face_normal(f);
        let [a, b] = ct.mesh.face_points(f);
        let h_f = (b - a).norm();
        let (points, weights) = segment_rule(&a, &b, k + 1);
        let nodes: Vec<usize> = space.nodes(s1).iter().chain(space.nodes(s2)).copied().collect();
        let mut local = vec![0.0; 4 * nl * nl];
        for order in 1..=k {
            let scale = h_f.powi(2 * order as i32 - 1);
            for (x, w) in points.iter().zip(&weights) {
                space.velocity_basis(s1).directional(x, &n, order, &mut d1);
                space.velocity_basis(s2).directional(x, &n, order, &mut d2);
                let jump: Vec<f64> = d1.iter().copied().chain(d2.iter().map(|v| -v)).collect();
                for i in 0..2 * nl {
                    for j in 0..2 * nl {
                        local[i * 2 * nl + j] += scale * w * jump[i] * jump[j];
                    }
                }
            }
        }
        push_scalar_block(&mut coo, &nodes, &local);
    }
    Ok(csr(nu, nu, coo))
}

/// `a_h` for resolved parameters.
pub fn assemble_a(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
    params: &ResolvedParams,
) -> Result<CsrMatrix<f64>> {
    Ok(assemble_velocity_forms(ct, space, topo, rules)?.combine(params.gamma, params.eta))
}

/// `b(q, v) = -(q, div v)_Ω + ∫_Γ (v·n) q`, rows indexed by pressure dofs.
pub fn assemble_b(ct: &CtMesh, space: &SvSpace, topo: &CutTopology, rules: &CellRules) -> Result<CsrMatrix<f64>> {
    let _ = ct;
    let (np, nu) = (space.n_pressure(), space.n_velocity());
    let nl = space.n_velocity_local();
    let npl = space.n_pressure_local();
    let mut coo = CooMatrix::new(np, nu);
    let mut eval = CellBasis::new(nl);
    let mut q = vec![0.0; npl];
    let mut local = vec![0.0; npl * nl * 2];
    for (slot, &cell) in space.cells.iter().enumerate() {
        let nodes = space.nodes(slot);
        local.iter_mut().for_each(|v| *v = 0.0);
        let rule = rules.volume(slot, cell)?;
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            eval.eval(space, slot, x);
            space.pressure_basis(slot).values(x, &mut q);
            for p in 0..npl {
                for i in 0..nl {
                    for c in 0..2 {
                        local[(p * nl + i) * 2 + c] -= w * q[p] * eval.grads[i][c];
                    }
                }
            }
        }
        if topo.is_cut(cell) {
            let iface = rules.interface(slot, cell)?;
            for ((x, w), n) in iface.points.iter().zip(&iface.weights).zip(&iface.normals) {
                eval.eval(space, slot, x);
                space.pressure_basis(slot).values(x, &mut q);
                for p in 0..npl {
                    for i in 0..nl {
                        local[(p * nl + i) * 2] += w * q[p] * eval.values[i] * n.x;
                        local[(p * nl + i) * 2 + 1] += w * q[p] * eval.values[i] * n.y;
                    }
                }
            }
        }
        let rows = space.pressure_dofs(slot);
        for (p, row) in rows.enumerate() {
            for i in 0..nl {
                for c in 0..2 {
                    let v = local[(p * nl + i) * 2 + c];
                    if v != 0.0 {
                        coo.push(row, SvSpace::velocity_dof(nodes[i], c), v);
                    }
                }
            }
        }
    }
    Ok(csr(np, nu, coo))
}

/// Pressure ghost penalty `J_h(q, p) = Σ_F Σ_{ℓ=0}^{k-1} h_F^{2ℓ+1} ∫_F [∂_n^ℓ q][∂_n^ℓ p]`.
pub fn assemble_j(ct: &CtMesh, space: &SvSpace, topo: &CutTopology) -> Result<CsrMatrix<f64>> {
    let np = space.n_pressure();
    let npl = space.n_pressure_local();
    let k = space.degree;
    let mut coo = CooMatrix::new(np, np);
    let mut d1 = vec![0.0; npl];
    let mut d2 = vec![0.0; npl];
    for &f in &topo.ghost_faces {
        let (s1, s2) = space.face_slots(ct, f)?;
        let n = ct.mesh.face_normal(f);
        let [a, b] = ct.mesh.face_points(f);
        let h_f = (b - a).norm();
        let (points, weights) = segment_rule(&a, &b, k + 1);
        let dofs: Vec<usize> = space.pressure_dofs(s1).chain(space.pressure_dofs(s2)).collect();
        let mut local = vec![0.0; 4 * npl * npl];
        for order in 0..k {
            let scale = h_f.powi(2 * order as i32 + 1);
            for (x, w) in points.iter().zip(&weights) {
                space.pressure_basis(s1).directional(x, &n, order, &mut d1);
                space.pressure_basis(s2).directional(x, &n, order, &mut d2);
                let jump: Vec<f64> = d1.iter().copied().chain(d2.iter().map(|v| -v)).collect();
                for i in 0..2 * npl {
                    for j in 0..2 * npl {
                        local[i * 2 * npl + j] += scale * w * jump[i] * jump[j];
                    }
                }
            }
        }
        for i in 0..2 * npl {
            for j in 0..2 * npl {
                let v = local[i * 2 * npl + j];
                if v != 0.0 {
                    coo.push(dofs[i], dofs[j], v);
                }
            }
        }
    }
    Ok(csr(np, np, coo))
}

/// `∫_{Ω_h^i} q_j` for every pressure basis function (zero outside interior macro cells).
pub fn assemble_mean(ct: &CtMesh, space: &SvSpace, topo: &CutTopology) -> Vec<f64> {
    let npl = space.n_pressure_local();
    let mut m = vec![0.0; space.n_pressure()];
    let mut q = vec![0.0; npl];
    for (slot, &cell) in space.cells.iter().enumerate() {
        if topo.ct_class[cell] != CellClass::Interior {
            continue;
        }
        let rule = crate::quadrature::triangle_rule(&ct.mesh.triangle_points(cell), space.degree);
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            space.pressure_basis(slot).values(x, &mut q);
            for (p, dof) in space.pressure_dofs(slot).enumerate() {
                m[dof] += w * q[p];
            }
        }
    }
    m
}

/// Right-hand sides for forcing `f` and Dirichlet data `g`:
/// `F(v) = (f, v)_Ω - ∫_Γ (n·∇v)·g + η Σ_K h_K^{-1} ∫_{K_Γ} g·v` and `G(q) = ∫_Γ (g·n) q`.
pub fn assemble_rhs_parts(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
    f: VectorField,
    g: VectorField,
) -> Result<RhsParts> {
    let nu = space.n_velocity();
    let nl = space.n_velocity_local();
    let npl = space.n_pressure_local();
    let mut parts = RhsParts {
        volume: vec![0.0; nu],
        nitsche: vec![0.0; nu],
        penalty: vec![0.0; nu],
        continuity: vec![0.0; space.n_pressure()],
    };
    let mut eval = CellBasis::new(nl);
    let mut q = vec![0.0; npl];
    for (slot, &cell) in space.cells.iter().enumerate() {
        let nodes = space.nodes(slot);
        let rule = rules.volume(slot, cell)?;
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let fx = f(x);
            if fx == [0.0, 0.0] {
                continue;
            }
            eval.eval(space, slot, x);
            for (i, &node) in nodes.iter().enumerate() {
                for c in 0..2 {
                    parts.volume[SvSpace::velocity_dof(node, c)] += w * fx[c] * eval.values[i];
                }
            }
        }
        if !topo.is_cut(cell) {
            continue;
        }
        let iface = rules.interface(slot, cell)?;
        let h_k = ct.mesh.diameter(cell);
        for ((x, w), n) in iface.points.iter().zip(&iface.weights).zip(&iface.normals) {
            let gx = g(x);
            if gx == [0.0, 0.0] {
                continue;
            }
            eval.eval(space, slot, x);
            for (i, &node) in nodes.iter().enumerate() {
                let dn = eval.grads[i][0] * n.x + eval.grads[i][1] * n.y;
                for c in 0..2 {
                    let dof = SvSpace::velocity_dof(node, c);
                    parts.nitsche[dof] -= w * dn * gx[c];
                    parts.penalty[dof] += w * gx[c] * eval.values[i] / h_k;
                }
            }
            space.pressure_basis(slot).values(x, &mut q);
            let gn = gx[0] * n.x + gx[1] * n.y;
            for (p, dof) in space.pressure_dofs(slot).enumerate() {
                parts.continuity[dof] += w * gn * q[p];
            }
        }
    }
    Ok(parts)
}

/// Assembled `(F, G)` for resolved parameters.
pub fn assemble_rhs(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
    f: VectorField,
    g: VectorField,
    params: &ResolvedParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let parts = assemble_rhs_parts(ct, space, topo, rules, f, g)?;
    Ok((parts.momentum(params.eta), parts.continuity))
}

pub fn assemble_system(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
    f: VectorField,
    g: VectorField,
) -> Result<AssembledSystem> {
    Ok(AssembledSystem {
        velocity: assemble_velocity_forms(ct, space, topo, rules)?,
        b: assemble_b(ct, space, topo, rules)?,
        ghost_pressure: assemble_j(ct, space, topo)?,
        mean: assemble_mean(ct, space, topo),
        rhs: assemble_rhs_parts(ct, space, topo, rules, f, g)?,
        h: ct.macro_mesh.h,
    })
}

/// `x^T M y` for a sparse matrix.
pub fn bilinear(m: &CsrMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    m.row_iter()
        .enumerate()
        .map(|(i, row)| x[i] * row.col_indices().iter().zip(row.values()).map(|(j, v)| v * y[*j]).sum::<f64>())
        .sum()
}

/// `M x` for a sparse matrix.
pub fn matvec(m: &CsrMatrix<f64>, x: &[f64]) -> Vec<f64> {
    m.row_iter()
        .map(|row| row.col_indices().iter().zip(row.values()).map(|(j, v)| v * x[*j]).sum())
        .collect()
}

/// Largest `|M_ij - M_ji|`.
pub fn max_asymmetry(m: &CsrMatrix<f64>) -> f64 {
    let t = m.transpose();
    let d = m - &t;
    d.values().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}
