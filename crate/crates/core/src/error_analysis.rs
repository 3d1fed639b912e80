//! Error norms against a manufactured solution, the interior divergence check,
//! and empirical convergence orders.

use crate::assembly::CellRules;
use crate::error::Result;
use crate::geometry::{CellClass, CutTopology};
use crate::mesh::{CtMesh, Point};
use crate::quadrature::{segment_rule, triangle_rule};
use crate::solver::SaddleSolution;
use crate::space::SvSpace;

/// Smooth Stokes solution on the unit square with a divergence-free velocity
/// `u = (2s(2y-1), -2s(2x-1))`, `s = x^2 - x + 1/4 + y^2 - y`, and pressure
/// `p = scale (x^2 - y^2)^2 + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub pressure_scale: f64,
    pub pressure_shift: f64,
}

impl Default for ManufacturedSolution {
    fn default() -> Self {
        Self { pressure_scale: 1.0e4, pressure_shift: 0.0 }
    }
}

fn stream(x: &Point) -> f64 {
    x.x * x.x - x.x + 0.25 + x.y * x.y - x.y
}

impl ManufacturedSolution {
    pub fn velocity(&self, x: &Point) -> [f64; 2] {
        let s = stream(x);
        [2.0 * s * (2.0 * x.y - 1.0), -2.0 * s * (2.0 * x.x - 1.0)]
    }

    /// `grad[c] = [∂x u_c, ∂y u_c]`.
    pub fn velocity_gradient(&self, x: &Point) -> [[f64; 2]; 2] {
        let (a, b) = (2.0 * x.x - 1.0, 2.0 * x.y - 1.0);
        let s = stream(x);
        [[2.0 * a * b, 2.0 * b * b + 4.0 * s], [-2.0 * a * a - 4.0 * s, -2.0 * a * b]]
    }

    pub fn velocity_laplacian(&self, x: &Point) -> [f64; 2] {
        [16.0 * (2.0 * x.y - 1.0), -16.0 * (2.0 * x.x - 1.0)]
    }

    pub fn divergence(&self, x: &Point) -> f64 {
        let g = self.velocity_gradient(x);
        g[0][0] + g[1][1]
    }

    pub fn pressure(&self, x: &Point) -> f64 {
        let d = x.x * x.x - x.y * x.y;
        self.pressure_scale * d * d + self.pressure_shift
    }

    pub fn pressure_gradient(&self, x: &Point) -> [f64; 2] {
        let d = x.x * x.x - x.y * x.y;
        let c = 4.0 * self.pressure_scale * d;
        [c * x.x, -c * x.y]
    }

    /// `f = -Δu + ∇p`.
    pub fn forcing(&self, x: &Point) -> [f64; 2] {
        let l = self.velocity_laplacian(x);
        let g = self.pressure_gradient(x);
        [-l[0] + g[0], -l[1] + g[1]]
    }

    /// Dirichlet data on the interface.
    pub fn boundary(&self, x: &Point) -> [f64; 2] {
        self.velocity(x)
    }
}

/// Reference fields the discrete solution is measured against.
pub trait ExactSolution {
    /// `grad[c] = [∂x u_c, ∂y u_c]`.
    fn velocity_gradient(&self, x: &Point) -> [[f64; 2]; 2];
    fn pressure(&self, x: &Point) -> f64;
}

impl ExactSolution for ManufacturedSolution {
    fn velocity_gradient(&self, x: &Point) -> [[f64; 2]; 2] {
        ManufacturedSolution::velocity_gradient(self, x)
    }

    fn pressure(&self, x: &Point) -> f64 {
        ManufacturedSolution::pressure(self, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub n_u: usize,
    pub n_p: usize,
    /// `||∇(u - u_h)||` over `Ω`.
    pub err_h1_u: f64,
    /// `min_c ||p + c - p_h||` over `Ω`.
    pub err_l2_p: f64,
    /// `||div u_h||` over `Ω`.
    pub err_div: f64,
    /// Largest `||div u_h||_{L2(K)}` over the strip-interior cells.
    pub err_div_interior: f64,
    /// `||div u_h||^2` restricted to the strip, over `Ω`.
    pub div_sq_strip: f64,
    /// `∫ u_h · n` over the boundary of the union of interior macro cells.
    pub flux: f64,
    /// `||∇u_h||` over `Ω`.
    pub grad_uh: f64,
    /// `∫ p_h` over the interior macro cells.
    pub pressure_mean: f64,
}

/// Coefficients of one slot gathered for fast evaluation.
struct LocalVelocity {
    coeffs: [Vec<f64>; 2],
    values: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

impl LocalVelocity {
    fn new(space: &SvSpace) -> Self {
        let n = space.n_velocity_local();
        Self { coeffs: [vec![0.0; n], vec![0.0; n]], values: vec![0.0; n], grads: vec![[0.0; 2]; n] }
    }

    fn gather(&mut self, space: &SvSpace, slot: usize, u: &[f64]) {
        for (i, &node) in space.nodes(slot).iter().enumerate() {
            for c in 0..2 {
                self.coeffs[c][i] = u[SvSpace::velocity_dof(node, c)];
            }
        }
    }

    fn gradient(&mut self, space: &SvSpace, slot: usize, x: &Point) -> [[f64; 2]; 2] {
        space.velocity_basis(slot).gradients(x, &mut self.grads);
        [0, 1].map(|c| {
            let mut g = [0.0; 2];
            for (a, grad) in self.coeffs[c].iter().zip(&self.grads) {
                g[0] += a * grad[0];
                g[1] += a * grad[1];
            }
            g
        })
    }

    fn value(&mut self, space: &SvSpace, slot: usize, x: &Point) -> [f64; 2] {
        space.velocity_basis(slot).values(x, &mut self.values);
        [0, 1].map(|c| self.coeffs[c].iter().zip(&self.values).map(|(a, v)| a * v).sum())
    }
}

pub fn compute_errors(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
    solution: &SaddleSolution,
    exact: &dyn ExactSolution,
) -> Result<ErrorReport> {
    compute_field_errors(ct, space, topo, rules, &solution.velocity, &solution.pressure, exact)
}

/// Errors of arbitrary discrete fields `(u_h, p_h)`.
pub fn compute_field_errors(
    ct: &CtMesh,
    space: &SvSpace,
    topo: &CutTopology,
    rules: &CellRules,
    u: &[f64],
    p: &[f64],
    exact: &dyn ExactSolution,
) -> Result<ErrorReport> {
    let mut local = LocalVelocity::new(space);
    let (mut h1, mut grad_uh, mut div_sq, mut div_sq_strip) = (0.0, 0.0, 0.0, 0.0);
    let (mut dp_int, mut dp_sq, mut vol) = (0.0, 0.0, 0.0);
    for (slot, &cell) in space.cells.iter().enumerate() {
        let rule = rules
            .volume
            .get(slot)
            .and_then(Option::as_ref)
            .ok_or(crate::Error::MissingRule { cell, kind: "volume" })?;
        local.gather(space, slot, u);
        let mut cell_div = 0.0;
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            let gh = local.gradient(space, slot, x);
            let ge = exact.velocity_gradient(x);
            for c in 0..2 {
                for d in 0..2 {
                    h1 += w * (ge[c][d] - gh[c][d]).powi(2);
                    grad_uh += w * gh[c][d].powi(2);
                }
            }
            cell_div += w * (gh[0][0] + gh[1][1]).powi(2);
            let dp = space.pressure_at(p, slot, x) - exact.pressure(x);
            dp_int += w * dp;
            dp_sq += w * dp * dp;
            vol += w;
        }
        div_sq += cell_div;
        if topo.strip[cell] {
            div_sq_strip += cell_div;
        }
    }
    let err_l2_p = if vol > 0.0 { (dp_sq - dp_int * dp_int / vol).max(0.0).sqrt() } else { 0.0 };
    let (err_div_interior, _) = check_interior_divfree(ct, space, topo, u);
    Ok(ErrorReport {
        n_u: space.n_velocity(),
        n_p: space.n_pressure(),
        err_h1_u: h1.sqrt(),
        err_l2_p,
        err_div: div_sq.sqrt(),
        err_div_interior,
        div_sq_strip,
        flux: interior_flux(ct, space, topo, u),
        grad_uh: grad_uh.sqrt(),
        pressure_mean: pressure_mean(ct, space, topo, p),
    })
}

/// `(max_K ||div u_h||_{L2(K)}, (Σ_K ||div u_h||^2_{L2(K)})^{1/2})` over the strip-interior cells.
pub fn check_interior_divfree(ct: &CtMesh, space: &SvSpace, topo: &CutTopology, u: &[f64]) -> (f64, f64) {
    let mut local = LocalVelocity::new(space);
    let (mut max, mut total) = (0.0f64, 0.0);
    let degree = 2 * (space.degree - 1);
    for &cell in &topo.strip_interior_cells {
        let Some(slot) = space.slot[cell] else { continue };
        local.gather(space, slot, u);
        let rule = triangle_rule(&ct.mesh.triangle_points(cell), degree);
        let sq: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| {
                let g = local.gradient(space, slot, x);
                w * (g[0][0] + g[1][1]).powi(2)
            })
            .sum();
        max = max.max(sq.sqrt());
        total += sq;
    }
    (max, total.sqrt())
}

/// `∫ u_h · n` over the boundary of the union of interior macro cells, outward normal.
pub fn interior_flux(ct: &CtMesh, space: &SvSpace, topo: &CutTopology, u: &[f64]) -> f64 {
    let interior = |c: Option<usize>| c.is_some_and(|c| topo.ct_class[c] == CellClass::Interior);
    let mut local = LocalVelocity::new(space);
    let mut flux = 0.0;
    for (f, face) in ct.mesh.faces.iter().enumerate() {
        let (inside, sign) = match (interior(face.cells[0]), interior(face.cells[1])) {
            (true, false) => (face.cells[0].unwrap(), 1.0),
            (false, true) => (face.cells[1].unwrap(), -1.0),
            _ => continue,
        };
        let Some(slot) = space.slot[inside] else { continue };
        local.gather(space, slot, u);
        let n = ct.mesh.face_normal(f) * sign;
        let [a, b] = ct.mesh.face_points(f);
        let (points, weights) = segment_rule(&a, &b, space.degree + 1);
        for (x, w) in points.iter().zip(&weights) {
            let v = local.value(space, slot, x);
            flux += w * (v[0] * n.x + v[1] * n.y);
        }
    }
    flux
}

/// `∫ p_h` over the interior macro cells.
pub fn pressure_mean(ct: &CtMesh, space: &SvSpace, topo: &CutTopology, p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (slot, &cell) in space.cells.iter().enumerate() {
        if topo.ct_class[cell] != CellClass::Interior {
            continue;
        }
        let rule = triangle_rule(&ct.mesh.triangle_points(cell), space.degree);
        total += rule.integrate(|x| space.pressure_at(p, slot, x));
    }
    total
}

/// Mean of `|div u_h|` over `K ∩ Ω` for every refined cell; zero on inactive cells.
pub fn divergence_field(ct: &CtMesh, space: &SvSpace, rules: &CellRules, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ct.n_cells()];
    let mut local = LocalVelocity::new(space);
    for (slot, &cell) in space.cells.iter().enumerate() {
        let Some(rule) = rules.volume.get(slot).and_then(Option::as_ref) else { continue };
        let vol = rule.weight_sum();
        if vol <= 0.0 {
            continue;
        }
        local.gather(space, slot, u);
        let int: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| {
                let g = local.gradient(space, slot, x);
                w * (g[0][0] + g[1][1]).abs()
            })
            .sum();
        out[cell] = int / vol;
    }
    out
}

/// `log2(e_i / e_{i+1})` between consecutive rows; `None` for the first row.
pub fn compute_eoc(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(errors.len());
    for i in 0..errors.len() {
        out.push(if i == 0 { None } else { Some((errors[i - 1] / errors[i]).log2()) });
    }
    out
}

/// Rates for arbitrary `h` ratios: `log(e_{i-1}/e_i) / log(h_{i-1}/h_i)`.
pub fn compute_eoc_h(h: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|i| (i > 0).then(|| (errors[i - 1] / errors[i]).ln() / (h[i - 1] / h[i]).ln()))
        .collect()
}
