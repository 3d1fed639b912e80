//! Local polynomial bases on a single triangle, stored as coefficient rows over
//! scaled monomials `((x - x0) / s)^a ((y - y0) / s)^b` with total degree ordering.

use nalgebra::{DMatrix, Vector2};

use crate::mesh::{centroid, diameter, Point};
use crate::quadrature::triangle_rule;

pub fn n_monomials(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponents `(a, b)` ordered by total degree, then by increasing `b`.
pub fn exponents(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_monomials(degree));
    for total in 0..=degree {
        for b in 0..=total {
            out.push((total - b, b));
        }
    }
    out
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    falling(n, k) / falling(k, k)
}

#[derive(Debug, Clone)]
pub struct PolyBasis {
    origin: Point,
    scale: f64,
    degree: usize,
    exps: Vec<(usize, usize)>,
    n_basis: usize,
    /// Row-major `n_basis x n_monomials`.
    coeffs: Vec<f64>,
}

impl PolyBasis {
    fn with_frame(tri: &[Point; 3], degree: usize) -> Self {
        let exps = exponents(degree);
        Self { origin: centroid(tri), scale: diameter(tri), degree, exps, n_basis: 0, coeffs: Vec::new() }
    }

    /// Nodal basis of degree `degree` with `nodes[i]` the interpolation point of function `i`.
    pub fn lagrange(tri: &[Point; 3], degree: usize, nodes: &[Point]) -> Self {
        let mut basis = Self::with_frame(tri, degree);
        let nm = basis.exps.len();
        assert_eq!(nodes.len(), nm, "Lagrange basis needs one node per monomial");
        let mut vander = DMatrix::zeros(nm, nm);
        let mut row = vec![0.0; nm];
        for (i, x) in nodes.iter().enumerate() {
            basis.monomials(x, 0, 0, &mut row);
            for j in 0..nm {
                vander[(i, j)] = row[j];
            }
        }
        // Row i of the coefficient matrix is column i of V^{-1}.
        let inv = vander.try_inverse().expect("degenerate Lagrange nodes");
        basis.n_basis = nm;
        basis.coeffs = (0..nm).flat_map(|i| (0..nm).map(move |j| (i, j))).map(|(i, j)| inv[(j, i)]).collect();
        basis
    }

    /// Basis of all polynomials of degree `degree`, orthonormal in `L2(tri)`.
    pub fn orthonormal(tri: &[Point; 3], degree: usize) -> Self {
        let mut basis = Self::with_frame(tri, degree);
        let nm = basis.exps.len();
        let rule = triangle_rule(tri, 2 * degree);
        let mut gram = DMatrix::zeros(nm, nm);
        let mut row = vec![0.0; nm];
        for (x, w) in rule.points.iter().zip(&rule.weights) {
            basis.monomials(x, 0, 0, &mut row);
            for i in 0..nm {
                for j in 0..nm {
                    gram[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        let chol = gram.cholesky().expect("monomial Gram matrix not positive definite");
        let l_inv = chol.l().try_inverse().expect("singular Cholesky factor");
        basis.n_basis = nm;
        basis.coeffs = (0..nm).flat_map(|i| (0..nm).map(move |j| (i, j))).map(|(i, j)| l_inv[(i, j)]).collect();
        basis
    }

    pub fn len(&self) -> usize {
        self.n_basis
    }

    pub fn is_empty(&self) -> bool {
        self.n_basis == 0
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `∂x^dx ∂y^dy` of every monomial at `x`.
    fn monomials(&self, x: &Point, dx: usize, dy: usize, out: &mut [f64]) {
        let xi = (x.x - self.origin.x) / self.scale;
        let eta = (x.y - self.origin.y) / self.scale;
        let factor = self.scale.powi(-((dx + dy) as i32));
        for (o, &(a, b)) in out.iter_mut().zip(&self.exps) {
            *o = if a < dx || b < dy {
                0.0
            } else {
                falling(a, dx) * falling(b, dy) * xi.powi((a - dx) as i32) * eta.powi((b - dy) as i32) * factor
            };
        }
    }

    /// `∂x^dx ∂y^dy` of every basis function at `x`.
    pub fn derivative(&self, x: &Point, dx: usize, dy: usize, out: &mut [f64]) {
        let nm = self.exps.len();
        let mut mono = vec![0.0; nm];
        self.monomials(x, dx, dy, &mut mono);
        for (i, o) in out.iter_mut().enumerate().take(self.n_basis) {
            let row = &self.coeffs[i * nm..(i + 1) * nm];
            *o = row.iter().zip(&mono).map(|(c, m)| c * m).sum();
        }
    }

    pub fn values(&self, x: &Point, out: &mut [f64]) {
        self.derivative(x, 0, 0, out)
    }

    pub fn gradients(&self, x: &Point, out: &mut [[f64; 2]]) {
        let n = self.n_basis;
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        self.derivative(x, 1, 0, &mut gx);
        self.derivative(x, 0, 1, &mut gy);
        for i in 0..n {
            out[i] = [gx[i], gy[i]];
        }
    }

    /// Directional derivative of order `order` along `dir` for every basis function.
    pub fn directional(&self, x: &Point, dir: &Vector2<f64>, order: usize, out: &mut [f64]) {
        let n = self.n_basis;
        out[..n].iter_mut().for_each(|o| *o = 0.0);
        let mut tmp = vec![0.0; n];
        for j in 0..=order {
            let c = binomial(order, j) * dir.x.powi(j as i32) * dir.y.powi((order - j) as i32);
            if c == 0.0 {
                continue;
            }
            self.derivative(x, j, order - j, &mut tmp);
            for i in 0..n {
                out[i] += c * tmp[i];
            }
        }
    }

    /// Evaluates `Σ coeffs[i] ∂x^dx ∂y^dy φ_i` at `x`.
    pub fn combine(&self, x: &Point, dx: usize, dy: usize, coeffs: &[f64]) -> f64 {
        let mut vals = vec![0.0; self.n_basis];
        self.derivative(x, dx, dy, &mut vals);
        vals.iter().zip(coeffs).map(|(v, c)| v * c).sum()
    }
}
