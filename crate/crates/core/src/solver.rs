//! Direct solution of the bordered saddle-point system and spectral probes.
//!
//! The discrete problem is
//!
//! ```text
//! [ A   B^T       0 ] [u]   [F]
//! [ B  -J/(1+γ)   m ] [p] = [G]
//! [ 0   m^T       0 ] [λ]   [0]
//! ```
//!
//! where the last row fixes the pressure mean and `λ` is the matching multiplier.

use faer::prelude::*;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LdltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Par, Side};
use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{bilinear, matvec, AssembledSystem, ResolvedParams};
use crate::error::{Error, Result};

pub const DEFAULT_RTOL: f64 = 1e-10;
const MAX_REFINEMENT: usize = 8;
/// Relative diagonal shift of the pressure block in the symmetric factorization.
const PIVOT_SHIFT: f64 = 1e-12;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse LU of a square matrix, with iterative refinement on solve.
pub struct Factorization {
    matrix: CsrMatrix<f64>,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    rtol: f64,
}

impl Factorization {
    pub fn new(matrix: CsrMatrix<f64>, rtol: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::InvalidParameter(format!("matrix is {}x{}, not square", n, matrix.ncols())));
        }
        let triplets: Vec<Triplet<usize, usize, f64>> =
            matrix.triplet_iter().map(|(i, j, v)| Triplet::new(i, j, *v)).collect();
        let sparse = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SingularSystem(format!("cannot build sparse matrix: {e:?}")))?;
        let lu = sparse.sp_lu().map_err(|e| match e {
            LuError::SymbolicSingular { index } => Error::ZeroPivot { index },
            e => Error::SingularSystem(format!("LU failed: {e:?}")),
        })?;
        Ok(Self { matrix, lu, rtol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves and refines until `||rhs - M x|| <= rtol ||rhs||`; returns `(x, residual, steps)`.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
        refine(&self.matrix, |r| self.raw_solve(r), rhs, self.rtol)
    }
}

/// Sparse `LDL^T` without pivoting, with a fill-reducing AMD ordering.
///
/// Meant for symmetric saddle-point matrices whose trailing block (rows `from..`) is
/// negative semidefinite: that block is shifted by `-shift` before factorization so no
/// pivot is exactly zero, and iterative refinement against the unshifted matrix removes
/// the perturbation.
pub struct SymmetricFactorization {
    matrix: CsrMatrix<f64>,
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    rtol: f64,
}

impl SymmetricFactorization {
    pub fn new(matrix: CsrMatrix<f64>, from: usize, shift: f64, rtol: f64) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::InvalidParameter(format!("matrix is {}x{}, not square", n, matrix.ncols())));
        }
        let mut triplets: Vec<Triplet<usize, usize, f64>> =
            matrix.triplet_iter().filter(|(i, j, _)| i >= j).map(|(i, j, v)| Triplet::new(i, j, *v)).collect();
        if shift != 0.0 {
            triplets.extend((from..n).map(|i| Triplet::new(i, i, -shift)));
        }
        let lower = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SingularSystem(format!("cannot build sparse matrix: {e:?}")))?;
        let symbolic = factorize_symbolic_cholesky(
            lower.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::SingularSystem(format!("symbolic factorization failed: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_ldlt(
                &mut values,
                lower.as_ref(),
                Side::Lower,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::SingularSystem(format!("LDL^T failed: {e:?}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("zero pivot in LDL^T".into()));
        }
        Ok(Self { matrix, symbolic, values, rtol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let ldlt = LdltRef::new(&self.symbolic, &self.values);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        ldlt.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut mem));
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves and refines against the unregularized matrix; returns `(x, residual, steps)`.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
        refine(&self.matrix, |r| self.raw_solve(r), rhs, self.rtol)
    }
}

/// Builds the bordered matrix from its blocks; `border` is the pressure constraint vector.
pub fn bordered_matrix(
    a: &CsrMatrix<f64>,
    b: &CsrMatrix<f64>,
    c: &CsrMatrix<f64>,
    c_scale: f64,
    border: &[f64],
) -> CsrMatrix<f64> {
    let nu = a.nrows();
    let np = b.nrows();
    let n = nu + np + 1;
    let mut coo = CooMatrix::new(n, n);
    for (i, j, v) in a.triplet_iter() {
        coo.push(i, j, *v);
    }
    for (p, j, v) in b.triplet_iter() {
        coo.push(nu + p, j, *v);
        coo.push(j, nu + p, *v);
    }
    for (p, q, v) in c.triplet_iter() {
        coo.push(nu + p, nu + q, -c_scale * v);
    }
    for (p, v) in border.iter().enumerate() {
        if *v != 0.0 {
            coo.push(nu + p, n - 1, *v);
            coo.push(n - 1, nu + p, *v);
        }
    }
    CsrMatrix::from(&coo)
}

/// Solver for a bordered saddle matrix with a dense constraint row.
///
/// A dense border ruins the fill-reducing ordering, so the sparse LU is taken of the
/// same matrix with the border replaced by a single pinned pressure dof. The true
/// border is a rank-two correction applied by the Sherman-Morrison-Woodbury formula.
pub struct BorderedSolver {
    matrix: CsrMatrix<f64>,
    pinned: Factorization,
    /// `w = border - e_pin` on the pressure block, zero elsewhere.
    w: Vec<f64>,
    /// `P^{-1} [w, e_last]`.
    y: [Vec<f64>; 2],
    /// Inverse of `I + V^T P^{-1} U`.
    cinv: [[f64; 2]; 2],
    rtol: f64,
}

impl BorderedSolver {
    pub fn new(
        a: &CsrMatrix<f64>,
        b: &CsrMatrix<f64>,
        c: &CsrMatrix<f64>,
        c_scale: f64,
        border: &[f64],
        rtol: f64,
    ) -> Result<Self> {
        let nu = a.nrows();
        let n = nu + b.nrows() + 1;
        let pin = border
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .ok_or_else(|| Error::SingularSystem("pressure constraint vector is zero".into()))?;
        let mut e = vec![0.0; border.len()];
        e[pin] = 1.0;
        let pinned = Factorization::new(bordered_matrix(a, b, c, c_scale, &e), rtol)?;
        let mut w = vec![0.0; n];
        for (p, v) in border.iter().enumerate() {
            w[nu + p] = v - e[p];
        }
        let mut last = vec![0.0; n];
        last[n - 1] = 1.0;
        let y0 = pinned.raw_solve(&w);
        let y1 = pinned.raw_solve(&last);
        // U = [w, e_last], V = [e_last, w].
        let c11 = 1.0 + y0[n - 1];
        let c12 = y1[n - 1];
        let c21 = dot(&w, &y0);
        let c22 = 1.0 + dot(&w, &y1);
        let det = c11 * c22 - c12 * c21;
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(Error::SingularSystem(format!("bordering correction is singular (det = {det:e})")));
        }
        let cinv = [[c22 / det, -c12 / det], [-c21 / det, c11 / det]];
        let matrix = bordered_matrix(a, b, c, c_scale, border);
        Ok(Self { matrix, pinned, w, y: [y0, y1], cinv, rtol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix<f64> {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.pinned.raw_solve(rhs);
        let n = x.len();
        let t = [x[n - 1], dot(&self.w, &x)];
        let s = [
            self.cinv[0][0] * t[0] + self.cinv[0][1] * t[1],
            self.cinv[1][0] * t[0] + self.cinv[1][1] * t[1],
        ];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi -= self.y[0][i] * s[0] + self.y[1][i] * s[1];
        }
        x
    }

    /// Solves and refines against the true bordered matrix; returns `(x, residual, steps)`.
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
        refine(&self.matrix, |r| self.raw_solve(r), rhs, self.rtol)
    }
}

/// Factorization of the bordered saddle matrix.
///
/// The symmetric indefinite `LDL^T` is tried first; if it breaks down the pinned LU with
/// a low-rank border correction is used instead.
pub enum SaddleFactorization {
    Symmetric(Box<SymmetricFactorization>),
    Bordered(Box<BorderedSolver>),
}

impl SaddleFactorization {
    pub fn new(
        a: &CsrMatrix<f64>,
        b: &CsrMatrix<f64>,
        c: &CsrMatrix<f64>,
        c_scale: f64,
        border: &[f64],
        rtol: f64,
    ) -> Result<Self> {
        let scale = (0..a.nrows()).map(|i| a.get_entry(i, i).map_or(0.0, |e| e.into_value().abs())).fold(0.0, f64::max);
        let matrix = bordered_matrix(a, b, c, c_scale, border);
        match SymmetricFactorization::new(matrix, a.nrows(), PIVOT_SHIFT * scale.max(1.0), rtol) {
            Ok(f) => Ok(Self::Symmetric(Box::new(f))),
            Err(_) => Ok(Self::Bordered(Box::new(BorderedSolver::new(a, b, c, c_scale, border, rtol)?))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Symmetric(f) => f.dim(),
            Self::Bordered(f) => f.dim(),
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, f64, usize)> {
        match self {
            Self::Symmetric(f) => f.solve(rhs),
            Self::Bordered(f) => f.solve(rhs),
        }
    }
}

fn refine(
    matrix: &CsrMatrix<f64>,
    inverse: impl Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    rtol: f64,
) -> Result<(Vec<f64>, f64, usize)> {
    let target = rtol * norm(rhs);
    let mut x = inverse(rhs);
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(format!("zero pivot: non-finite solution, first at unknown {i}")));
    }
    let mut residual = f64::INFINITY;
    for step in 0..=MAX_REFINEMENT {
        let mx = matvec(matrix, &x);
        let r: Vec<f64> = rhs.iter().zip(&mx).map(|(b, m)| b - m).collect();
        residual = norm(&r);
        if residual <= target {
            return Ok((x, residual, step));
        }
        let dx = inverse(&r);
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite correction".into()));
        }
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    Err(Error::NotConverged { residual, steps: MAX_REFINEMENT })
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Multiplier of the pressure mean constraint.
    pub multiplier: f64,
    /// Euclidean residual of the full bordered system.
    pub residual: f64,
    pub rhs_norm: f64,
    pub refinement_steps: usize,
}

/// Solves the discrete Stokes problem for resolved `γ` and `η`.
pub fn solve(sys: &AssembledSystem, params: &ResolvedParams, rtol: f64) -> Result<SaddleSolution> {
    let a = sys.a(params);
    let c_scale = 1.0 / (1.0 + params.gamma);
    let fact = SaddleFactorization::new(&a, &sys.b, &sys.ghost_pressure, c_scale, &sys.mean, rtol)?;
    let (nu, np) = (sys.n_velocity(), sys.n_pressure());
    let mut rhs = sys.rhs.momentum(params.eta);
    rhs.extend_from_slice(&sys.rhs.continuity);
    rhs.push(0.0);
    let (x, residual, steps) = match fact.solve(&rhs) {
        Ok(r) => r,
        Err(_) if matches!(fact, SaddleFactorization::Symmetric(_)) => {
            drop(fact);
            BorderedSolver::new(&a, &sys.b, &sys.ghost_pressure, c_scale, &sys.mean, rtol)?.solve(&rhs)?
        }
        Err(e) => return Err(e),
    };
    Ok(SaddleSolution {
        velocity: x[..nu].to_vec(),
        pressure: x[nu..nu + np].to_vec(),
        multiplier: x[nu + np],
        residual,
        rhs_norm: norm(&rhs),
        refinement_steps: steps,
    })
}

#[derive(Debug, Clone)]
pub struct InfSupEstimate {
    /// `sqrt` of the smallest eigenvalue of the pressure Schur complement plus `J_h`.
    pub theta: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
}

/// Vector with entries `∫_K q` for every active cell; spans the constant pressures.
pub fn constant_pressure(sys: &AssembledSystem, cell_areas: &[f64]) -> Vec<f64> {
    let npl = sys.n_pressure() / cell_areas.len().max(1);
    let mut c = vec![0.0; sys.n_pressure()];
    for (slot, area) in cell_areas.iter().enumerate() {
        // The first orthonormal basis function is the constant 1/sqrt|K|.
        c[slot * npl] = area.sqrt();
    }
    c
}

/// Smallest eigenvalue of `B N^{-1} B^T + J` on pressures orthogonal to constants,
/// where `N` is the velocity norm matrix and the pressure mass matrix is the identity.
///
/// Uses Lanczos with full reorthogonalization on the constrained inverse.
pub fn estimate_infsup(
    sys: &AssembledSystem,
    params: &ResolvedParams,
    cell_areas: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<InfSupEstimate> {
    let nmat = sys.velocity.norm_matrix(params.gamma, params.eta);
    let c = constant_pressure(sys, cell_areas);
    let fact = SaddleFactorization::new(&nmat, &sys.b, &sys.ghost_pressure, 1.0, &c, DEFAULT_RTOL)?;
    let (nu, np) = (sys.n_velocity(), sys.n_pressure());
    let cn = norm(&c);
    let project = |v: &mut Vec<f64>| {
        let s = dot(v, &c) / (cn * cn);
        v.iter_mut().zip(&c).for_each(|(x, c)| *x -= s * c);
    };
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let mut rhs = vec![0.0; nu + np + 1];
        rhs[nu..nu + np].iter_mut().zip(x).for_each(|(r, x)| *r = -x);
        let (sol, _, _) = fact.solve(&rhs)?;
        Ok(sol[nu..nu + np].to_vec())
    };
    let largest = lanczos_largest(np, &apply, &project, max_iter, tol)?;
    let mu = 1.0 / largest.0;
    Ok(InfSupEstimate { theta: mu.max(0.0).sqrt(), min_eigenvalue: mu, iterations: largest.1 })
}

type Operator<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// Largest eigenvalue of a symmetric operator, restricted to the range of `project`.
fn lanczos_largest(
    n: usize,
    apply: &Operator,
    project: &dyn Fn(&mut Vec<f64>),
    max_iter: usize,
    tol: f64,
) -> Result<(f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project(&mut q);
    let qn = norm(&q);
    q.iter_mut().for_each(|x| *x /= qn);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut previous = f64::NAN;
    let mut change = f64::INFINITY;
    let steps = max_iter.min(n.saturating_sub(1)).max(1);
    for it in 0..steps {
        let mut w = apply(&basis[it])?;
        project(&mut w);
        let a = dot(&w, &basis[it]);
        alpha.push(a);
        for _ in 0..2 {
            for v in &basis {
                let s = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(x, v)| *x -= s * v);
            }
        }
        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let ritz = SymmetricEigen::new(t).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        change = ((ritz - previous) / ritz).abs();
        let b = norm(&w);
        if change < tol || b <= 1e-14 * ritz.abs() {
            return Ok((ritz, it + 1));
        }
        previous = ritz;
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    if change < 1e3 * tol {
        return Ok((previous, steps));
    }
    Err(Error::EigenStagnation { iterations: steps, change })
}

/// `min v^T A v / v^T N v` over `samples` random velocity vectors.
pub fn coercivity_probe(sys: &AssembledSystem, params: &ResolvedParams, samples: usize, seed: u64) -> f64 {
    let a = sys.a(params);
    let nmat = sys.velocity.norm_matrix(params.gamma, params.eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let v: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            bilinear(&a, &v, &v) / bilinear(&nmat, &v, &v)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest `|λ|` of `N^{-1} A` by power iteration.
pub fn continuity_probe(sys: &AssembledSystem, params: &ResolvedParams, iterations: usize) -> Result<f64> {
    let a = sys.a(params);
    let nmat = sys.velocity.norm_matrix(params.gamma, params.eta);
    let fact = SymmetricFactorization::new(nmat.clone(), nmat.nrows(), 0.0, DEFAULT_RTOL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut v: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let (w, _, _) = fact.solve(&matvec(&a, &v))?;
        // Rayleigh quotient in the N inner product.
        lambda = bilinear(&nmat, &v, &w) / bilinear(&nmat, &v, &v);
        let wn = norm(&w);
        v = w.into_iter().map(|x| x / wn).collect();
    }
    Ok(lambda.abs())
}
