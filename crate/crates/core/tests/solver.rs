use cutsv::assembly::{bilinear, matvec, ResolvedParams};
use cutsv::error_analysis::{pressure_mean, ManufacturedSolution};
use cutsv::geometry::ImplicitCircle;
use cutsv::mesh::Point;
use cutsv::solver::{
    bordered_matrix, coercivity_probe, constant_pressure, estimate_infsup, solve, BorderedSolver, Factorization,
    SaddleFactorization, DEFAULT_RTOL,
};
use cutsv::study::Discretization;
use cutsv::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn disc(n: usize) -> Discretization {
    let dom = ImplicitCircle::from_radius_squared(Point::new(0.5, 0.5), 0.2).unwrap();
    Discretization::new(n, dom, 2, 8, &ManufacturedSolution::default()).unwrap()
}

fn params(gamma: f64, eta: f64) -> ResolvedParams {
    ResolvedParams { gamma, eta }
}

fn csr(n: usize, m: usize, entries: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, m);
    for &(i, j, v) in entries {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

#[test]
fn decoupled_identity() {
    let a = csr(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
    let b = csr(1, 3, &[]);
    let c = csr(1, 1, &[]);
    let fact = SaddleFactorization::new(&a, &b, &c, 1.0, &[1.0], 1e-12).unwrap();
    assert_eq!(fact.dim(), 5);
    let (x, res, _) = fact.solve(&[0.3, -1.0, 2.5, 0.0, 0.0]).unwrap();
    assert!(res <= 1e-12);
    for (xi, e) in x.iter().zip([0.3, -1.0, 2.5, 0.0, 0.0]) {
        assert!((xi - e).abs() <= 1e-12, "{x:?}");
    }
}

#[test]
fn recovers_a_manufactured_vector() {
    let d = disc(5);
    let p = params(0.0, 100.0);
    let a = d.system.a(&p);
    let m = bordered_matrix(&a, &d.system.b, &d.system.ghost_pressure, 1.0, &d.system.mean);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x: Vec<f64> = (0..m.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rhs = matvec(&m, &x);
    let fact = SaddleFactorization::new(&a, &d.system.b, &d.system.ghost_pressure, 1.0, &d.system.mean, 1e-14).unwrap();
    let (y, _, _) = fact.solve(&rhs).unwrap();
    let err: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    assert!(norm(&err) <= 1e-10 * norm(&x), "relative error {:e}", norm(&err) / norm(&x));
}

#[test]
fn stokes_solve_at_n10() {
    let d = disc(10);
    let sol = solve(&d.system, &params(0.0, 100.0), DEFAULT_RTOL).unwrap();
    assert_eq!(sol.velocity.len(), d.space.n_velocity());
    assert_eq!(sol.pressure.len(), d.space.n_pressure());
    assert!(sol.residual <= 1e-10 * sol.rhs_norm, "{:e}", sol.residual / sol.rhs_norm);
    let mean: f64 = sol.pressure.iter().zip(&d.system.mean).map(|(p, m)| p * m).sum();
    assert!(mean.abs() <= 1e-10 * norm(&sol.pressure).max(1.0), "{mean:e}");
    let direct = pressure_mean(&d.ct, &d.space, &d.topo, &sol.pressure);
    assert!(direct.abs() <= 1e-10 * norm(&sol.pressure).max(1.0), "{direct:e}");
}

#[test]
fn singular_matrices_are_reported() {
    // No entry in the last column: structurally singular.
    let k = csr(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 0, 1.0)]);
    match Factorization::new(k, 1e-12) {
        Err(Error::ZeroPivot { .. }) => {}
        other => panic!("expected a zero pivot, got {:?}", other.err()),
    }
    let k = csr(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
    let err = Factorization::new(k, 1e-12).and_then(|f| f.solve(&[1.0, 0.0])).unwrap_err();
    assert!(err.to_string().contains("zero pivot"), "{err}");
    // A zero constraint vector cannot fix the pressure mean.
    let a = csr(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
    let b = csr(1, 2, &[(0, 0, 1.0)]);
    assert!(BorderedSolver::new(&a, &b, &csr(1, 1, &[]), 1.0, &[0.0], 1e-12).is_err());
}

#[test]
fn symmetric_and_bordered_paths_agree() {
    let d = disc(10);
    let p = params(0.0, 100.0);
    let a = d.system.a(&p);
    let s = &d.system;
    let mut rhs = s.rhs.momentum(p.eta);
    rhs.extend_from_slice(&s.rhs.continuity);
    rhs.push(0.0);
    let sym = SaddleFactorization::new(&a, &s.b, &s.ghost_pressure, 1.0, &s.mean, DEFAULT_RTOL).unwrap();
    assert!(matches!(sym, SaddleFactorization::Symmetric(_)));
    let bor = BorderedSolver::new(&a, &s.b, &s.ghost_pressure, 1.0, &s.mean, DEFAULT_RTOL).unwrap();
    let (x, _, _) = sym.solve(&rhs).unwrap();
    let (y, _, _) = bor.solve(&rhs).unwrap();
    let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-8 * norm(&x), "{:e}", norm(&diff) / norm(&x));
}

#[test]
fn solving_twice_is_bitwise_identical() {
    let d = disc(10);
    let p = params(20.0, 100.0);
    let a = solve(&d.system, &p, DEFAULT_RTOL).unwrap();
    let b = solve(&d.system, &p, DEFAULT_RTOL).unwrap();
    assert!(a.velocity.iter().zip(&b.velocity).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert!(a.pressure.iter().zip(&b.pressure).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.multiplier.to_bits(), b.multiplier.to_bits());
}

#[test]
fn infsup_is_positive_and_mesh_independent() {
    let p = params(0.0, 100.0);
    let theta: Vec<f64> = [5, 10, 20, 40]
        .iter()
        .map(|&n| {
            let d = disc(n);
            assert!(coercivity_probe(&d.system, &p, 20, n as u64) > 0.0);
            estimate_infsup(&d.system, &p, &d.cell_areas(), 300, 1e-8).unwrap().theta
        })
        .collect();
    assert!(theta.iter().all(|t| *t > 0.0), "{theta:?}");
    let (lo, hi) = theta.iter().fold((f64::INFINITY, 0.0f64), |(l, h), t| (l.min(*t), h.max(*t)));
    assert!(hi / lo <= 2.0, "{theta:?}");
}

/// Dense eigenvalues of `B N^{-1} B^T + J` on the complement of the constants.
fn dense_schur_spectrum(d: &Discretization, p: &ResolvedParams) -> Vec<f64> {
    let s = &d.system;
    let n = dense(&s.velocity.norm_matrix(p.gamma, p.eta));
    let b = dense(&s.b);
    let j = dense(&s.ghost_pressure);
    let ninv_bt = n.cholesky().unwrap().solve(&b.transpose());
    let schur = &b * ninv_bt + j;
    let c = nalgebra::DVector::from_vec(constant_pressure(s, &d.cell_areas()));
    let c = &c / c.norm();
    let np = s.n_pressure();
    let proj = DMatrix::identity(np, np) - &c * c.transpose();
    let restricted = &proj * schur * &proj;
    let mut ev: Vec<f64> = SymmetricEigen::new(restricted).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    // The projector contributes one exact zero, along the constants.
    ev.remove(0);
    ev
}

#[test]
fn infsup_matches_dense_spectrum_and_kernel_is_trivial() {
    let d = disc(5);
    let p = params(0.0, 100.0);
    let ev = dense_schur_spectrum(&d, &p);
    let top = ev[ev.len() - 1];
    let kernel = ev.iter().filter(|v| **v <= 1e-10 * top).count();
    assert_eq!(kernel, 0, "smallest eigenvalues {:?}", &ev[..3]);
    let est = estimate_infsup(&d.system, &p, &d.cell_areas(), 400, 1e-10).unwrap();
    assert!((est.min_eigenvalue - ev[0]).abs() <= 1e-6 * ev[0], "{} against {}", est.min_eigenvalue, ev[0]);
}

#[test]
fn grad_div_sweep_trend() {
    let d = disc(10);
    let h = d.system.h;
    let norms: Vec<(f64, f64, f64)> = [0.0, 1.0, 10.0 / h]
        .iter()
        .map(|&g| {
            let p = params(g, 100.0);
            let sol = solve(&d.system, &p, DEFAULT_RTOL).unwrap();
            let nm = d.system.velocity.norm_matrix(g, p.eta);
            let u = bilinear(&nm, &sol.velocity, &sol.velocity).sqrt();
            (g, u, norm(&sol.pressure))
        })
        .collect();
    let (_, u0, p0) = norms[0];
    for &(g, u, p) in &norms {
        assert!(u <= 2.0 * u0, "velocity norm {u} at gamma {g}, {u0} at 0");
        assert!(p <= 2.0 * (1.0 + g).sqrt() * p0, "pressure norm {p} at gamma {g}, {p0} at 0");
    }
}
