#![allow(dead_code)]

use cutsv::geometry::ImplicitCircle;
use cutsv::mesh::Point;

/// Exponents `(a, b)` with `a + b <= degree`.
pub fn monomials(degree: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for d in 0..=degree as i32 {
        for a in (0..=d).rev() {
            out.push((a, d - a));
        }
    }
    out
}

/// `y` range of the vertical slice of a triangle at abscissa `x`.
fn triangle_slice(tri: &[Point; 3], x: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..3 {
        let (p, q) = (tri[i], tri[(i + 1) % 3]);
        let (x0, x1) = (p.x.min(q.x), p.x.max(q.x));
        if x1 - x0 < 1e-300 || x < x0 || x > x1 {
            continue;
        }
        let y = p.y + (x - p.x) / (q.x - p.x) * (q.y - p.y);
        lo = lo.min(y);
        hi = hi.max(y);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Integrals of the monomials over the vertical slice `{x} × ([lo, hi] ∩ disk)`.
fn slice_integrals(tri: &[Point; 3], disk: Option<&ImplicitCircle>, mono: &[(i32, i32)], x: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let Some((mut lo, mut hi)) = triangle_slice(tri, x) else { return };
    if let Some(d) = disk {
        let dx = x - d.center.x;
        let s = d.radius * d.radius - dx * dx;
        if s <= 0.0 {
            return;
        }
        let s = s.sqrt();
        lo = lo.max(d.center.y - s);
        hi = hi.min(d.center.y + s);
    }
    if hi <= lo {
        return;
    }
    for (v, &(a, b)) in out.iter_mut().zip(mono) {
        let e = b + 1;
        *v = x.powi(a) * (hi.powi(e) - lo.powi(e)) / e as f64;
    }
}

struct Simpson<'a> {
    tri: &'a [Point; 3],
    disk: Option<&'a ImplicitCircle>,
    mono: &'a [(i32, i32)],
    evals: usize,
}

impl Simpson<'_> {
    fn f(&mut self, x: f64) -> Vec<f64> {
        self.evals += 1;
        let mut v = vec![0.0; self.mono.len()];
        slice_integrals(self.tri, self.disk, self.mono, x, &mut v);
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, a: f64, b: f64, fa: &[f64], fm: &[f64], fb: &[f64], whole: &[f64], tol: f64, depth: usize) -> Vec<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = self.f(lm);
        let frm = self.f(rm);
        let h = (b - a) / 12.0;
        let left: Vec<f64> = (0..fa.len()).map(|i| h * (fa[i] + 4.0 * flm[i] + fm[i])).collect();
        let right: Vec<f64> = (0..fa.len()).map(|i| h * (fm[i] + 4.0 * frm[i] + fb[i])).collect();
        let err = (0..fa.len()).map(|i| (left[i] + right[i] - whole[i]).abs()).fold(0.0, f64::max);
        if depth == 0 || err <= 15.0 * tol {
            // Richardson step on the two Simpson estimates.
            return (0..fa.len()).map(|i| left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0).collect();
        }
        let l = self.step(a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1);
        let r = self.step(m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1);
        l.iter().zip(&r).map(|(x, y)| x + y).collect()
    }
}

/// `∫_{K ∩ disk} x^a y^b` for every monomial, by adaptive Simpson integration over
/// vertical slices whose inner integrals are exact. `disk = None` integrates over `K`.
pub fn oracle_moments(tri: &[Point; 3], disk: Option<&ImplicitCircle>, mono: &[(i32, i32)], tol: f64) -> Vec<f64> {
    let mut breaks: Vec<f64> = tri.iter().map(|p| p.x).collect();
    if let Some(d) = disk {
        breaks.push(d.center.x - d.radius);
        breaks.push(d.center.x + d.radius);
    }
    let (xmin, xmax) = (tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min), tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max));
    breaks.retain(|x| *x >= xmin && *x <= xmax);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut s = Simpson { tri, disk, mono, evals: 0 };
    let mut total = vec![0.0; mono.len()];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-15 {
            continue;
        }
        let fa = s.f(a);
        let fb = s.f(b);
        let fm = s.f(0.5 * (a + b));
        let whole: Vec<f64> = (0..mono.len()).map(|i| (b - a) / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i])).collect();
        let part = s.step(a, b, &fa, &fm, &fb, &whole, tol, 40);
        total.iter_mut().zip(&part).for_each(|(t, p)| *t += p);
    }
    total
}

pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

pub fn reference_disk() -> ImplicitCircle {
    ImplicitCircle::reference()
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, by Newton iteration on `P_n`.
pub fn gauss01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// `∫_{K ∩ disk} f` for a polynomial `f` of degree below 20 in `y`; the outer
/// integral is adaptive, the inner one a 10-point Gauss rule on the exact slice.
pub fn oracle_integral(tri: &[Point; 3], disk: &ImplicitCircle, f: &dyn Fn(f64, f64) -> f64, tol: f64) -> f64 {
    let (gn, gw) = gauss01(10);
    let slice = |x: f64| -> f64 {
        let Some((mut lo, mut hi)) = triangle_slice(tri, x) else { return 0.0 };
        let dx = x - disk.center.x;
        let s = disk.radius * disk.radius - dx * dx;
        if s <= 0.0 {
            return 0.0;
        }
        let s = s.sqrt();
        lo = lo.max(disk.center.y - s);
        hi = hi.min(disk.center.y + s);
        if hi <= lo {
            return 0.0;
        }
        gn.iter().zip(&gw).map(|(t, w)| w * f(x, lo + t * (hi - lo))).sum::<f64>() * (hi - lo)
    };
    let mut breaks: Vec<f64> = tri.iter().map(|p| p.x).collect();
    breaks.push(disk.center.x - disk.radius);
    breaks.push(disk.center.x + disk.radius);
    let (xmin, xmax) = (breaks[..3].iter().copied().fold(f64::INFINITY, f64::min), breaks[..3].iter().copied().fold(f64::NEG_INFINITY, f64::max));
    breaks.retain(|x| *x >= xmin && *x <= xmax);
    breaks.sort_by(f64::total_cmp);
    fn step(g: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let (flm, frm) = (g(0.5 * (a + m)), g(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        step(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    breaks
        .windows(2)
        .filter(|w| w[1] - w[0] > 1e-15)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (fa, fm, fb) = (slice(a), slice(0.5 * (a + b)), slice(b));
            step(&slice, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
        })
        .sum()
}

/// Parameter range `[t0, t1]` of the part of segment `a + t (b - a)` inside the disk.
pub fn segment_in_disk(a: &Point, b: &Point, disk: &ImplicitCircle) -> Option<(f64, f64)> {
    let d = b - a;
    let f = a - disk.center;
    let (qa, qb, qc) = (d.norm_squared(), f.dot(&d), f.norm_squared() - disk.radius * disk.radius);
    let disc = qb * qb - qa * qc;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = (((-qb - s) / qa).max(0.0), ((-qb + s) / qa).min(1.0));
    (t1 > t0).then_some((t0, t1))
}
