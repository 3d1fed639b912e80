//! Quadrature on full triangles, cut volumes `K ∩ Ω`, and interface arcs `K̄ ∩ Γ`.

use std::f64::consts::PI;

use nalgebra::Vector2;

use crate::geometry::{Arc, CellClip, ImplicitCircle};
use crate::mesh::{signed_area, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleTarget {
    FullCell,
    CutVolume,
    Interface,
}

#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Outward unit normals at the points; only filled for interface rules.
    pub normals: Vec<Vector2<f64>>,
    pub degree: usize,
    pub target: RuleTarget,
}

impl QuadRule {
    pub fn empty(degree: usize, target: RuleTarget) -> Self {
        Self { points: Vec::new(), weights: Vec::new(), normals: Vec::new(), degree, target }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule on `[0, 1]` with `n` points.
pub fn gauss_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|w| 0.5 * w).collect())
}

/// Conical-product rule on the reference triangle `(0,0), (1,0), (0,1)` exact to `degree`.
///
/// Returns barycentric-style reference coordinates `(xi, eta)` and weights summing to 1/2.
pub fn reference_triangle_rule(degree: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    // The collapsed coordinate carries an extra linear Jacobian factor.
    let n_collapsed = (degree + 3) / 2;
    let n_line = (degree + 1).div_ceil(2).max(1);
    let (s_nodes, s_weights) = gauss_unit(n_collapsed);
    let (t_nodes, t_weights) = gauss_unit(n_line);
    let mut points = Vec::with_capacity(n_collapsed * n_line);
    let mut weights = Vec::with_capacity(n_collapsed * n_line);
    for (s, ws) in s_nodes.iter().zip(&s_weights) {
        for (t, wt) in t_nodes.iter().zip(&t_weights) {
            points.push([*s, (1.0 - s) * t]);
            weights.push(ws * wt * (1.0 - s));
        }
    }
    (points, weights)
}

/// Rule on a physical triangle exact for polynomials of total degree `degree`.
pub fn triangle_rule(tri: &[Point; 3], degree: usize) -> QuadRule {
    let mut rule = QuadRule::empty(degree, RuleTarget::FullCell);
    push_triangle(tri, degree, &mut rule);
    rule
}

fn push_triangle(tri: &[Point; 3], degree: usize, rule: &mut QuadRule) {
    let area = signed_area(tri);
    if area <= 0.0 {
        return;
    }
    let (pts, wts) = reference_triangle_rule(degree);
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    for (p, w) in pts.iter().zip(&wts) {
        rule.points.push(tri[0] + p[0] * e1 + p[1] * e2);
        rule.weights.push(2.0 * area * w);
    }
}

fn points_per_arc(degree: usize) -> usize {
    degree / 2 + 3
}

/// Rule over `K ∩ Ω`.
///
/// Uncut cells get the plain triangle rule. Cut cells are split into a fan of
/// straight sub-triangles over the chord polygon plus circular segments, each
/// segment integrated in polar coordinates between its chord and the exact arc.
pub fn cut_volume_rule(tri: &[Point; 3], dom: &ImplicitCircle, degree: usize) -> QuadRule {
    let clip = dom.clip_triangle(tri);
    cut_volume_rule_from_clip(&clip, dom, degree)
}

pub fn cut_volume_rule_from_clip(clip: &CellClip, dom: &ImplicitCircle, degree: usize) -> QuadRule {
    if clip.full {
        let tri = [clip.polygon[0], clip.polygon[1], clip.polygon[2]];
        return triangle_rule(&tri, degree);
    }
    let mut rule = QuadRule::empty(degree, RuleTarget::CutVolume);
    let poly = &clip.polygon;
    for i in 1..poly.len().saturating_sub(1) {
        push_triangle(&[poly[0], poly[i], poly[i + 1]], degree, &mut rule);
    }
    let n = points_per_arc(degree);
    let (nodes, weights) = gauss_unit(n);
    for arc in &clip.arcs {
        push_segment(arc, dom, &nodes, &weights, &mut rule);
    }
    rule
}

fn push_segment(arc: &Arc, dom: &ImplicitCircle, nodes: &[f64], weights: &[f64], rule: &mut QuadRule) {
    let r = dom.radius;
    let half = 0.5 * arc.span;
    let chord_distance = r * half.cos();
    let mid = arc.start + half;
    for (s, ws) in nodes.iter().zip(weights) {
        let theta = arc.start + s * arc.span;
        let dir = Vector2::new(theta.cos(), theta.sin());
        let rho_chord = chord_distance / (theta - mid).cos();
        let radial = r - rho_chord;
        if radial <= 0.0 {
            continue;
        }
        for (t, wt) in nodes.iter().zip(weights) {
            let rho = rho_chord + t * radial;
            rule.points.push(dom.center + rho * dir);
            rule.weights.push(ws * arc.span * wt * radial * rho);
        }
    }
}

/// Gauss rule in angle on the arcs `K̄ ∩ Γ`, with outward normals.
///
/// An empty rule means the cell does not meet the interface.
pub fn interface_rule(tri: &[Point; 3], dom: &ImplicitCircle, degree: usize) -> QuadRule {
    interface_rule_from_clip(&dom.clip_triangle(tri), dom, degree)
}

pub fn interface_rule_from_clip(clip: &CellClip, dom: &ImplicitCircle, degree: usize) -> QuadRule {
    let mut rule = QuadRule::empty(degree, RuleTarget::Interface);
    let (nodes, weights) = gauss_unit(points_per_arc(degree));
    for arc in &clip.arcs {
        for (s, w) in nodes.iter().zip(&weights) {
            let theta = arc.start + s * arc.span;
            let n = Vector2::new(theta.cos(), theta.sin());
            rule.points.push(dom.center + dom.radius * n);
            rule.weights.push(w * arc.span * dom.radius);
            rule.normals.push(n);
        }
    }
    rule
}

/// Gauss rule on a straight segment with `n` points.
pub fn segment_rule(a: &Point, b: &Point, n: usize) -> (Vec<Point>, Vec<f64>) {
    let (nodes, weights) = gauss_unit(n);
    let len = (b - a).norm();
    (nodes.iter().map(|t| a + *t * (b - a)).collect(), weights.iter().map(|w| w * len).collect())
}
