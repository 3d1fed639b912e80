mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use common::{monomials, oracle_moments, pt, reference_disk};
use cutsv::geometry::{boundary_distance_strip, classify, CellClass, ImplicitCircle};
use cutsv::mesh::{build_type1_mesh, clough_tocher_refine, CtMesh};
use cutsv::quadrature::{cut_volume_rule, interface_rule, triangle_rule};
use proptest::prelude::*;

fn refined(n: usize) -> CtMesh {
    clough_tocher_refine(&build_type1_mesh(n).unwrap())
}

fn macro_index(n: usize, i: usize, j: usize, upper: bool) -> usize {
    2 * (i + j * n) + upper as usize
}

#[test]
fn vertex_sign_classification() {
    let ct = refined(5);
    let dom = reference_disk();
    let topo = classify(&ct, &dom);
    // {(0,0),(0.2,0),(0.2,0.2)}: only the last vertex is inside.
    let t = macro_index(5, 0, 0, false);
    let signs: Vec<bool> = ct.macro_mesh.triangle_points(t).iter().map(|p| dom.phi(p) < 0.0).collect();
    assert_eq!(signs, vec![false, false, true]);
    assert_eq!(topo.macro_class[t], CellClass::Cut);
    let t = macro_index(5, 2, 2, false);
    assert!(ct.macro_mesh.triangle_points(t).iter().all(|p| dom.phi(p) < 0.0));
    assert_eq!(topo.macro_class[t], CellClass::Interior);
}

#[test]
fn disk_area_and_circumference_at_n20() {
    let ct = refined(20);
    let dom = reference_disk();
    let topo = classify(&ct, &dom);
    let mut area = 0.0;
    let mut length = 0.0;
    for &k in &topo.active_cells {
        let tri = ct.mesh.triangle_points(k);
        area += cut_volume_rule(&tri, &dom, 8).weight_sum();
        if topo.is_cut(k) {
            length += interface_rule(&tri, &dom, 8).weight_sum();
        }
    }
    assert_abs_diff_eq!(area, PI * 0.2, epsilon = 1e-10);
    assert_abs_diff_eq!(length, 2.0 * PI * 0.2f64.sqrt(), epsilon = 1e-10);
}

#[test]
fn interface_moments() {
    let ct = refined(20);
    let dom = reference_disk();
    let topo = classify(&ct, &dom);
    let (mut n, mut x1, mut len) = ([0.0; 2], 0.0, 0.0);
    for &k in &topo.active_cells {
        if !topo.is_cut(k) {
            continue;
        }
        let rule = interface_rule(&ct.mesh.triangle_points(k), &dom, 8);
        for ((p, w), nv) in rule.points.iter().zip(&rule.weights).zip(&rule.normals) {
            n[0] += w * nv.x;
            n[1] += w * nv.y;
            x1 += w * p.x;
            len += w;
            assert_abs_diff_eq!(nv.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(nv.dot(&(p - dom.center)), dom.radius, epsilon = 1e-12);
            assert_abs_diff_eq!(dom.phi(p), 0.0, epsilon = 1e-12);
        }
    }
    assert_abs_diff_eq!(n[0], 0.0, epsilon = 1e-10);
    assert_abs_diff_eq!(n[1], 0.0, epsilon = 1e-10);
    assert_abs_diff_eq!(x1, 0.5 * len, epsilon = 1e-10);
}

#[test]
fn cut_monomials_match_subdivision_oracle_at_n10() {
    let ct = refined(10);
    let dom = reference_disk();
    let topo = classify(&ct, &dom);
    let mono = monomials(8);
    let mut worst = 0.0f64;
    let mut cells = 0;
    for &k in &topo.active_cells {
        if !topo.is_cut(k) {
            continue;
        }
        let tri = ct.mesh.triangle_points(k);
        let rule = cut_volume_rule(&tri, &dom, 8);
        let oracle = oracle_moments(&tri, Some(&dom), &mono, 1e-15);
        for (&(a, b), exact) in mono.iter().zip(&oracle) {
            let q = rule.integrate(|x| x.x.powi(a) * x.y.powi(b));
            worst = worst.max((q - exact).abs());
        }
        cells += 1;
    }
    assert!(cells > 0);
    assert!(worst <= 1e-9, "largest monomial deviation {worst:e}");
}

#[test]
fn oracle_agrees_with_full_triangle_rule() {
    let tri = [pt(0.1, 0.2), pt(0.7, 0.25), pt(0.3, 0.9)];
    let mono = monomials(6);
    let oracle = oracle_moments(&tri, None, &mono, 1e-15);
    let rule = triangle_rule(&tri, 6);
    for (&(a, b), exact) in mono.iter().zip(&oracle) {
        assert_abs_diff_eq!(rule.integrate(|x| x.x.powi(a) * x.y.powi(b)), *exact, epsilon = 1e-13);
    }
}

#[test]
fn cut_iff_some_child_rule_is_partial() {
    let ct = refined(10);
    let dom = reference_disk();
    let topo = classify(&ct, &dom);
    for (t, children) in ct.macro_to_children.iter().enumerate() {
        let partial = children.iter().any(|&c| {
            let tri = ct.mesh.triangle_points(c);
            (cut_volume_rule(&tri, &dom, 6).weight_sum() - ct.mesh.signed_area(c)).abs() > 1e-14
        });
        let is_cut = topo.macro_class[t] == CellClass::Cut;
        // An exterior macro cell has children with empty rules, which also differ.
        let exterior = topo.macro_class[t] == CellClass::Exterior;
        assert_eq!(partial, is_cut || exterior, "macro cell {t}");
    }
}

#[test]
fn strip_shrinks_linearly() {
    let dom = reference_disk();
    let measures: Vec<_> = [10, 20, 40, 80]
        .iter()
        .map(|&n| {
            let ct = refined(n);
            boundary_distance_strip(&ct, &classify(&ct, &dom))
        })
        .collect();
    for m in &measures {
        assert_abs_diff_eq!(m.interior + m.cut, m.active, epsilon = 1e-12);
        assert_abs_diff_eq!(m.strip + m.strip_interior, m.active, epsilon = 1e-12);
        assert!(m.strip_interior <= m.interior + 1e-15);
    }
    for w in measures.windows(2) {
        let ratio = w[1].strip / w[0].strip;
        assert!((0.4..=0.6).contains(&ratio), "strip ratio {ratio}");
    }
}

#[test]
fn exterior_cell_rule_is_empty() {
    let dom = reference_disk();
    let rule = cut_volume_rule(&[pt(0.0, 0.0), pt(0.05, 0.0), pt(0.0, 0.05)], &dom, 6);
    assert!(rule.is_empty());
    assert_eq!(rule.weight_sum(), 0.0);
}

fn circle_strategy() -> impl Strategy<Value = ImplicitCircle> {
    (0.3f64..0.7, 0.3f64..0.7, 0.05f64..0.3).prop_map(|(x, y, r)| ImplicitCircle::new(pt(x, y), r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn topology_sets_partition(dom in circle_strategy(), n in 3usize..16) {
        let ct = refined(n);
        let topo = classify(&ct, &dom);
        let n_int = topo.macros_of(CellClass::Interior).len();
        let n_cut = topo.macros_of(CellClass::Cut).len();
        prop_assert_eq!(topo.n_active(), 3 * (n_int + n_cut));
        for &k in &topo.active_cells {
            let parent = topo.macro_class[ct.child_to_macro[k]];
            prop_assert_eq!(topo.ct_class[k], parent);
        }
        for &k in &topo.strip_interior_cells {
            prop_assert_eq!(topo.ct_class[k], CellClass::Interior);
            prop_assert!(!topo.strip[k]);
        }
        let strip = topo.strip_cells();
        prop_assert_eq!(strip.len() + topo.strip_interior_cells.len(), topo.n_active());
        for &f in &topo.ghost_faces {
            let [a, b] = ct.mesh.faces[f].cells;
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert!(topo.is_active(a) && topo.is_active(b));
            prop_assert!(topo.is_cut(a) || topo.is_cut(b));
        }
    }

    #[test]
    fn weights_positive_and_areas_add_up(dom in circle_strategy(), n in 3usize..12) {
        let ct = refined(n);
        let topo = classify(&ct, &dom);
        let mut area = 0.0;
        let mut length = 0.0;
        for &k in &topo.active_cells {
            let tri = ct.mesh.triangle_points(k);
            let rule = cut_volume_rule(&tri, &dom, 6);
            prop_assert!(rule.weights.iter().all(|w| *w > 0.0));
            area += rule.weight_sum();
            if topo.is_cut(k) {
                let iface = interface_rule(&tri, &dom, 6);
                prop_assert!(iface.weights.iter().all(|w| *w > 0.0));
                length += iface.weight_sum();
            }
        }
        prop_assert!((area - dom.area()).abs() < 1e-10);
        prop_assert!((length - dom.circumference()).abs() < 1e-10);
    }
}
