//! Randomized invariants for the geometry/marking layer.
//!
//! Three families of properties back the deterministic unit tests:
//!
//! * bisection refinement keeps meshes conforming — no hanging nodes, areas
//!   conserved, boundary and interface edges stay on their lines, and the
//!   result does not depend on the order or multiplicity of the marked list;
//! * the marking strategies select bulk/threshold sets with the documented
//!   minimality and determinism guarantees on arbitrary indicator vectors;
//! * quadrature rules integrate random polynomials of their advertised degree
//!   exactly, checked against closed-form barycentric moments on random
//!   (not reference) triangles.

use nsdarcy::adaptivity::{mark, MarkingConfig, MarkingStrategy};
use nsdarcy::geom::{vec2, TriGeom, Vec2};
use nsdarcy::mesh::{EdgeKind, Mesh};
use nsdarcy::quadrature::{EdgeRule, TriRule};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// mesh refinement
// ---------------------------------------------------------------------------

/// Resolve proptest indices against the current element count.
fn pick_marked(picks: &[prop::sample::Index], nelem: usize) -> Vec<usize> {
    picks.iter().map(|ix| ix.index(nelem)).collect()
}

/// Fingerprint of a triangle's vertex coordinates, order-independent.
fn coord_key(mesh: &Mesh, t: usize) -> [(u64, u64); 3] {
    let tri = &mesh.triangles[t];
    let mut key = [(0u64, 0u64); 3];
    for (k, &v) in tri.vertices.iter().enumerate() {
        key[k] = (mesh.nodes[v].x.to_bits(), mesh.nodes[v].y.to_bits());
    }
    key.sort_unstable();
    key
}

fn total_area(mesh: &Mesh) -> f64 {
    (0..mesh.triangles.len()).map(|t| mesh.geom(t).area).sum()
}

fn on_line(v: f64, line: f64) -> bool {
    (v - line).abs() < 1e-12
}

/// Check every structural invariant that `Mesh` itself does not re-validate
/// when rebuilding from parts after a refinement pass.
fn assert_conforming(mesh: &Mesh, width: f64) -> Result<(), TestCaseError> {
    // areas add up to the fixed domain
    prop_assert!(
        (total_area(mesh) - 2.0 * width).abs() < 1e-11 * width,
        "area drift: {} vs {}",
        total_area(mesh),
        2.0 * width
    );

    // boundary edges sit on the rectangle boundary, interface edges on y = 1,
    // interior edges have two incident elements
    for (e, edge) in mesh.edges.iter().enumerate() {
        let a = mesh.nodes[edge.nodes[0]];
        let b = mesh.nodes[edge.nodes[1]];
        match edge.kind {
            EdgeKind::GammaS | EdgeKind::GammaD => {
                let on_boundary = (on_line(a.x, 0.0) && on_line(b.x, 0.0))
                    || (on_line(a.x, width) && on_line(b.x, width))
                    || (on_line(a.y, 0.0) && on_line(b.y, 0.0))
                    || (on_line(a.y, 2.0) && on_line(b.y, 2.0));
                prop_assert!(
                    on_boundary && edge.elements.1.is_none(),
                    "edge {e} tagged boundary but lies at {a:?}-{b:?}"
                );
            }
            EdgeKind::Sigma => {
                prop_assert!(
                    on_line(a.y, 1.0) && on_line(b.y, 1.0) && edge.elements.1.is_some(),
                    "interface edge {e} off the line y=1: {a:?}-{b:?}"
                );
            }
            EdgeKind::InteriorS | EdgeKind::InteriorD => {
                prop_assert!(edge.elements.1.is_some(), "interior edge {e} has one element");
            }
        }
    }

    // no hanging nodes: a node lying on an edge must be one of its endpoints
    for (e, edge) in mesh.edges.iter().enumerate() {
        let a = mesh.nodes[edge.nodes[0]];
        let b = mesh.nodes[edge.nodes[1]];
        let d = b - a;
        let len_sq = d.dot(d);
        for (n, &p) in mesh.nodes.iter().enumerate() {
            if n == edge.nodes[0] || n == edge.nodes[1] {
                continue;
            }
            let t = (p - a).dot(d) / len_sq;
            if t <= 1e-9 || t >= 1.0 - 1e-9 {
                continue;
            }
            let foot = a + d * t;
            let dist_sq = (p - foot).dot(p - foot);
            prop_assert!(
                dist_sq > 1e-18,
                "node {n} at {p:?} hangs on edge {e} ({a:?}-{b:?})"
            );
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random marking sequences keep the mesh conforming, shrink every marked
    /// element, and give the same result for any ordering of the marked list.
    #[test]
    fn refinement_stays_conforming(
        width in 0.8..2.2f64,
        n0 in 1..=2usize,
        rounds in prop::collection::vec(
            prop::collection::vec(any::<prop::sample::Index>(), 1..=6),
            1..=3,
        ),
    ) {
        let mut mesh = Mesh::structured(width, n0).unwrap();
        assert_conforming(&mesh, width)?;
        for picks in &rounds {
            let marked = pick_marked(picks, mesh.triangles.len());
            let refined = mesh.refine(&marked).unwrap();

            prop_assert!(
                refined.triangles.len() > mesh.triangles.len(),
                "refining {} marked elements did not grow the mesh",
                marked.len()
            );
            for &t in &marked {
                let key = coord_key(&mesh, t);
                let survived = (0..refined.triangles.len())
                    .any(|s| coord_key(&refined, s) == key);
                prop_assert!(!survived, "marked element {t} survived refinement intact");
            }
            assert_conforming(&refined, width)?;

            // order and multiplicity of the marked list are irrelevant
            let mut shuffled: Vec<usize> = marked.iter().rev().cloned().collect();
            shuffled.extend_from_slice(&marked);
            let again = mesh.refine(&shuffled).unwrap();
            prop_assert_eq!(refined.nodes.len(), again.nodes.len());
            for (p, q) in refined.nodes.iter().zip(&again.nodes) {
                prop_assert_eq!(p.x.to_bits(), q.x.to_bits());
                prop_assert_eq!(p.y.to_bits(), q.y.to_bits());
            }
            prop_assert_eq!(refined.triangles.len(), again.triangles.len());
            for (s, t) in refined.triangles.iter().zip(&again.triangles) {
                prop_assert_eq!(s.vertices, t.vertices);
                prop_assert_eq!(s.subdomain, t.subdomain);
                prop_assert_eq!(s.refinement_edge, t.refinement_edge);
            }

            mesh = refined;
        }
    }
}

// ---------------------------------------------------------------------------
// marking strategies
// ---------------------------------------------------------------------------

fn arb_indicators() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![2 => Just(0.0), 5 => 1e-6..1e3f64],
        1..160,
    )
}

proptest! {
    /// Dörfler marking returns the minimal deterministic bulk set.
    #[test]
    fn dorfler_marks_a_minimal_bulk_set(
        values in arb_indicators(),
        theta in 0.05..0.95f64,
    ) {
        let config = MarkingConfig {
            theta,
            strategy: MarkingStrategy::Dorfler,
            ..Default::default()
        };
        let marked = mark(&values, &config);
        prop_assert_eq!(&marked, &mark(&values, &config), "marking is not deterministic");
        prop_assert!(marked.windows(2).all(|w| w[0] < w[1]), "not sorted/unique");
        prop_assert!(marked.iter().all(|&t| t < values.len()));

        let total: f64 = values.iter().sum();
        if total == 0.0 {
            prop_assert!(marked.is_empty());
            return Ok(());
        }
        prop_assert!(!marked.is_empty());
        prop_assert!(marked.iter().all(|&t| values[t] > 0.0), "marked a zero indicator");

        // greedy from the top: nothing unmarked may exceed a marked value
        let max_unmarked = (0..values.len())
            .filter(|t| marked.binary_search(t).is_err())
            .map(|t| values[t])
            .fold(0.0, f64::max);
        prop_assert!(marked.iter().all(|&t| values[t] >= max_unmarked));

        let target = theta * theta * total;
        let slack = 1e-9 * total;
        let sum: f64 = marked.iter().map(|&t| values[t]).sum();
        prop_assert!(sum >= target - slack, "bulk violated: {sum} < {target}");
        let min_marked = marked.iter().map(|&t| values[t]).fold(f64::INFINITY, f64::min);
        prop_assert!(
            sum - min_marked < target + slack,
            "not minimal: dropping {min_marked} keeps {} >= {target}",
            sum - min_marked
        );
    }

    /// θ = 1 must select exactly the elements with positive indicators.
    #[test]
    fn dorfler_with_full_fraction_marks_all_positive(values in arb_indicators()) {
        let config = MarkingConfig {
            theta: 1.0,
            strategy: MarkingStrategy::Dorfler,
            ..Default::default()
        };
        let marked = mark(&values, &config);
        let expected: Vec<usize> = (0..values.len()).filter(|&t| values[t] > 0.0).collect();
        prop_assert_eq!(marked, expected);
    }

    /// Maximum marking is exactly the θ²·max threshold set.
    #[test]
    fn maximum_marking_is_a_threshold_set(
        values in arb_indicators(),
        theta in 0.05..=1.0f64,
    ) {
        let config = MarkingConfig {
            theta,
            strategy: MarkingStrategy::Maximum,
            ..Default::default()
        };
        let marked = mark(&values, &config);
        let max = values.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            prop_assert!(marked.is_empty());
            return Ok(());
        }
        let cut = theta * theta * max;
        let expected: Vec<usize> = (0..values.len()).filter(|&t| values[t] >= cut).collect();
        prop_assert_eq!(marked, expected);
        prop_assert!(values.iter().any(|&v| v == max));
    }
}

// ---------------------------------------------------------------------------
// quadrature
// ---------------------------------------------------------------------------

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// ∫_T λ₀^a λ₁^b λ₂^c dx = 2|T| · a! b! c! / (a+b+c+2)! on any triangle.
fn exact_bary_moment(area: f64, p: [u32; 3]) -> f64 {
    2.0 * area * factorial(p[0]) * factorial(p[1]) * factorial(p[2])
        / factorial(p[0] + p[1] + p[2] + 2)
}

/// All barycentric monomial exponents with total degree ≤ 6, fixed order.
fn monomials_up_to_six() -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for d in 0..=6u32 {
        for a in 0..=d {
            for b in 0..=(d - a) {
                out.push([a, b, d - a - b]);
            }
        }
    }
    out
}

/// Barycentric coordinates by Cramer's rule, independent of `TriGeom`.
fn barycentric(g: &TriGeom, x: Vec2) -> [f64; 3] {
    let d = (g.v[1] - g.v[0]).cross(g.v[2] - g.v[0]);
    let l1 = (x - g.v[0]).cross(g.v[2] - g.v[0]) / d;
    let l2 = (g.v[1] - g.v[0]).cross(x - g.v[0]) / d;
    [1.0 - l1 - l2, l1, l2]
}

fn eval_poly(monos: &[[u32; 3]], coeffs: &[f64], cap: u32, l: [f64; 3]) -> f64 {
    monos
        .iter()
        .zip(coeffs)
        .filter(|(m, _)| m[0] + m[1] + m[2] <= cap)
        .map(|(m, c)| {
            c * l[0].powi(m[0] as i32) * l[1].powi(m[1] as i32) * l[2].powi(m[2] as i32)
        })
        .sum()
}

fn exact_poly_integral(monos: &[[u32; 3]], coeffs: &[f64], cap: u32, area: f64) -> f64 {
    monos
        .iter()
        .zip(coeffs)
        .filter(|(m, _)| m[0] + m[1] + m[2] <= cap)
        .map(|(m, c)| c * exact_bary_moment(area, *m))
        .sum()
}

fn check_tri_rule(
    rule: &TriRule,
    degree: u32,
    g: &TriGeom,
    monos: &[[u32; 3]],
    coeffs: &[f64],
) -> Result<(), TestCaseError> {
    let wsum: f64 = rule.weights.iter().sum();
    prop_assert!((wsum - 1.0).abs() < 1e-13, "weights sum to {wsum}");
    for (pt, &w) in rule.points.iter().zip(&rule.weights) {
        prop_assert!(w > 0.0, "non-positive weight {w}");
        prop_assert!((pt[0] + pt[1] + pt[2] - 1.0).abs() < 1e-12);
    }
    let mut quad = 0.0;
    for (pt, &w) in rule.points.iter().zip(&rule.weights) {
        // round-trip through the physical point exercises the mapping
        let x = g.point(*pt);
        quad += w * eval_poly(monos, coeffs, degree, barycentric(g, x));
    }
    quad *= g.area;
    let exact = exact_poly_integral(monos, coeffs, degree, g.area);
    let scale = 1.0 + g.area * coeffs.iter().map(|c| c.abs()).sum::<f64>();
    prop_assert!(
        (quad - exact).abs() < 1e-11 * scale,
        "degree-{degree} rule: {quad} vs exact {exact} on triangle {:?}",
        g.v
    );
    Ok(())
}

fn arb_triangle() -> impl Strategy<Value = TriGeom> {
    let coord = -1.5..2.5f64;
    (
        (coord.clone(), coord.clone()),
        (coord.clone(), coord.clone()),
        (coord.clone(), coord),
    )
        .prop_filter_map("triangle too thin", |(a, b, c)| {
            let (a, b, c) = (vec2(a.0, a.1), vec2(b.0, b.1), vec2(c.0, c.1));
            let area2 = (b - a).cross(c - a);
            if area2.abs() < 0.2 {
                return None;
            }
            Some(if area2 > 0.0 {
                TriGeom::new([a, b, c])
            } else {
                TriGeom::new([a, c, b])
            })
        })
}

proptest! {
    /// Every symmetric rule and the collapsed tensor rule integrate random
    /// polynomials of their advertised degree exactly on random triangles.
    #[test]
    fn triangle_rules_integrate_their_degree(
        g in arb_triangle(),
        coeffs in prop::collection::vec(-10.0..10.0f64, 28),
    ) {
        let monos = monomials_up_to_six();
        check_tri_rule(TriRule::degree1(), 1, &g, &monos, &coeffs)?;
        check_tri_rule(TriRule::degree2(), 2, &g, &monos, &coeffs)?;
        check_tri_rule(TriRule::degree4(), 4, &g, &monos, &coeffs)?;
        check_tri_rule(TriRule::degree6(), 6, &g, &monos, &coeffs)?;
        check_tri_rule(&TriRule::collapsed(6), 6, &g, &monos, &coeffs)?;
        check_tri_rule(&TriRule::collapsed(10), 6, &g, &monos, &coeffs)?;
    }

    /// Gauss rules on [0,1] hit random polynomials up to degree 2n−1 exactly
    /// and keep their points ordered inside the open interval.
    #[test]
    fn gauss_rules_integrate_their_degree(
        n in 1..=8usize,
        coeffs in prop::collection::vec(-10.0..10.0f64, 16),
    ) {
        let rule = EdgeRule::gauss(n);
        prop_assert_eq!(rule.points.len(), n);
        prop_assert!(rule.points.iter().all(|&t| t > 0.0 && t < 1.0));
        prop_assert!(rule.points.windows(2).all(|w| w[0] < w[1]), "points not ascending");
        prop_assert!(rule.weights.iter().all(|&w| w > 0.0));
        let wsum: f64 = rule.weights.iter().sum();
        prop_assert!((wsum - 1.0).abs() < 1e-13);

        let degree = 2 * n - 1;
        let eval = |t: f64| -> f64 {
            coeffs
                .iter()
                .take(degree + 1)
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32))
                .sum()
        };
        let quad: f64 = rule.points.iter().zip(&rule.weights).map(|(&t, &w)| w * eval(t)).sum();
        let exact: f64 = coeffs
            .iter()
            .take(degree + 1)
            .enumerate()
            .map(|(k, c)| c / (k as f64 + 1.0))
            .sum();
        let scale = 1.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
        prop_assert!(
            (quad - exact).abs() < 1e-13 * scale,
            "gauss({n}): {quad} vs exact {exact}"
        );
    }
}

#[test]
fn marking_ignores_all_zero_indicators() {
    for strategy in [MarkingStrategy::Dorfler, MarkingStrategy::Maximum] {
        let config = MarkingConfig {
            theta: 0.5,
            strategy,
            ..Default::default()
        };
        assert!(mark(&[0.0; 7], &config).is_empty());
        assert!(mark(&[], &config).is_empty());
    }
}
