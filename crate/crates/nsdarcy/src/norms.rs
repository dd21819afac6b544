//! Error norms of discrete solutions against analytic reference fields.
//!
//! The product-space error combines ‖·‖_{1,Ω_S} for the free-flow velocity,
//! ‖·‖_{div,Ω_D} for the porous flux, ‖·‖_{0,Ω} for the pressure and the
//! fractional trace norm ‖·‖_{1/2,Σ} for the interface multiplier, summed
//! (not root-sum-squared). The H^{1/2} norm is evaluated through the
//! Slobodeckij double integral with dyadically graded quadrature toward the
//! corners where the piecewise-polynomial integrand loses smoothness.

use crate::dofs::{DiscreteSolution, DofMap};
use crate::geom::vec2;
use crate::mesh::{Mesh, Subdomain};
use crate::model::ExactSolution;
use crate::quadrature::{EdgeRule, TriRule};

#[derive(Clone, Copy, Debug)]
pub struct ErrorNorms {
    /// ‖u_S − u_{h,S}‖_{1,Ω_S}
    pub us_h1: f64,
    /// ‖u_D − u_{h,D}‖_{div,Ω_D}
    pub ud_hdiv: f64,
    /// ‖p − p_h‖_{0,Ω}
    pub p_l2: f64,
    /// ‖λ − λ_h‖_{1/2,Σ}
    pub lambda_h_half: f64,
}

impl ErrorNorms {
    /// Product-space norm: the sum of the component norms.
    pub fn composite(&self) -> f64 {
        self.us_h1 + self.ud_hdiv + self.p_l2 + self.lambda_h_half
    }
}

/// Experimental order of convergence between two levels.
pub fn eoc(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    assert!(e_coarse > 0.0 && e_fine > 0.0 && h_coarse > h_fine);
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// All error norms at production quadrature degrees.
pub fn compute_errors(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
) -> ErrorNorms {
    compute_errors_with_degree(mesh, dofs, sol, exact, 10, 6)
}

/// Error norms with explicit quadrature resolution (used by the
/// refined-quadrature oracle tests).
pub fn compute_errors_with_degree(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    vol_degree: usize,
    edge_points: usize,
) -> ErrorNorms {
    let rule = TriRule::collapsed(vol_degree);
    let s_tris: Vec<usize> = mesh.subdomain_triangles(Subdomain::S).collect();
    let d_tris: Vec<usize> = mesh.subdomain_triangles(Subdomain::D).collect();
    let all: Vec<usize> = (0..mesh.triangles.len()).collect();
    ErrorNorms {
        us_h1: us_h1_error_sq(mesh, dofs, sol, exact, &s_tris, &rule).sqrt(),
        ud_hdiv: ud_hdiv_error_sq(mesh, dofs, sol, exact, &d_tris, &rule).sqrt(),
        p_l2: p_l2_error_sq(mesh, dofs, sol, exact, &all, &rule).sqrt(),
        lambda_h_half: lambda_error_h_half_sq(mesh, dofs, sol, exact, edge_points).sqrt(),
    }
}

/// ‖u_S − u_{h,S}‖²_{1} over the given free-flow elements.
pub fn us_h1_error_sq(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    tris: &[usize],
    rule: &TriRule,
) -> f64 {
    let mut total = 0.0;
    for &t in tris {
        assert_eq!(mesh.triangles[t].subdomain, Subdomain::S);
        let g = mesh.geom(t);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = g.point(*bary);
            let (vh, gh) = sol.eval_us(mesh, dofs, t, *bary);
            let dv = (exact.u_s)(x) - vh;
            let dg = (exact.grad_u_s)(x) - gh;
            total += w * g.area * (dv.dot(dv) + dg.ddot(dg));
        }
    }
    total
}

/// ‖u_D − u_{h,D}‖²_{div} over the given porous elements.
pub fn ud_hdiv_error_sq(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    tris: &[usize],
    rule: &TriRule,
) -> f64 {
    let mut total = 0.0;
    for &t in tris {
        assert_eq!(mesh.triangles[t].subdomain, Subdomain::D);
        let g = mesh.geom(t);
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = g.point(*bary);
            let (vh, divh) = sol.eval_ud(mesh, dofs, t, x);
            let dv = (exact.u_d)(x) - vh;
            let dd = (exact.div_u_d)(x) - divh;
            total += w * g.area * (dv.dot(dv) + dd * dd);
        }
    }
    total
}

/// ‖p − p_h‖²_{0} over the given elements (using the subdomain's exact field).
pub fn p_l2_error_sq(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    tris: &[usize],
    rule: &TriRule,
) -> f64 {
    let mut total = 0.0;
    for &t in tris {
        let g = mesh.geom(t);
        let ph = sol.pressure(dofs, t);
        let p_exact = match mesh.triangles[t].subdomain {
            Subdomain::S => &exact.p_s,
            Subdomain::D => &exact.p_d,
        };
        for (bary, &w) in rule.points.iter().zip(&rule.weights) {
            let x = g.point(*bary);
            let d = p_exact(x) - ph;
            total += w * g.area * d * d;
        }
    }
    total
}

/// ‖λ − λ_h‖²_{1/2,Σ} with λ the trace of the exact Darcy pressure.
pub fn lambda_error_h_half_sq(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    edge_points: usize,
) -> f64 {
    lambda_error_on_edges(mesh, dofs, sol, exact, &mesh.interface_edges, edge_points)
}

/// Same as [`lambda_error_h_half_sq`] restricted to a subset of interface
/// edges (patch-local norms for efficiency checks).
pub fn lambda_error_on_edges(
    mesh: &Mesh,
    dofs: &DofMap,
    sol: &DiscreteSolution,
    exact: &ExactSolution,
    edges: &[usize],
    edge_points: usize,
) -> f64 {
    let segments: Vec<(f64, f64)> = edges
        .iter()
        .map(|&e| {
            let a = mesh.nodes[mesh.edges[e].nodes[0]].x;
            let b = mesh.nodes[mesh.edges[e].nodes[1]].x;
            (a.min(b), a.max(b))
        })
        .collect();
    let y = mesh.nodes[mesh.edges[edges[0]].nodes[0]].y;
    let f = |seg: usize, x: f64| -> f64 {
        let p = vec2(x, y);
        (exact.p_d)(p) - sol.lambda_at(mesh, dofs, edges[seg], p)
    };
    h_half_norm_sq_segments(&segments, &f, edge_points)
}

/// ‖f‖²_{1/2} = ‖f‖²_{L²} + |f|²_{1/2} of a function given piecewise on a
/// list of 1D segments, via the Slobodeckij double integral
/// ∬ (f(s) − f(t))²/(s − t)² ds dt. The function may kink at segment
/// endpoints; quadrature is graded dyadically toward shared corners.
pub fn h_half_norm_sq_segments(
    segments: &[(f64, f64)],
    f: &dyn Fn(usize, f64) -> f64,
    edge_points: usize,
) -> f64 {
    assert!(!segments.is_empty());
    let rule = EdgeRule::gauss(edge_points);
    let mut l2 = 0.0;
    for (i, &(a, b)) in segments.iter().enumerate() {
        assert!(b > a);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let v = f(i, a + t * (b - a));
            l2 += w * (b - a) * v * v;
        }
    }
    l2 + slobodeckij_sq_segments(segments, f, edge_points)
}

/// The H^{1/2} Slobodeckij seminorm squared of a piecewise function.
pub fn slobodeckij_sq_segments(
    segments: &[(f64, f64)],
    f: &dyn Fn(usize, f64) -> f64,
    edge_points: usize,
) -> f64 {
    const GRADE_LEVELS: usize = 7;
    let rule = EdgeRule::gauss(edge_points);
    // staggered rule for the t-direction of same-segment blocks, so that
    // quadrature nodes never coincide and the 0/0 on the diagonal s = t of
    // the (continuously extendable) difference quotient is never sampled
    let rule_stag = EdgeRule::gauss(edge_points + 1);
    // double integral of one sub-rectangle [a1,b1] × [a2,b2]
    let cell = |s1: usize, a1: f64, b1: f64, s2: usize, a2: f64, b2: f64, stagger: bool| -> f64 {
        let rt = if stagger { &rule_stag } else { &rule };
        let mut acc = 0.0;
        for (&ts, &ws) in rule.points.iter().zip(&rule.weights) {
            let s = a1 + ts * (b1 - a1);
            let fs = f(s1, s);
            for (&tt, &wt) in rt.points.iter().zip(&rt.weights) {
                let t = a2 + tt * (b2 - a2);
                let d = s - t;
                let df = fs - f(s2, t);
                acc += ws * wt * (b1 - a1) * (b2 - a2) * (df * df) / (d * d);
            }
        }
        acc
    };
    // dyadic pieces of (a, b) accumulating toward the end `toward_b`
    let graded = |a: f64, b: f64, toward_b: bool| -> Vec<(f64, f64)> {
        let mut pieces = Vec::with_capacity(GRADE_LEVELS + 1);
        let mut lo = a;
        let mut hi = b;
        for _ in 0..GRADE_LEVELS {
            let mid = 0.5 * (lo + hi);
            if toward_b {
                pieces.push((lo, mid));
                lo = mid;
            } else {
                pieces.push((mid, hi));
                hi = mid;
            }
        }
        pieces.push((lo, hi));
        pieces
    };
    let mut total = 0.0;
    for (i, &(a1, b1)) in segments.iter().enumerate() {
        for (j, &(a2, b2)) in segments.iter().enumerate() {
            if i == j {
                // smooth on the diagonal: the difference quotient extends
                // continuously, plain Gauss suffices
                total += cell(i, a1, b1, i, a1, b1, true);
            } else if (b1 - a2).abs() < 1e-12 * (b1 - a1).max(b2 - a2) {
                // j starts where i ends: grade both factors toward the corner
                for &(x1, x2) in &graded(a1, b1, true) {
                    for &(y1, y2) in &graded(a2, b2, false) {
                        total += cell(i, x1, x2, j, y1, y2, false);
                    }
                }
            } else if (b2 - a1).abs() < 1e-12 * (b1 - a1).max(b2 - a2) {
                for &(x1, x2) in &graded(a1, b1, false) {
                    for &(y1, y2) in &graded(a2, b2, true) {
                        total += cell(i, x1, x2, j, y1, y2, false);
                    }
                }
            } else {
                total += cell(i, a1, b1, j, a2, b2, false);
            }
        }
    }
    total
}
