//! Local shape functions of the mixed discretization.
//!
//! Free-flow velocities use the Bernardi-Raugel element: componentwise linear
//! hat functions plus one normal edge bubble per edge, nine local degrees of
//! freedom. Porous fluxes use lowest-order Raviart-Thomas (RT0) with one mean
//! normal-flux dof per edge, oriented by the globally stored edge normal.
//! Pressures are elementwise constants and the interface multiplier is
//! continuous piecewise linear on the coarsened interface partition (see
//! [`crate::mesh::InterfacePartition`]).

use crate::geom::{Mat2, TriGeom, Vec2};

/// Local velocity dofs per element: 2 components × 3 vertices + 3 bubbles.
pub const N_BR: usize = 9;

/// Local dof layout: dof `2i + c` is component `c` at vertex `i`; dof `6 + k`
/// is the bubble on edge `k` (opposite vertex `k`).
pub fn br_vertex_dof(vertex: usize, component: usize) -> usize {
    debug_assert!(vertex < 3 && component < 2);
    2 * vertex + component
}

pub fn br_bubble_dof(edge: usize) -> usize {
    debug_assert!(edge < 3);
    6 + edge
}

/// Values and gradients of the nine velocity shape functions at a barycentric
/// point. The bubble on edge k is η_{k+1}η_{k+2} n_k with n_k the outward
/// unit edge normal; it vanishes on the other two edges and its trace along
/// edge k is purely normal with midpoint value n_k/4.
pub fn br_basis(g: &TriGeom, bary: [f64; 3]) -> ([Vec2; N_BR], [Mat2; N_BR]) {
    let mut vals = [Vec2::ZERO; N_BR];
    let mut grads = [Mat2::ZERO; N_BR];
    for i in 0..3 {
        for c in 0..2 {
            let d = br_vertex_dof(i, c);
            if c == 0 {
                vals[d] = Vec2 { x: bary[i], y: 0.0 };
                grads[d].m[0] = [g.grad_bary[i].x, g.grad_bary[i].y];
            } else {
                vals[d] = Vec2 { x: 0.0, y: bary[i] };
                grads[d].m[1] = [g.grad_bary[i].x, g.grad_bary[i].y];
            }
        }
    }
    for k in 0..3 {
        let a = (k + 1) % 3;
        let b = (k + 2) % 3;
        let n = g.edge_normal[k];
        let beta = bary[a] * bary[b];
        let grad_beta = bary[b] * g.grad_bary[a] + bary[a] * g.grad_bary[b];
        let d = br_bubble_dof(k);
        vals[d] = beta * n;
        grads[d] = n.outer(grad_beta);
    }
    (vals, grads)
}

/// div e(·) of the three bubble functions; constant on the element since the
/// bubbles are quadratic. For β = η_aη_b and constant n the identity
/// div e(βn) = (n Δβ + H_β n)/2 holds with Δβ = 2∇η_a·∇η_b and Hessian
/// H_β = ∇η_a⊗∇η_b + ∇η_b⊗∇η_a. The linear hat part of the element
/// contributes nothing (constant strain).
pub fn br_bubble_div_strain(g: &TriGeom) -> [Vec2; 3] {
    let mut out = [Vec2::ZERO; 3];
    for k in 0..3 {
        let a = (k + 1) % 3;
        let b = (k + 2) % 3;
        let ga = g.grad_bary[a];
        let gb = g.grad_bary[b];
        let n = g.edge_normal[k];
        let lap = 2.0 * ga.dot(gb);
        let hess_n = ga * gb.dot(n) + gb * ga.dot(n);
        out[k] = 0.5 * (lap * n + hess_n);
    }
    out
}

/// RT0 shape functions at a point, oriented so that the normal trace on edge
/// k equals `signs[k]` relative to the element-outward normal — i.e. passing
/// the mesh's per-element edge signs yields unit normal trace with respect to
/// the globally stored edge normal. Returns values and (constant) divergences.
pub fn rt0_basis(g: &TriGeom, signs: [i8; 3], x: Vec2) -> ([Vec2; 3], [f64; 3]) {
    let mut vals = [Vec2::ZERO; 3];
    let mut divs = [0.0; 3];
    for k in 0..3 {
        let s = signs[k] as f64;
        let scale = s * g.edge_len[k] / (2.0 * g.area);
        vals[k] = scale * (x - g.v[k]);
        divs[k] = scale * 2.0;
    }
    (vals, divs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;
    use crate::quadrature::EdgeRule;

    fn sample_tri() -> TriGeom {
        TriGeom::new([vec2(0.2, 0.1), vec2(1.3, 0.4), vec2(0.5, 1.2)])
    }

    #[test]
    fn vertex_dofs_are_nodal() {
        let g = sample_tri();
        for i in 0..3 {
            let mut bary = [0.0; 3];
            bary[i] = 1.0;
            let (vals, _) = br_basis(&g, bary);
            for j in 0..3 {
                for c in 0..2 {
                    let v = vals[br_vertex_dof(j, c)];
                    let want = if i == j { 1.0 } else { 0.0 };
                    let got = if c == 0 { v.x } else { v.y };
                    assert_eq!(got, want);
                    assert_eq!(if c == 0 { v.y } else { v.x }, 0.0);
                }
            }
            // bubbles vanish at vertices
            for k in 0..3 {
                assert_eq!(vals[br_bubble_dof(k)].norm(), 0.0);
            }
        }
    }

    #[test]
    fn bubbles_live_on_their_own_edge() {
        let g = sample_tri();
        for k in 0..3 {
            // midpoint of edge k in barycentric coordinates
            let mut bary = [0.5; 3];
            bary[k] = 0.0;
            let (vals, _) = br_basis(&g, bary);
            let b = vals[br_bubble_dof(k)];
            assert!((b - 0.25 * g.edge_normal[k]).norm() < 1e-14);
            // tangential component of the trace is zero by construction
            assert!(b.cross(g.edge_normal[k]).abs() < 1e-15);
            for j in 0..3 {
                if j != k {
                    assert!(vals[br_bubble_dof(j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn br_gradients_match_finite_differences() {
        let g = sample_tri();
        let coeffs: [f64; N_BR] = [0.3, -1.1, 0.7, 2.0, -0.4, 0.9, 1.5, -2.3, 0.6];
        let field = |x: Vec2| -> Vec2 {
            let (vals, _) = br_basis(&g, g.barycentric(x));
            let mut u = Vec2::ZERO;
            for d in 0..N_BR {
                u += coeffs[d] * vals[d];
            }
            u
        };
        let x0 = g.point([0.3, 0.45, 0.25]);
        let (vals, grads) = br_basis(&g, g.barycentric(x0));
        let _ = vals;
        let mut grad = Mat2::ZERO;
        for d in 0..N_BR {
            grad = grad + grads[d] * coeffs[d];
        }
        let h = 1e-6;
        let dx = (field(x0 + vec2(h, 0.0)) - field(x0 - vec2(h, 0.0))) / (2.0 * h);
        let dy = (field(x0 + vec2(0.0, h)) - field(x0 - vec2(0.0, h))) / (2.0 * h);
        assert!((vec2(grad.m[0][0], grad.m[1][0]) - dx).norm() < 1e-8);
        assert!((vec2(grad.m[0][1], grad.m[1][1]) - dy).norm() < 1e-8);
    }

    #[test]
    fn bubble_div_strain_matches_finite_differences() {
        let g = sample_tri();
        let exact = br_bubble_div_strain(&g);
        let h = 1e-5;
        for k in 0..3 {
            let strain_at = |x: Vec2| -> Mat2 {
                let (_, grads) = br_basis(&g, g.barycentric(x));
                grads[br_bubble_dof(k)].sym()
            };
            let x0 = g.centroid;
            let ex = (strain_at(x0 + vec2(h, 0.0)) - strain_at(x0 - vec2(h, 0.0))) * (0.5 / h);
            let ey = (strain_at(x0 + vec2(0.0, h)) - strain_at(x0 - vec2(0.0, h))) * (0.5 / h);
            let div = vec2(ex.m[0][0] + ey.m[0][1], ex.m[1][0] + ey.m[1][1]);
            assert!((div - exact[k]).norm() < 1e-8, "bubble {k}");
        }
    }

    #[test]
    fn rt0_normal_traces_are_kronecker() {
        let g = sample_tri();
        let signs = [1i8, -1, 1];
        let rule = EdgeRule::gauss(3);
        for j in 0..3 {
            // edge j runs from vertex (j+1)%3 to (j+2)%3
            let a = g.v[(j + 1) % 3];
            let b = g.v[(j + 2) % 3];
            for (&t, _) in rule.points.iter().zip(&rule.weights) {
                let x = a + t * (b - a);
                let (vals, _) = rt0_basis(&g, signs, x);
                for k in 0..3 {
                    // normal trace on edge j w.r.t. the sign-adjusted normal
                    let trace = vals[k].dot(g.edge_normal[j]) * signs[j] as f64;
                    let want = if k == j { 1.0 } else { 0.0 };
                    assert!((trace - want).abs() < 1e-13, "edge {j} basis {k}");
                }
            }
        }
    }

    #[test]
    fn rt0_divergence_is_flux_balance() {
        let g = sample_tri();
        let signs = [1i8, 1, -1];
        let (_, divs) = rt0_basis(&g, signs, g.centroid);
        for k in 0..3 {
            // ∫_T div ψ = area·div equals the total outward flux |e_k|·sign
            let total = divs[k] * g.area;
            assert!((total - signs[k] as f64 * g.edge_len[k]).abs() < 1e-13);
        }
    }
}
