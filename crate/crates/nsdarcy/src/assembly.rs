//! Assembly of the discrete saddle-point system.
//!
//! Rows and columns follow the free-dof compression of [`crate::dofs::DofMap`];
//! Dirichlet columns are folded into the right-hand side. The blocks are
//!
//! * free-flow momentum: 2μ(e(u),e(v))_S plus the interface friction
//!   ⟨α_dμ/√(τ·κτ) u·τ, v·τ⟩_Σ, plus — when a frozen transport field w is
//!   given — the convection pair ρ((w·∇)u, v)_S + (ρ/2)((div w) u, v)_S whose
//!   second (Temam) term restores skew-symmetry at the discrete level,
//! * porous flux: (K⁻¹u, v)_D,
//! * constraint: b(v,(q,ξ)) = −(q, div v_S)_S − (q, div v_D)_D
//!   + ⟨v_S·n_S + v_D·n_D, ξ⟩_Σ entered symmetrically,
//! * data: (f_S,v)_S + (f_D,v)_D − ⟨g_force, v·n_S⟩_Σ + ⟨g_bjs, v·τ⟩_Σ
//!   + ⟨g_mass, ξ⟩_Σ.
//!
//! Volume terms use the degree-6 triangle rule — the lowest symmetric rule
//! that integrates the degree-5 convection/Temam products exactly, which the
//! skew-symmetry identity relies on — and edge terms a 5-point Gauss rule.
//! Assembly is sequential and deterministic.

use crate::dofs::{DiscreteSolution, DofMap};
use crate::geom::{Mat2, Vec2};
use crate::mesh::{Mesh, Subdomain};
use crate::model::ProblemData;
use crate::quadrature::{EdgeRule, TriRule};
use crate::spaces::{br_basis, rt0_basis, N_BR};

/// Sparse system over the free dofs in triplet form (duplicates add).
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    /// True once the pressure gauge row/column has been appended.
    pub gauged: bool,
}

struct Accumulator<'a> {
    dofs: &'a DofMap,
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl<'a> Accumulator<'a> {
    fn new(dofs: &'a DofMap) -> Accumulator<'a> {
        Accumulator {
            dofs,
            triplets: Vec::new(),
            rhs: vec![0.0; dofs.n_free],
        }
    }

    /// Add `v` at global position (i, j), eliminating constrained dofs.
    fn add(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        match (self.dofs.free_index[i], self.dofs.free_index[j]) {
            (Some(fi), Some(fj)) => self.triplets.push((fi, fj, v)),
            (Some(fi), None) => self.rhs[fi] -= v * self.dofs.constrained[j].unwrap(),
            (None, _) => {}
        }
    }

    fn add_rhs(&mut self, i: usize, v: f64) {
        if let Some(fi) = self.dofs.free_index[i] {
            self.rhs[fi] += v;
        }
    }
}

/// Assemble the (ungauged) discrete system. `frozen_w` is the transport
/// velocity of the Picard linearization and must be given when ρ > 0.
pub fn assemble_forms(
    mesh: &Mesh,
    dofs: &DofMap,
    data: &ProblemData,
    frozen_w: Option<&DiscreteSolution>,
) -> SparseSystem {
    assert!(
        data.rho == 0.0 || frozen_w.is_some(),
        "convection requires a frozen transport field"
    );
    let mut acc = Accumulator::new(dofs);
    let vol = TriRule::degree6();
    let edge_rule = EdgeRule::gauss(5);
    let mu = data.mu;
    let rho = data.rho;
    let convect = rho > 0.0;
    let kinv_uniform = if data.kappa.is_uniform() {
        Some(data.k_inv(Vec2::ZERO))
    } else {
        None
    };

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let g = mesh.geom(t);
        match tri.subdomain {
            Subdomain::S => {
                let (idx, sign) = dofs.us_element_dofs(mesh, t);
                let p_dof = dofs.p_elem[t];
                let w_coef: [f64; N_BR] = match frozen_w {
                    Some(w) if convect => {
                        let mut c = [0.0; N_BR];
                        for d in 0..N_BR {
                            c[d] = w.coeffs[idx[d]];
                        }
                        c
                    }
                    _ => [0.0; N_BR],
                };
                for (bary, &wq) in vol.points.iter().zip(&vol.weights) {
                    let da = wq * g.area;
                    let x = g.point(*bary);
                    let (mut vals, mut grads) = br_basis(g, *bary);
                    for d in 0..N_BR {
                        // orient bubbles by the global edge normal
                        vals[d] = sign[d] * vals[d];
                        grads[d] = grads[d] * sign[d];
                    }
                    let mut strains = [Mat2::ZERO; N_BR];
                    let mut divs = [0.0; N_BR];
                    for d in 0..N_BR {
                        strains[d] = grads[d].sym();
                        divs[d] = grads[d].trace();
                    }
                    let (w_val, w_div) = if convect {
                        let mut v = Vec2::ZERO;
                        let mut dv = 0.0;
                        for d in 0..N_BR {
                            v += w_coef[d] * vals[d];
                            dv += w_coef[d] * divs[d];
                        }
                        (v, dv)
                    } else {
                        (Vec2::ZERO, 0.0)
                    };
                    let f = (data.f_s)(x);
                    for i in 0..N_BR {
                        for j in 0..N_BR {
                            let mut a = 2.0 * mu * strains[i].ddot(strains[j]);
                            if convect {
                                a += rho * grads[j].mul_vec(w_val).dot(vals[i]);
                                a += 0.5 * rho * w_div * vals[j].dot(vals[i]);
                            }
                            acc.add(idx[i], idx[j], a * da);
                        }
                        acc.add(idx[i], p_dof, -divs[i] * da);
                        acc.add(p_dof, idx[i], -divs[i] * da);
                        acc.add_rhs(idx[i], f.dot(vals[i]) * da);
                    }
                }
            }
            Subdomain::D => {
                let idx = dofs.ud_element_dofs(mesh, t);
                let p_dof = dofs.p_elem[t];
                for (bary, &wq) in vol.points.iter().zip(&vol.weights) {
                    let da = wq * g.area;
                    let x = g.point(*bary);
                    let (vals, divs) = rt0_basis(g, mesh.tri_edge_sign[t], x);
                    let kinv = kinv_uniform.unwrap_or_else(|| data.k_inv(x));
                    let f = (data.f_d)(x);
                    for i in 0..3 {
                        for j in 0..3 {
                            acc.add(idx[i], idx[j], kinv.mul_vec(vals[j]).dot(vals[i]) * da);
                        }
                        acc.add(idx[i], p_dof, -divs[i] * da);
                        acc.add(p_dof, idx[i], -divs[i] * da);
                        acc.add_rhs(idx[i], f.dot(vals[i]) * da);
                    }
                }
            }
        }
    }

    // interface terms: friction, multiplier coupling and data lifts
    for &e in &mesh.interface_edges {
        let edge = &mesh.edges[e];
        let t_s = edge.elements.0;
        let g_s = mesh.geom(t_s);
        let (idx_s, sign_s) = dofs.us_element_dofs(mesh, t_s);
        let ud_dof = dofs.ud_edge[e].expect("interface edge carries a flux dof");
        let n = edge.normal; // = n_S on Σ
        let tau = edge.tangent;
        let pa = mesh.nodes[edge.nodes[0]];
        let pb = mesh.nodes[edge.nodes[1]];
        for (&tq, &wq) in edge_rule.points.iter().zip(&edge_rule.weights) {
            let ds = wq * edge.length;
            let x = pa + tq * (pb - pa);
            let (mut vals, _) = br_basis(g_s, g_s.barycentric(x));
            for d in 0..N_BR {
                vals[d] = sign_s[d] * vals[d];
            }
            let gamma = data.friction(x, tau);
            let (lam_ids, lam_vals) = dofs.partition.hat_values(mesh, e, x);
            let lam_dofs = [dofs.lambda_dof(lam_ids[0]), dofs.lambda_dof(lam_ids[1])];
            for i in 0..N_BR {
                let vn = vals[i].dot(n);
                let vt = vals[i].dot(tau);
                for j in 0..N_BR {
                    acc.add(idx_s[i], idx_s[j], gamma * vt * vals[j].dot(tau) * ds);
                }
                for k in 0..2 {
                    acc.add(idx_s[i], lam_dofs[k], vn * lam_vals[k] * ds);
                    acc.add(lam_dofs[k], idx_s[i], vn * lam_vals[k] * ds);
                }
                acc.add_rhs(idx_s[i], (-(data.g_force)(x) * vn + (data.g_bjs)(x) * vt) * ds);
            }
            // RT0 trace on its own edge is 1 against n_E = n_S, so the Darcy
            // normal trace u_D·n_D equals minus the edge coefficient
            for k in 0..2 {
                acc.add(ud_dof, lam_dofs[k], -lam_vals[k] * ds);
                acc.add(lam_dofs[k], ud_dof, -lam_vals[k] * ds);
                acc.add_rhs(lam_dofs[k], (data.g_mass)(x) * lam_vals[k] * ds);
            }
        }
    }

    SparseSystem {
        n: dofs.n_free,
        triplets: acc.triplets,
        rhs: acc.rhs,
        gauged: false,
    }
}

/// Append the zero-mean pressure constraint Σ_T |T| p_T = 0 as a bordered
/// Lagrange multiplier row/column.
pub fn apply_pressure_gauge(mesh: &Mesh, dofs: &DofMap, mut sys: SparseSystem) -> SparseSystem {
    assert!(!sys.gauged, "gauge already applied");
    assert_eq!(sys.n, dofs.n_free);
    let border = sys.n;
    for t in 0..mesh.triangles.len() {
        let fp = dofs.free_index[dofs.p_elem[t]].expect("pressure dofs are never constrained");
        let area = mesh.geom(t).area;
        sys.triplets.push((border, fp, area));
        sys.triplets.push((fp, border, area));
    }
    sys.n += 1;
    sys.rhs.push(0.0);
    sys.gauged = true;
    sys
}

/// Residual A(u_h)u_h − F of the nonlinear discrete problem against every
/// free test basis vector (gauge row excluded); returns the max |entry|.
pub fn discrete_residual(
    sol: &DiscreteSolution,
    mesh: &Mesh,
    dofs: &DofMap,
    data: &ProblemData,
) -> f64 {
    let frozen = (data.rho > 0.0).then_some(sol);
    let sys = assemble_forms(mesh, dofs, data, frozen);
    residual_vector(&sys, dofs, sol)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()))
}

/// Free-row residual vector A x − b of an (ungauged) assembled system at a
/// full coefficient vector.
pub fn residual_vector(sys: &SparseSystem, dofs: &DofMap, sol: &DiscreteSolution) -> Vec<f64> {
    assert!(!sys.gauged);
    assert_eq!(sol.coeffs.len(), dofs.n_total);
    let mut x = vec![0.0; sys.n];
    for d in 0..dofs.n_total {
        if let Some(f) = dofs.free_index[d] {
            x[f] = sol.coeffs[d];
        }
    }
    let mut r: Vec<f64> = sys.rhs.iter().map(|b| -b).collect();
    for &(i, j, v) in &sys.triplets {
        r[i] += v * x[j];
    }
    r
}

/// Infinity norm of the right-hand side (used to scale residual tolerances).
pub fn rhs_inf_norm(sys: &SparseSystem) -> f64 {
    sys.rhs.iter().fold(0.0f64, |m, b| m.max(b.abs()))
}
