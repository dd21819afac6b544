//! Global degree-of-freedom management and discrete field evaluation.
//!
//! Layout (deterministic for a given mesh): first the free-flow velocity
//! block — two components per vertex of Ω_S in ascending vertex order, then
//! one bubble per edge of Ω_S in ascending edge order — then one RT0 flux per
//! edge of Ω_D, one pressure per element, and finally the interface
//! multiplier breakpoints. Velocity Dirichlet dofs on Γ_S and flux dofs on
//! Γ_D are eliminated: they keep their global index but carry a prescribed
//! value, and the solver works on the compressed free numbering.
//!
//! Orientation: a bubble dof measures the normal trace against the globally
//! stored edge normal, so an element whose outward normal opposes it sees the
//! negated coefficient; RT0 dofs are mean fluxes against the same normal and
//! the sign is folded into the local basis.

use crate::geom::{Mat2, Vec2};
use crate::mesh::{EdgeKind, InterfacePartition, Mesh, MeshError, Subdomain};
use crate::model::{ExactSolution, ProblemData};
use crate::quadrature::EdgeRule;
use crate::spaces::{br_basis, br_bubble_dof, br_vertex_dof, rt0_basis, N_BR};

#[derive(Clone, Debug)]
pub struct DofMap {
    /// Dof of the x-component at an S-vertex; the y-component is the next id.
    pub us_vertex: Vec<Option<usize>>,
    /// Dof of the velocity bubble on an S-edge (interface edges included).
    pub us_bubble: Vec<Option<usize>>,
    /// Dof of the RT0 flux on a D-edge (interface edges included).
    pub ud_edge: Vec<Option<usize>>,
    /// Pressure dof per element.
    pub p_elem: Vec<usize>,
    pub lambda_start: usize,
    pub n_us: usize,
    pub n_ud: usize,
    pub n_p: usize,
    pub n_lambda: usize,
    pub n_total: usize,
    /// Prescribed value for eliminated dofs, `None` for free ones.
    pub constrained: Vec<Option<f64>>,
    /// Position in the compressed free numbering, `None` when constrained.
    pub free_index: Vec<Option<usize>>,
    pub n_free: usize,
    pub partition: InterfacePartition,
}

impl DofMap {
    pub fn build(mesh: &Mesh, data: &ProblemData) -> Result<DofMap, MeshError> {
        let partition = InterfacePartition::build(mesh)?;

        let mut s_vertex = vec![false; mesh.nodes.len()];
        let mut s_edge = vec![false; mesh.edges.len()];
        let mut d_edge = vec![false; mesh.edges.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            match tri.subdomain {
                Subdomain::S => {
                    for v in tri.vertices {
                        s_vertex[v] = true;
                    }
                    for e in mesh.tri_edges[t] {
                        s_edge[e] = true;
                    }
                }
                Subdomain::D => {
                    for e in mesh.tri_edges[t] {
                        d_edge[e] = true;
                    }
                }
            }
        }

        let mut next = 0usize;
        let mut us_vertex = vec![None; mesh.nodes.len()];
        for v in 0..mesh.nodes.len() {
            if s_vertex[v] {
                us_vertex[v] = Some(next);
                next += 2;
            }
        }
        let mut us_bubble = vec![None; mesh.edges.len()];
        for e in 0..mesh.edges.len() {
            if s_edge[e] {
                us_bubble[e] = Some(next);
                next += 1;
            }
        }
        let n_us = next;
        let mut ud_edge = vec![None; mesh.edges.len()];
        for e in 0..mesh.edges.len() {
            if d_edge[e] {
                ud_edge[e] = Some(next);
                next += 1;
            }
        }
        let n_ud = next - n_us;
        let p_elem: Vec<usize> = (0..mesh.triangles.len()).map(|t| next + t).collect();
        next += mesh.triangles.len();
        let n_p = mesh.triangles.len();
        let lambda_start = next;
        let n_lambda = partition.n_lambda();
        next += n_lambda;
        let n_total = next;

        // Dirichlet data: velocity on Γ_S, normal flux on Γ_D
        let mut constrained: Vec<Option<f64>> = vec![None; n_total];
        let rule = EdgeRule::gauss(10);
        for (e, edge) in mesh.edges.iter().enumerate() {
            match edge.kind {
                EdgeKind::GammaS => {
                    let pa = mesh.nodes[edge.nodes[0]];
                    let pb = mesh.nodes[edge.nodes[1]];
                    let ga = (data.g_s)(pa);
                    let gb = (data.g_s)(pb);
                    for (v, g) in [(edge.nodes[0], ga), (edge.nodes[1], gb)] {
                        let d = us_vertex[v].expect("Γ_S vertex carries velocity dofs");
                        constrained[d] = Some(g.x);
                        constrained[d + 1] = Some(g.y);
                    }
                    // bubble matches the mean normal flux of the residual
                    // after subtracting the endpoint-linear part
                    let mut flux = 0.0;
                    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                        let x = pa + t * (pb - pa);
                        let lin = (1.0 - t) * ga + t * gb;
                        flux += w * ((data.g_s)(x) - lin).dot(edge.normal);
                    }
                    constrained[us_bubble[e].unwrap()] = Some(6.0 * flux);
                }
                EdgeKind::GammaD => {
                    let pa = mesh.nodes[edge.nodes[0]];
                    let pb = mesh.nodes[edge.nodes[1]];
                    let mut mean = 0.0;
                    for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                        let x = pa + t * (pb - pa);
                        mean += w * (data.g_n)(x, edge.normal);
                    }
                    constrained[ud_edge[e].unwrap()] = Some(mean);
                }
                _ => {}
            }
        }

        let mut free_index = vec![None; n_total];
        let mut n_free = 0;
        for d in 0..n_total {
            if constrained[d].is_none() {
                free_index[d] = Some(n_free);
                n_free += 1;
            }
        }

        Ok(DofMap {
            us_vertex,
            us_bubble,
            ud_edge,
            p_elem,
            lambda_start,
            n_us,
            n_ud,
            n_p,
            n_lambda,
            n_total,
            constrained,
            free_index,
            n_free,
            partition,
        })
    }

    pub fn lambda_dof(&self, k: usize) -> usize {
        debug_assert!(k < self.n_lambda);
        self.lambda_start + k
    }

    /// Global velocity dofs of an S-element in local order, with the sign the
    /// element applies to each bubble coefficient.
    pub fn us_element_dofs(&self, mesh: &Mesh, t: usize) -> ([usize; N_BR], [f64; N_BR]) {
        debug_assert_eq!(mesh.triangles[t].subdomain, Subdomain::S);
        let mut idx = [0usize; N_BR];
        let mut sign = [1.0f64; N_BR];
        let tri = &mesh.triangles[t];
        for i in 0..3 {
            let base = self.us_vertex[tri.vertices[i]].expect("S vertex dof");
            idx[br_vertex_dof(i, 0)] = base;
            idx[br_vertex_dof(i, 1)] = base + 1;
        }
        for k in 0..3 {
            let e = mesh.tri_edges[t][k];
            idx[br_bubble_dof(k)] = self.us_bubble[e].expect("S edge bubble dof");
            sign[br_bubble_dof(k)] = mesh.tri_edge_sign[t][k] as f64;
        }
        (idx, sign)
    }

    /// Global flux dofs of a D-element in local edge order; the orientation
    /// signs live in `mesh.tri_edge_sign` and are passed to the basis.
    pub fn ud_element_dofs(&self, mesh: &Mesh, t: usize) -> [usize; 3] {
        debug_assert_eq!(mesh.triangles[t].subdomain, Subdomain::D);
        let mut idx = [0usize; 3];
        for k in 0..3 {
            idx[k] = self.ud_edge[mesh.tri_edges[t][k]].expect("D edge flux dof");
        }
        idx
    }

    /// Overwrite constrained entries of a full coefficient vector with their
    /// prescribed values.
    pub fn apply_constraints(&self, coeffs: &mut [f64]) {
        assert_eq!(coeffs.len(), self.n_total);
        for (d, c) in self.constrained.iter().enumerate() {
            if let Some(v) = c {
                coeffs[d] = *v;
            }
        }
    }

    /// Expand a free-dof vector into a full coefficient vector.
    pub fn expand_free(&self, free: &[f64]) -> Vec<f64> {
        assert_eq!(free.len(), self.n_free);
        let mut coeffs = vec![0.0; self.n_total];
        for d in 0..self.n_total {
            match self.free_index[d] {
                Some(f) => coeffs[d] = free[f],
                None => coeffs[d] = self.constrained[d].unwrap(),
            }
        }
        coeffs
    }
}

/// A discrete solution as a full coefficient vector (constrained dofs
/// included at their prescribed values).
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub coeffs: Vec<f64>,
}

impl DiscreteSolution {
    pub fn zeros(dofs: &DofMap) -> DiscreteSolution {
        DiscreteSolution {
            coeffs: vec![0.0; dofs.n_total],
        }
    }

    /// Local velocity coefficients of an S-element (bubble signs applied).
    pub fn us_local(&self, mesh: &Mesh, dofs: &DofMap, t: usize) -> [f64; N_BR] {
        let (idx, sign) = dofs.us_element_dofs(mesh, t);
        let mut c = [0.0; N_BR];
        for d in 0..N_BR {
            c[d] = sign[d] * self.coeffs[idx[d]];
        }
        c
    }

    /// Velocity value and gradient on S-element `t` at barycentric `bary`.
    pub fn eval_us(&self, mesh: &Mesh, dofs: &DofMap, t: usize, bary: [f64; 3]) -> (Vec2, Mat2) {
        let c = self.us_local(mesh, dofs, t);
        let (vals, grads) = br_basis(mesh.geom(t), bary);
        let mut u = Vec2::ZERO;
        let mut g = Mat2::ZERO;
        for d in 0..N_BR {
            u += c[d] * vals[d];
            g = g + grads[d] * c[d];
        }
        (u, g)
    }

    /// Flux value and divergence on D-element `t` at point `x`.
    pub fn eval_ud(&self, mesh: &Mesh, dofs: &DofMap, t: usize, x: Vec2) -> (Vec2, f64) {
        let idx = dofs.ud_element_dofs(mesh, t);
        let (vals, divs) = rt0_basis(mesh.geom(t), mesh.tri_edge_sign[t], x);
        let mut u = Vec2::ZERO;
        let mut div = 0.0;
        for k in 0..3 {
            u += self.coeffs[idx[k]] * vals[k];
            div += self.coeffs[idx[k]] * divs[k];
        }
        (u, div)
    }

    pub fn pressure(&self, dofs: &DofMap, t: usize) -> f64 {
        self.coeffs[dofs.p_elem[t]]
    }

    /// Interface multiplier value on interface edge `edge` at point `x`.
    pub fn lambda_at(&self, mesh: &Mesh, dofs: &DofMap, edge: usize, x: Vec2) -> f64 {
        let (ks, vals) = dofs.partition.hat_values(mesh, edge, x);
        self.coeffs[dofs.lambda_dof(ks[0])] * vals[0] + self.coeffs[dofs.lambda_dof(ks[1])] * vals[1]
    }
}

/// Canonical interpolant of exact fields: nodal velocity values plus bubble
/// normal-flux matching on Ω_S, edgewise mean fluxes on Ω_D, elementwise mean
/// pressures, and nodal multiplier values λ = p_D at macro breakpoints.
pub fn interpolate(exact: &ExactSolution, mesh: &Mesh, dofs: &DofMap) -> DiscreteSolution {
    let mut coeffs = vec![0.0; dofs.n_total];
    let rule = EdgeRule::gauss(10);

    for v in 0..mesh.nodes.len() {
        if let Some(d) = dofs.us_vertex[v] {
            let u = (exact.u_s)(mesh.nodes[v]);
            coeffs[d] = u.x;
            coeffs[d + 1] = u.y;
        }
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        let pa = mesh.nodes[edge.nodes[0]];
        let pb = mesh.nodes[edge.nodes[1]];
        if let Some(d) = dofs.us_bubble[e] {
            let ua = (exact.u_s)(pa);
            let ub = (exact.u_s)(pb);
            let mut flux = 0.0;
            for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                let x = pa + t * (pb - pa);
                let lin = (1.0 - t) * ua + t * ub;
                flux += w * ((exact.u_s)(x) - lin).dot(edge.normal);
            }
            coeffs[d] = 6.0 * flux;
        }
        if let Some(d) = dofs.ud_edge[e] {
            let mut mean = 0.0;
            for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                let x = pa + t * (pb - pa);
                mean += w * (exact.u_d)(x).dot(edge.normal);
            }
            coeffs[d] = mean;
        }
    }
    let vol = crate::quadrature::TriRule::degree4();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let g = mesh.geom(t);
        let p = match tri.subdomain {
            Subdomain::S => &exact.p_s,
            Subdomain::D => &exact.p_d,
        };
        let mut mean = 0.0;
        for (bary, &w) in vol.points.iter().zip(&vol.weights) {
            mean += w * p(g.point(*bary));
        }
        coeffs[dofs.p_elem[t]] = mean;
    }
    for (k, &node) in dofs.partition.lambda_nodes.iter().enumerate() {
        coeffs[dofs.lambda_dof(k)] = (exact.p_d)(mesh.nodes[node]);
    }
    DiscreteSolution { coeffs }
}
