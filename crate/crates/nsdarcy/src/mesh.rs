//! Conforming triangulations of the two-layer channel geometry.
//!
//! The domain is a rectangle stack: the porous region Ω_D = (0,w)×(0,1) below
//! and the free-flow region Ω_S = (0,w)×(1,2) above, separated by the
//! horizontal interface Σ at y = 1. Both subdomains are triangulated so that
//! they match on Σ. The module provides the structured builder, full edge
//! topology with fixed normals/tangents, element patches, newest-vertex
//! bisection with conformity closure, and the coarsened interface partition
//! (pairs of adjacent interface edges) that carries the multiplier space.

use crate::geom::{vec2, TriGeom, Vec2};
use std::collections::HashMap;
use thiserror::Error;

/// Shape-regularity floor checked after construction and every refinement.
pub const MIN_ANGLE_DEG: f64 = 20.0;

/// Stack-depth cap of the conformity closure; exceeding it signals corrupted
/// refinement-edge bookkeeping rather than a legitimate cascade.
pub const DEFAULT_CLOSURE_CAP: usize = 4096;

#[derive(Error, Debug)]
pub enum MeshError {
    #[error("subdivision count n0 must be at least 1")]
    InvalidSubdivision,
    #[error("edge ({0}, {1}) has {2} incident triangles")]
    NonManifold(usize, usize, usize),
    #[error("interface edges do not form a connected left-to-right chain")]
    DisconnectedInterface,
    #[error("conformity closure exceeded the depth cap {0}")]
    ClosureCapExceeded(usize),
    #[error("triangle {0} is tagged {1:?} but its centroid has y = {2}")]
    SubdomainTag(usize, Subdomain, f64),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("triangle {0} has min angle {1:.3}° below the {MIN_ANGLE_DEG}° floor")]
    ShapeRegularity(usize, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subdomain {
    /// Free flow (Navier-Stokes), the upper layer.
    S,
    /// Porous medium (Darcy), the lower layer.
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    InteriorS,
    InteriorD,
    /// Outer boundary of Ω_S (Dirichlet).
    GammaS,
    /// Outer boundary of Ω_D (no-flux).
    GammaD,
    /// Interface between the subdomains.
    Sigma,
}

#[derive(Clone, Debug)]
pub struct Triangle {
    /// Node indices, counterclockwise.
    pub vertices: [usize; 3],
    pub subdomain: Subdomain,
    /// Local index of the bisection edge (edge k is opposite vertex k).
    pub refinement_edge: usize,
}

#[derive(Clone, Debug)]
pub struct Edge {
    /// Node indices, ordered so that (p1 − p0)/|p1 − p0| equals `tangent`.
    pub nodes: [usize; 2],
    /// Fixed unit normal. Outward from `elements.0`; on Σ this is the outward
    /// normal of the free-flow side, on outer boundaries the outward normal
    /// of the domain.
    pub normal: Vec2,
    /// `normal` rotated by +π/2.
    pub tangent: Vec2,
    pub length: f64,
    pub midpoint: Vec2,
    /// Incident triangles; interior and Σ edges have two, boundary edges one.
    /// The normal points from `.0` into `.1`.
    pub elements: (usize, Option<usize>),
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.elements.1.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// Per triangle: global edge ids, local edge k opposite vertex k.
    pub tri_edges: Vec<[usize; 3]>,
    /// +1 where the stored edge normal is outward for this triangle, −1 else.
    pub tri_edge_sign: Vec<[i8; 3]>,
    /// Cached per-triangle geometry.
    pub geoms: Vec<TriGeom>,
    /// Interface edge ids ordered by ascending x.
    pub interface_edges: Vec<usize>,
}

impl Mesh {
    /// Structured mesh of the stacked rectangles, `n0` cells per unit length.
    ///
    /// Every grid cell is split along its v00–v11 diagonal, which also serves
    /// as the initial refinement edge; neighbors across a diagonal agree on
    /// it, so the labeling is compatible for newest-vertex bisection.
    pub fn structured(width: f64, n0: usize) -> Result<Mesh, MeshError> {
        if n0 == 0 {
            return Err(MeshError::InvalidSubdivision);
        }
        assert!(width > 0.0 && width.is_finite());
        let nx = ((width * n0 as f64).round() as usize).max(1);
        let ny = 2 * n0; // n0 rows per subdomain
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(vec2(width * i as f64 / nx as f64, 2.0 * j as f64 / ny as f64));
            }
        }
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            let sub = if j < n0 { Subdomain::D } else { Subdomain::S };
            for i in 0..nx {
                let v00 = j * (nx + 1) + i;
                let v10 = v00 + 1;
                let v01 = v00 + nx + 1;
                let v11 = v01 + 1;
                // lower-right triangle; the diagonal (v00, v11) is edge 1
                triangles.push(Triangle {
                    vertices: [v00, v10, v11],
                    subdomain: sub,
                    refinement_edge: 1,
                });
                // upper-left triangle; the diagonal is edge 2
                triangles.push(Triangle {
                    vertices: [v00, v11, v01],
                    subdomain: sub,
                    refinement_edge: 2,
                });
            }
        }
        Mesh::from_parts(nodes, triangles)
    }

    /// Assemble the full mesh (topology, classification, checks) from nodes
    /// and triangles. Triangle orientation is normalized counterclockwise.
    pub fn from_parts(nodes: Vec<Vec2>, mut triangles: Vec<Triangle>) -> Result<Mesh, MeshError> {
        // normalize orientation; swapping vertices 1 and 2 exchanges local
        // edges 1 and 2, so the refinement-edge index follows the swap
        for (t, tri) in triangles.iter_mut().enumerate() {
            let [a, b, c] = tri.vertices;
            let area2 = (nodes[b] - nodes[a]).cross(nodes[c] - nodes[a]);
            if area2 == 0.0 {
                return Err(MeshError::Degenerate(t));
            }
            if area2 < 0.0 {
                tri.vertices = [a, c, b];
                tri.refinement_edge = match tri.refinement_edge {
                    1 => 2,
                    2 => 1,
                    k => k,
                };
            }
        }

        let geoms: Vec<TriGeom> = triangles
            .iter()
            .map(|t| TriGeom::new([nodes[t.vertices[0]], nodes[t.vertices[1]], nodes[t.vertices[2]]]))
            .collect();

        for (t, (tri, g)) in triangles.iter().zip(&geoms).enumerate() {
            let want = if g.centroid.y > 1.0 { Subdomain::S } else { Subdomain::D };
            if tri.subdomain != want {
                return Err(MeshError::SubdomainTag(t, tri.subdomain, g.centroid.y));
            }
            let angle = g.min_angle_deg();
            if angle < MIN_ANGLE_DEG - 1e-9 {
                return Err(MeshError::ShapeRegularity(t, angle));
            }
        }

        // collect edges in first-encounter order
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut incidence: Vec<Vec<(usize, usize)>> = Vec::new(); // (triangle, local k)
        let mut tri_edges = vec![[usize::MAX; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri.vertices[(k + 1) % 3];
                let b = tri.vertices[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    incidence.push(Vec::new());
                    incidence.len() - 1
                });
                incidence[id].push((t, k));
                tri_edges[t][k] = id;
            }
        }

        let mut edges = Vec::with_capacity(incidence.len());
        for (id, inc) in incidence.iter_mut().enumerate() {
            if inc.len() > 2 {
                let (t0, k0) = inc[0];
                let a = triangles[t0].vertices[(k0 + 1) % 3];
                let b = triangles[t0].vertices[(k0 + 2) % 3];
                return Err(MeshError::NonManifold(a.min(b), a.max(b), inc.len()));
            }
            // on Σ the free-flow triangle comes first so that the stored
            // normal is its outward normal
            if inc.len() == 2 {
                let subs = (
                    triangles[inc[0].0].subdomain,
                    triangles[inc[1].0].subdomain,
                );
                if subs == (Subdomain::D, Subdomain::S) {
                    inc.swap(0, 1);
                }
            }
            let (t0, k0) = inc[0];
            let a = triangles[t0].vertices[(k0 + 1) % 3];
            let b = triangles[t0].vertices[(k0 + 2) % 3];
            let pa = nodes[a];
            let pb = nodes[b];
            let tangent = (pb - pa).normalized();
            let normal = vec2(tangent.y, -tangent.x); // outward for inc[0]
            debug_assert!((normal - geoms[t0].edge_normal[k0]).norm() < 1e-12);
            let kind = match inc.len() {
                1 => match triangles[t0].subdomain {
                    Subdomain::S => EdgeKind::GammaS,
                    Subdomain::D => EdgeKind::GammaD,
                },
                _ => {
                    let s1 = triangles[inc[1].0].subdomain;
                    match (triangles[t0].subdomain, s1) {
                        (Subdomain::S, Subdomain::S) => EdgeKind::InteriorS,
                        (Subdomain::D, Subdomain::D) => EdgeKind::InteriorD,
                        _ => EdgeKind::Sigma,
                    }
                }
            };
            let _ = id;
            edges.push(Edge {
                nodes: [a, b],
                normal,
                tangent,
                length: (pb - pa).norm(),
                midpoint: (pa + pb) * 0.5,
                elements: (t0, inc.get(1).map(|&(t, _)| t)),
                kind,
            });
        }

        let mut tri_edge_sign = vec![[1i8; 3]; triangles.len()];
        for (t, ids) in tri_edges.iter().enumerate() {
            for (k, &e) in ids.iter().enumerate() {
                tri_edge_sign[t][k] = if edges[e].elements.0 == t { 1 } else { -1 };
            }
        }

        let mut interface_edges: Vec<usize> = (0..edges.len())
            .filter(|&e| edges[e].kind == EdgeKind::Sigma)
            .collect();
        interface_edges.sort_by(|&a, &b| {
            edges[a]
                .midpoint
                .x
                .partial_cmp(&edges[b].midpoint.x)
                .unwrap()
        });
        // Σ edges run left to right (tangent +x) and must chain up
        for w in interface_edges.windows(2) {
            if edges[w[0]].nodes[1] != edges[w[1]].nodes[0] {
                return Err(MeshError::DisconnectedInterface);
            }
        }

        Ok(Mesh {
            nodes,
            triangles,
            edges,
            tri_edges,
            tri_edge_sign,
            geoms,
            interface_edges,
        })
    }

    pub fn geom(&self, t: usize) -> &TriGeom {
        &self.geoms[t]
    }

    /// Element diameter h_T.
    pub fn diameter(&self, t: usize) -> f64 {
        self.geoms[t].diameter
    }

    pub fn h_max(&self) -> f64 {
        self.geoms.iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn subdomain_triangles(&self, sub: Subdomain) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&t| self.triangles[t].subdomain == sub)
    }

    /// The triangle across edge `e` from triangle `t`, if any.
    pub fn neighbor(&self, t: usize, e: usize) -> Option<usize> {
        let (a, b) = self.edges[e].elements;
        if a == t {
            b
        } else {
            Some(a)
        }
    }

    /// Refine all elements twice: one full sweep per bisection generation,
    /// quadrupling the element count and halving every diameter for the
    /// structured right-isosceles family.
    pub fn refine_uniform(&self) -> Result<Mesh, MeshError> {
        let all: Vec<usize> = (0..self.triangles.len()).collect();
        let once = self.refine(&all)?;
        let all: Vec<usize> = (0..once.triangles.len()).collect();
        once.refine(&all)
    }

    /// Bisect every marked element at least once, applying recursive
    /// conformity closure (newest-vertex bisection).
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh, MeshError> {
        self.refine_with_cap(marked, DEFAULT_CLOSURE_CAP)
    }

    pub fn refine_with_cap(&self, marked: &[usize], cap: usize) -> Result<Mesh, MeshError> {
        let mut work = RefineWork::new(self);
        let mut marked: Vec<usize> = marked.to_vec();
        marked.sort_unstable();
        marked.dedup();
        for &t in &marked {
            assert!(t < self.triangles.len(), "marked element {t} out of range");
            if work.tris[t].alive {
                work.ensure_refined(t, cap)?;
            }
            // an element already consumed by the closure cascade was bisected
        }
        let mut triangles = Vec::new();
        for w in &work.tris {
            if w.alive {
                triangles.push(Triangle {
                    vertices: w.v,
                    subdomain: w.sub,
                    refinement_edge: w.re,
                });
            }
        }
        Mesh::from_parts(work.nodes, triangles)
    }

    /// Elements of the requested adjacency patch, ascending and deduplicated.
    pub fn patch(&self, kind: PatchKind, center: usize) -> Vec<usize> {
        let mut out = Vec::new();
        match kind {
            PatchKind::OmegaT => {
                assert!(center < self.triangles.len());
                out.push(center);
                for &e in &self.tri_edges[center] {
                    if let Some(n) = self.neighbor(center, e) {
                        out.push(n);
                    }
                }
            }
            PatchKind::OmegaE => {
                let (a, b) = self.edges[center].elements;
                out.push(a);
                if let Some(b) = b {
                    out.push(b);
                }
            }
            PatchKind::OmegaX => {
                for (t, tri) in self.triangles.iter().enumerate() {
                    if tri.vertices.contains(&center) {
                        out.push(t);
                    }
                }
            }
            PatchKind::DeltaT => {
                let vs = self.triangles[center].vertices;
                for (t, tri) in self.triangles.iter().enumerate() {
                    if tri.vertices.iter().any(|v| vs.contains(v)) {
                        out.push(t);
                    }
                }
            }
            PatchKind::DeltaE => {
                let vs = self.edges[center].nodes;
                for (t, tri) in self.triangles.iter().enumerate() {
                    if tri.vertices.iter().any(|v| vs.contains(v)) {
                        out.push(t);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchKind {
    /// Elements sharing an edge with the center element (including it).
    OmegaT,
    /// Elements incident to the center edge.
    OmegaE,
    /// Elements having the center node as a vertex.
    OmegaX,
    /// Elements sharing at least one vertex with the center element.
    DeltaT,
    /// Elements sharing at least one vertex with the center edge.
    DeltaE,
}

struct WorkTri {
    v: [usize; 3],
    sub: Subdomain,
    re: usize,
    alive: bool,
}

struct RefineWork {
    nodes: Vec<Vec2>,
    tris: Vec<WorkTri>,
    /// Sorted node pair of an edge → alive incident triangles.
    edge_tris: HashMap<(usize, usize), Vec<usize>>,
    midpoints: HashMap<(usize, usize), usize>,
}

impl RefineWork {
    fn new(mesh: &Mesh) -> RefineWork {
        let tris: Vec<WorkTri> = mesh
            .triangles
            .iter()
            .map(|t| WorkTri {
                v: t.vertices,
                sub: t.subdomain,
                re: t.refinement_edge,
                alive: true,
            })
            .collect();
        let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (i, t) in tris.iter().enumerate() {
            for k in 0..3 {
                edge_tris.entry(Self::edge_key(t.v, k)).or_default().push(i);
            }
        }
        RefineWork {
            nodes: mesh.nodes.clone(),
            tris,
            edge_tris,
            midpoints: HashMap::new(),
        }
    }

    fn edge_key(v: [usize; 3], k: usize) -> (usize, usize) {
        let a = v[(k + 1) % 3];
        let b = v[(k + 2) % 3];
        (a.min(b), a.max(b))
    }

    fn ref_edge_key(&self, t: usize) -> (usize, usize) {
        let w = &self.tris[t];
        Self::edge_key(w.v, w.re)
    }

    fn partner_across_ref_edge(&self, t: usize) -> Option<usize> {
        let key = self.ref_edge_key(t);
        self.edge_tris[&key].iter().copied().find(|&x| x != t)
    }

    /// Bisect `t` together with its compatible partner (if any) across the
    /// shared refinement edge, introducing one midpoint node.
    fn bisect(&mut self, t: usize) {
        let key = self.ref_edge_key(t);
        let partner = self.partner_across_ref_edge(t);
        let m = *self.midpoints.entry(key).or_insert_with(|| {
            self.nodes.push((self.nodes[key.0] + self.nodes[key.1]) * 0.5);
            self.nodes.len() - 1
        });
        self.split(t, m);
        if let Some(n) = partner {
            debug_assert_eq!(self.ref_edge_key(n), key, "partner not compatible");
            self.split(n, m);
        }
    }

    /// Replace `t` by its two bisection children. With refinement edge (a,b)
    /// opposite peak c and midpoint m, the children are (a,m,c) and (m,b,c);
    /// both inherit the edge opposite m as their refinement edge.
    fn split(&mut self, t: usize, m: usize) {
        let (v, sub, re) = {
            let w = &self.tris[t];
            (w.v, w.sub, w.re)
        };
        let c = v[re];
        let a = v[(re + 1) % 3];
        let b = v[(re + 2) % 3];
        self.tris[t].alive = false;
        for k in 0..3 {
            let key = Self::edge_key(v, k);
            let list = self.edge_tris.get_mut(&key).unwrap();
            list.retain(|&x| x != t);
        }
        let c1 = WorkTri {
            v: [a, m, c],
            sub,
            re: 1, // edge (c, a)
            alive: true,
        };
        let c2 = WorkTri {
            v: [m, b, c],
            sub,
            re: 0, // edge (b, c)
            alive: true,
        };
        for child in [c1, c2] {
            let idx = self.tris.len();
            for k in 0..3 {
                let key = Self::edge_key(child.v, k);
                self.edge_tris.entry(key).or_default().push(idx);
            }
            self.tris.push(child);
        }
    }

    /// Make `t`'s refinement edge compatible (recursively refining neighbors
    /// as needed), then bisect it.
    fn ensure_refined(&mut self, t0: usize, cap: usize) -> Result<(), MeshError> {
        let mut stack = vec![t0];
        while let Some(&t) = stack.last() {
            if !self.tris[t].alive {
                stack.pop();
                continue;
            }
            match self.partner_across_ref_edge(t) {
                None => {
                    self.bisect(t);
                    stack.pop();
                }
                Some(n) if self.ref_edge_key(n) == self.ref_edge_key(t) => {
                    self.bisect(t);
                    stack.pop();
                }
                Some(n) => {
                    if stack.len() >= cap {
                        return Err(MeshError::ClosureCapExceeded(cap));
                    }
                    stack.push(n);
                }
            }
        }
        Ok(())
    }
}

/// Macro edge of the coarsened interface partition: a run of (usually two)
/// consecutive fine interface edges.
#[derive(Clone, Debug)]
pub struct MacroEdge {
    /// Left and right endpoint node ids.
    pub endpoints: [usize; 2],
    /// Covered fine edge ids, left to right.
    pub fine_edges: Vec<usize>,
}

/// The doubled partition of Σ carrying the piecewise-linear multiplier.
#[derive(Clone, Debug)]
pub struct InterfacePartition {
    /// Fine interface edges, left to right (same order as the mesh).
    pub fine_edges: Vec<usize>,
    pub macros: Vec<MacroEdge>,
    /// Index of the containing macro edge per entry of `fine_edges`.
    pub fine_macro: Vec<usize>,
    /// True when an odd fine count forced one initial pair merge.
    pub odd_merge_applied: bool,
    /// Macro breakpoints (node ids), left to right; the multiplier dofs.
    pub lambda_nodes: Vec<usize>,
}

impl InterfacePartition {
    /// Pair consecutive interface edges into macro edges. An odd count > 1 is
    /// first reduced to the even case by merging the leftmost pair; a single
    /// interface edge is its own macro edge.
    pub fn build(mesh: &Mesh) -> Result<InterfacePartition, MeshError> {
        let fine = mesh.interface_edges.clone();
        if fine.is_empty() {
            return Err(MeshError::DisconnectedInterface);
        }
        let m = fine.len();
        let mut units: Vec<Vec<usize>> = Vec::new();
        let mut odd_merge_applied = false;
        let mut rest = &fine[..];
        if m > 1 && m % 2 == 1 {
            units.push(vec![fine[0], fine[1]]);
            rest = &fine[2..];
            odd_merge_applied = true;
        }
        for &e in rest {
            units.push(vec![e]);
        }
        let mut macros = Vec::new();
        if units.len() == 1 {
            macros.push(units.remove(0));
        } else {
            debug_assert!(units.len() % 2 == 0);
            let mut it = units.into_iter();
            while let (Some(mut a), Some(b)) = (it.next(), it.next()) {
                a.extend(b);
                macros.push(a);
            }
        }
        let macros: Vec<MacroEdge> = macros
            .into_iter()
            .map(|fine_edges| MacroEdge {
                endpoints: [
                    mesh.edges[fine_edges[0]].nodes[0],
                    mesh.edges[*fine_edges.last().unwrap()].nodes[1],
                ],
                fine_edges,
            })
            .collect();
        let mut fine_macro = vec![0; m];
        let mut lambda_nodes = vec![macros[0].endpoints[0]];
        for (k, mac) in macros.iter().enumerate() {
            lambda_nodes.push(mac.endpoints[1]);
            for &e in &mac.fine_edges {
                let pos = fine.iter().position(|&f| f == e).unwrap();
                fine_macro[pos] = k;
            }
        }
        Ok(InterfacePartition {
            fine_edges: fine,
            macros,
            fine_macro,
            odd_merge_applied,
            lambda_nodes,
        })
    }

    pub fn n_lambda(&self) -> usize {
        self.lambda_nodes.len()
    }

    /// Multiplier hat functions on a fine interface edge at point `x`:
    /// returns the two multiplier dof indices (left, right breakpoint of the
    /// containing macro edge) and their values.
    pub fn hat_values(&self, mesh: &Mesh, edge: usize, x: Vec2) -> ([usize; 2], [f64; 2]) {
        let pos = self
            .fine_edges
            .iter()
            .position(|&e| e == edge)
            .expect("edge not on the interface");
        let k = self.fine_macro[pos];
        let mac = &self.macros[k];
        let x0 = mesh.nodes[mac.endpoints[0]].x;
        let x1 = mesh.nodes[mac.endpoints[1]].x;
        let t = (x.x - x0) / (x1 - x0);
        ([k, k + 1], [1.0 - t, t])
    }
}
