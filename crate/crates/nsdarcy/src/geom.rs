//! Small fixed-size linear algebra and triangle geometry.
//!
//! Everything here is plain 2D: vectors, 2×2 matrices and the per-triangle
//! quantities (area, outward edge normals, barycentric gradients) that the
//! element code needs over and over.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

pub const fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2 { x, y }
}

impl Vec2 {
    pub const ZERO: Vec2 = vec2(0.0, 0.0);

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product of the embedded vectors.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rotation by +π/2: (x, y) ↦ (−y, x).
    pub fn perp(self) -> Vec2 {
        vec2(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        self / n
    }

    /// Outer product self ⊗ o as a 2×2 matrix.
    pub fn outer(self, o: Vec2) -> Mat2 {
        Mat2 {
            m: [[self.x * o.x, self.x * o.y], [self.y * o.x, self.y * o.y]],
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        vec2(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        *self = *self + o;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        vec2(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        *self = *self - o;
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        vec2(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        vec2(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        vec2(self.x / s, self.y / s)
    }
}

/// Row-major 2×2 matrix; `m[i][j]` is row i, column j.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };

    pub fn identity() -> Mat2 {
        Mat2 {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn diag(a: f64, b: f64) -> Mat2 {
        Mat2 {
            m: [[a, 0.0], [0.0, b]],
        }
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        vec2(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn transpose(self) -> Mat2 {
        Mat2 {
            m: [[self.m[0][0], self.m[1][0]], [self.m[0][1], self.m[1][1]]],
        }
    }

    /// Symmetric part (self + selfᵀ)/2.
    pub fn sym(self) -> Mat2 {
        (self + self.transpose()) * 0.5
    }

    pub fn det(self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn inverse(self) -> Mat2 {
        let d = self.det();
        assert!(d != 0.0, "singular 2x2 matrix");
        Mat2 {
            m: [
                [self.m[1][1] / d, -self.m[0][1] / d],
                [-self.m[1][0] / d, self.m[0][0] / d],
            ],
        }
    }

    /// Double contraction self : other = Σᵢⱼ selfᵢⱼ otherᵢⱼ.
    pub fn ddot(self, o: Mat2) -> f64 {
        self.m[0][0] * o.m[0][0]
            + self.m[0][1] * o.m[0][1]
            + self.m[1][0] * o.m[1][0]
            + self.m[1][1] * o.m[1][1]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let mut r = Mat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                r.m[i][j] = self.m[i][j] + o.m[i][j];
            }
        }
        r
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let mut r = Mat2::ZERO;
        for i in 0..2 {
            for j in 0..2 {
                r.m[i][j] = self.m[i][j] - o.m[i][j];
            }
        }
        r
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.m[i][j] *= s;
            }
        }
        r
    }
}

/// Strain rate tensor e(u) = (∇u + ∇uᵀ)/2 from a velocity gradient.
pub fn strain(grad_u: Mat2) -> Mat2 {
    grad_u.sym()
}

/// Geometry of one triangle, precomputed from vertex coordinates.
///
/// Local edge k is the edge opposite vertex k, i.e. it connects vertices
/// (k+1)%3 and (k+2)%3 in the counterclockwise ordering.
#[derive(Clone, Debug)]
pub struct TriGeom {
    pub v: [Vec2; 3],
    pub area: f64,
    pub centroid: Vec2,
    /// Length of edge k (opposite vertex k).
    pub edge_len: [f64; 3],
    /// Outward unit normal of edge k.
    pub edge_normal: [Vec2; 3],
    /// Constant gradient of the barycentric coordinate η_k.
    pub grad_bary: [Vec2; 3],
    pub diameter: f64,
}

impl TriGeom {
    pub fn new(v: [Vec2; 3]) -> TriGeom {
        let area = 0.5 * (v[1] - v[0]).cross(v[2] - v[0]);
        assert!(area > 0.0, "triangle must be counterclockwise, area = {area}");
        let mut edge_len = [0.0; 3];
        let mut edge_normal = [Vec2::ZERO; 3];
        let mut grad_bary = [Vec2::ZERO; 3];
        for k in 0..3 {
            let a = v[(k + 1) % 3];
            let b = v[(k + 2) % 3];
            let d = b - a;
            edge_len[k] = d.norm();
            // traversing a→b keeps the triangle on the left, so the outward
            // normal is d rotated by −π/2
            edge_normal[k] = vec2(d.y, -d.x) / edge_len[k];
            grad_bary[k] = edge_normal[k] * (-edge_len[k] / (2.0 * area));
        }
        let diameter = edge_len.iter().cloned().fold(0.0, f64::max);
        TriGeom {
            v,
            area,
            centroid: (v[0] + v[1] + v[2]) / 3.0,
            edge_len,
            edge_normal,
            grad_bary,
            diameter,
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> Vec2 {
        self.v[0] * bary[0] + self.v[1] * bary[1] + self.v[2] * bary[2]
    }

    pub fn barycentric(&self, x: Vec2) -> [f64; 3] {
        let a2 = 2.0 * self.area;
        [
            (self.v[1] - x).cross(self.v[2] - x) / a2,
            (self.v[2] - x).cross(self.v[0] - x) / a2,
            (self.v[0] - x).cross(self.v[1] - x) / a2,
        ]
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for k in 0..3 {
            let a = self.v[k];
            let u = self.v[(k + 1) % 3] - a;
            let w = self.v[(k + 2) % 3] - a;
            let ang = (u.dot(w) / (u.norm() * w.norm())).clamp(-1.0, 1.0).acos();
            min = min.min(ang);
        }
        min.to_degrees()
    }
}
