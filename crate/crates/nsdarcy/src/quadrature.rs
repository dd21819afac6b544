//! Quadrature on triangles and edges.
//!
//! Triangle rules store barycentric points with weights that sum to one, so
//! `∫_T f = area(T) · Σᵢ wᵢ f(xᵢ)`. Edge rules live on [0,1] with the same
//! normalization. The symmetric (Dunavant) rules cover the polynomial degrees
//! that occur in assembly and in the error indicators; a collapsed tensor
//! Gauss rule provides arbitrary degree for reference computations.

use std::sync::OnceLock;

#[derive(Clone, Debug)]
pub struct TriRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EdgeRule {
    /// Points in (0,1).
    pub points: Vec<f64>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
}

impl TriRule {
    /// Midpoint (centroid) rule, exact for linears.
    pub fn degree1() -> &'static TriRule {
        static R: OnceLock<TriRule> = OnceLock::new();
        R.get_or_init(|| TriRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        })
    }

    /// Three-point symmetric rule, exact up to degree 2.
    pub fn degree2() -> &'static TriRule {
        static R: OnceLock<TriRule> = OnceLock::new();
        R.get_or_init(|| {
            let mut r = TriRule {
                points: vec![],
                weights: vec![],
            };
            r.push_perm3(2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0);
            r
        })
    }

    /// Six-point symmetric rule, exact up to degree 4.
    pub fn degree4() -> &'static TriRule {
        static R: OnceLock<TriRule> = OnceLock::new();
        R.get_or_init(|| {
            let mut r = TriRule {
                points: vec![],
                weights: vec![],
            };
            r.push_perm3(0.816847572980459, 0.091576213509771, 0.109951743655322);
            r.push_perm3(0.108103018168070, 0.445948490915965, 0.223381589678011);
            r
        })
    }

    /// Twelve-point symmetric rule, exact up to degree 6.
    pub fn degree6() -> &'static TriRule {
        static R: OnceLock<TriRule> = OnceLock::new();
        R.get_or_init(|| {
            let mut r = TriRule {
                points: vec![],
                weights: vec![],
            };
            r.push_perm3(0.501426509658179, 0.249286745170910, 0.116786275726379);
            r.push_perm3(0.873821971016996, 0.063089014491502, 0.050844906370207);
            r.push_perm6(
                0.053145049844816,
                0.310352451033785,
                0.636502499121399,
                0.082851075618374,
            );
            r
        })
    }

    /// Collapsed tensor-product Gauss rule exact at least up to `degree`.
    ///
    /// Maps the unit square by (u, v) ↦ (u, v(1−u)); the Jacobian factor 1−u
    /// raises the u-degree by one, hence the asymmetric choice of n below.
    pub fn collapsed(degree: usize) -> TriRule {
        let n = (degree + 3) / 2; // 2n−1 ≥ degree+1
        let g = EdgeRule::gauss(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (i, &u) in g.points.iter().enumerate() {
            for (j, &v) in g.points.iter().enumerate() {
                let x = u;
                let y = v * (1.0 - u);
                points.push([1.0 - x - y, x, y]);
                weights.push(2.0 * (1.0 - u) * g.weights[i] * g.weights[j]);
            }
        }
        TriRule { points, weights }
    }

    fn push_perm3(&mut self, a: f64, b: f64, w: f64) {
        debug_assert!((a + 2.0 * b - 1.0).abs() < 1e-12);
        self.points.push([a, b, b]);
        self.points.push([b, a, b]);
        self.points.push([b, b, a]);
        self.weights.extend_from_slice(&[w, w, w]);
    }

    fn push_perm6(&mut self, a: f64, b: f64, c: f64, w: f64) {
        debug_assert!((a + b + c - 1.0).abs() < 1e-12);
        for p in [
            [a, b, c],
            [a, c, b],
            [b, a, c],
            [b, c, a],
            [c, a, b],
            [c, b, a],
        ] {
            self.points.push(p);
            self.weights.push(w);
        }
    }
}

impl EdgeRule {
    /// n-point Gauss–Legendre rule on [0,1], exact up to degree 2n−1.
    ///
    /// Nodes are computed by Newton iteration on the Legendre recurrence,
    /// which is accurate to machine precision for the small n used here.
    pub fn gauss(n: usize) -> EdgeRule {
        assert!(n >= 1);
        let mut points = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            // initial guess on [-1,1]
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // the roots come out in descending x, so this map ascends
            points.push(0.5 * (1.0 - x));
            weights.push(0.5 * w);
        }
        EdgeRule { points, weights }
    }
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
