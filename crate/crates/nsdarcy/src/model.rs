//! Continuous problem data and manufactured solutions.
//!
//! The model couples stationary Navier-Stokes flow in the upper layer Ω_S
//! with Darcy flow in the lower layer Ω_D:
//!
//! * −div(2μ e(u_S) − p_S I) + ρ(u_S·∇)u_S = f_S and div u_S = 0 in Ω_S,
//! * K⁻¹ u_D + ∇p_D = f_D and div u_D = 0 in Ω_D, with K = κ/μ,
//!
//! joined across Σ by mass conservation, balance of normal forces and the
//! Beavers-Joseph-Saffman friction law, and closed by u_S = g_S on Γ_S plus
//! u_D·n = g_N on Γ_D. The homogeneous problem has g_S, g_N and the interface
//! data g_Σ all zero; manufactured solutions induce nonzero data by plugging
//! their exact fields into the same equations, so the solver and estimator
//! carry the data terms additively and reduce exactly to the homogeneous
//! problem when the data vanish.

use crate::geom::{vec2, Mat2, Vec2};
use crate::quadrature::EdgeRule;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub type ScalarField = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
pub type VecField = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
pub type MatField = Arc<dyn Fn(Vec2) -> Mat2 + Send + Sync>;
/// Normal-flux data: (point, outward unit normal) → flux.
pub type FluxField = Arc<dyn Fn(Vec2, Vec2) -> f64 + Send + Sync>;

pub fn zero_scalar() -> ScalarField {
    Arc::new(|_| 0.0)
}

pub fn zero_vec() -> VecField {
    Arc::new(|_| Vec2::ZERO)
}

pub fn zero_flux() -> FluxField {
    Arc::new(|_, _| 0.0)
}

/// Symmetric part of a velocity gradient: the strain rate tensor.
pub fn strain(grad_u: Mat2) -> Mat2 {
    grad_u.sym()
}

/// Scalar curl ∂₁v₂ − ∂₂v₁ read off an exact gradient.
pub fn curl_from_grad(grad_v: Mat2) -> f64 {
    grad_v.m[1][0] - grad_v.m[0][1]
}

/// Scalar curl of a closure field by central differences.
pub fn curl2_fd(v: &dyn Fn(Vec2) -> Vec2, x: Vec2, h: f64) -> f64 {
    assert!(h > 0.0);
    let dv2_dx = (v(x + vec2(h, 0.0)).y - v(x - vec2(h, 0.0)).y) / (2.0 * h);
    let dv1_dy = (v(x + vec2(0.0, h)).x - v(x - vec2(0.0, h)).x) / (2.0 * h);
    dv2_dx - dv1_dy
}

/// Rock permeability tensor κ; the flow tensor is K = κ/μ.
#[derive(Clone)]
pub enum Kappa {
    Scalar(f64),
    Tensor(Mat2),
    Field(MatField),
}

impl Kappa {
    pub fn eval(&self, x: Vec2) -> Mat2 {
        match self {
            Kappa::Scalar(k) => Mat2::diag(*k, *k),
            Kappa::Tensor(m) => *m,
            Kappa::Field(f) => f(x),
        }
    }

    /// True when the tensor does not vary in space (enables cached inverses).
    pub fn is_uniform(&self) -> bool {
        !matches!(self, Kappa::Field(_))
    }
}

/// Coefficients and data of the coupled problem on (0,w)×(0,2).
#[derive(Clone)]
pub struct ProblemData {
    pub width: f64,
    /// Dynamic viscosity μ > 0.
    pub mu: f64,
    /// Density ρ ≥ 0; ρ = 0 drops convection and the problem is linear.
    pub rho: f64,
    /// Friction constant α_d > 0 of the interface slip law.
    pub alpha_d: f64,
    pub kappa: Kappa,
    pub f_s: VecField,
    pub f_d: VecField,
    /// Analytic curl of f_D when available (exact data oscillation);
    /// otherwise a finite-difference fallback is used.
    pub curl_f_d: Option<ScalarField>,
    /// Dirichlet velocity on Γ_S.
    pub g_s: VecField,
    /// Normal flux u_D·n on Γ_D.
    pub g_n: FluxField,
    /// Interface data: mass u_S·n_S + u_D·n_D = g_mass on Σ.
    pub g_mass: ScalarField,
    /// Interface data: p_S − 2μ n_S·e(u_S)n_S − p_D = g_force on Σ.
    pub g_force: ScalarField,
    /// Interface data: α_dμ/√(τ·κτ) u_S·τ + 2μ τ·e(u_S)n_S = g_bjs on Σ.
    pub g_bjs: ScalarField,
}

impl ProblemData {
    /// Homogeneous problem: all forcing, boundary and interface data zero.
    pub fn homogeneous(width: f64, mu: f64, rho: f64, alpha_d: f64, kappa: Kappa) -> ProblemData {
        assert!(width > 0.0 && mu > 0.0 && rho >= 0.0 && alpha_d > 0.0);
        ProblemData {
            width,
            mu,
            rho,
            alpha_d,
            kappa,
            f_s: zero_vec(),
            f_d: zero_vec(),
            curl_f_d: Some(zero_scalar()),
            g_s: zero_vec(),
            g_n: zero_flux(),
            g_mass: zero_scalar(),
            g_force: zero_scalar(),
            g_bjs: zero_scalar(),
        }
    }

    /// The Darcy tensor K = κ/μ at a point.
    pub fn k(&self, x: Vec2) -> Mat2 {
        self.kappa.eval(x) * (1.0 / self.mu)
    }

    /// K⁻¹ = μ κ⁻¹ at a point.
    pub fn k_inv(&self, x: Vec2) -> Mat2 {
        (self.kappa.eval(x) * (1.0 / self.mu)).inverse()
    }

    /// Slip friction coefficient α_d μ / √(τ·κτ) at a point of Σ.
    pub fn friction(&self, x: Vec2, tau: Vec2) -> f64 {
        let k_tau = tau.dot(self.kappa.eval(x).mul_vec(tau));
        assert!(k_tau > 0.0, "κ must be positive along Σ");
        self.alpha_d * self.mu / k_tau.sqrt()
    }
}

/// Exact fields of a manufactured solution (pressure already mean-zero;
/// the interface multiplier is λ = p_D restricted to Σ).
#[derive(Clone)]
pub struct ExactSolution {
    pub u_s: VecField,
    pub grad_u_s: MatField,
    pub p_s: ScalarField,
    pub u_d: VecField,
    pub div_u_d: ScalarField,
    pub p_d: ScalarField,
}

#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub data: ProblemData,
    pub exact: ExactSolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    /// Divergence-free cubic/quadratic polynomials with polynomial pressures.
    SmoothPoly,
    /// Trigonometric stream-function velocities with a smooth shared pressure.
    SmoothTrig,
    /// Pure porous-medium flow from a harmonic potential; the free flow rests.
    DarcyOnly,
    /// Pure free flow from a stream function vanishing on Σ; the bed is dry.
    StokesOnly,
}

pub const ALL_CASES: [Case; 4] = [
    Case::SmoothPoly,
    Case::SmoothTrig,
    Case::DarcyOnly,
    Case::StokesOnly,
];

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::SmoothPoly => "smooth_poly",
            Case::SmoothTrig => "smooth_trig",
            Case::DarcyOnly => "darcy_only",
            Case::StokesOnly => "stokes_only",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Case, String> {
        match s {
            "smooth_poly" => Ok(Case::SmoothPoly),
            "smooth_trig" => Ok(Case::SmoothTrig),
            "darcy_only" => Ok(Case::DarcyOnly),
            "stokes_only" => Ok(Case::StokesOnly),
            _ => Err(format!(
                "unknown case '{s}' (expected smooth_poly, smooth_trig, darcy_only or stokes_only)"
            )),
        }
    }
}

/// Hand-coded analytic pieces of a case before the pressure mean shift.
struct Analytic {
    u_s: VecField,
    grad_u_s: MatField,
    lap_u_s: VecField,
    p_s: ScalarField,
    grad_p_s: VecField,
    u_d: VecField,
    div_u_d: ScalarField,
    p_d: ScalarField,
    grad_p_d: VecField,
    curl_u_d: ScalarField,
}

fn analytic_fields(case: Case) -> Analytic {
    use std::f64::consts::PI;
    match case {
        Case::SmoothPoly => Analytic {
            u_s: Arc::new(|x| vec2(3.0 * x.y * x.y - 3.0 * x.x * x.x, 6.0 * x.x * x.y)),
            grad_u_s: Arc::new(|x| Mat2 {
                m: [[-6.0 * x.x, 6.0 * x.y], [6.0 * x.y, 6.0 * x.x]],
            }),
            lap_u_s: Arc::new(|_| Vec2::ZERO),
            p_s: Arc::new(|x| x.x * x.y),
            grad_p_s: Arc::new(|x| vec2(x.y, x.x)),
            u_d: Arc::new(|x| vec2(2.0 * x.x * x.x * x.y, -2.0 * x.x * x.y * x.y)),
            div_u_d: Arc::new(|_| 0.0),
            p_d: Arc::new(|x| x.x + x.y * x.y),
            grad_p_d: Arc::new(|x| vec2(1.0, 2.0 * x.y)),
            curl_u_d: Arc::new(|x| -2.0 * (x.x * x.x + x.y * x.y)),
        },
        Case::SmoothTrig => Analytic {
            // u_S = curl(sin πx sin πy), u_D = −∇(sin πx sin πy)·rotated pair
            u_s: Arc::new(|x| {
                vec2(
                    PI * (PI * x.x).sin() * (PI * x.y).cos(),
                    -PI * (PI * x.x).cos() * (PI * x.y).sin(),
                )
            }),
            grad_u_s: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * x.y).sin_cos();
                let p2 = PI * PI;
                Mat2 {
                    m: [[p2 * cx * cy, -p2 * sx * sy], [p2 * sx * sy, -p2 * cx * cy]],
                }
            }),
            lap_u_s: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * x.y).sin_cos();
                -2.0 * PI * PI * vec2(PI * sx * cy, -PI * cx * sy)
            }),
            p_s: Arc::new(|x| (PI * x.x).sin() * (PI * x.y).cos()),
            grad_p_s: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * x.y).sin_cos();
                vec2(PI * cx * cy, -PI * sx * sy)
            }),
            u_d: Arc::new(|x| {
                vec2(
                    -PI * (PI * x.x).cos() * (PI * x.y).sin(),
                    PI * (PI * x.x).sin() * (PI * x.y).cos(),
                )
            }),
            div_u_d: Arc::new(|_| 0.0),
            p_d: Arc::new(|x| (PI * x.x).sin() * (PI * x.y).cos()),
            grad_p_d: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * x.y).sin_cos();
                vec2(PI * cx * cy, -PI * sx * sy)
            }),
            curl_u_d: Arc::new(|x| 2.0 * PI * PI * (PI * x.x).cos() * (PI * x.y).cos()),
        },
        Case::DarcyOnly => {
            // potential flow u_D = s∇φ with harmonic φ = cos πx cosh πy
            let s = 1.0 / (PI.cosh());
            Analytic {
                u_s: zero_vec(),
                grad_u_s: Arc::new(|_| Mat2::ZERO),
                lap_u_s: zero_vec(),
                p_s: zero_scalar(),
                grad_p_s: zero_vec(),
                u_d: Arc::new(move |x| {
                    s * PI
                        * vec2(
                            -(PI * x.x).sin() * (PI * x.y).cosh(),
                            (PI * x.x).cos() * (PI * x.y).sinh(),
                        )
                }),
                div_u_d: Arc::new(|_| 0.0),
                p_d: Arc::new(move |x| -s * (PI * x.x).cos() * (PI * x.y).cosh()),
                grad_p_d: Arc::new(move |x| {
                    -s * PI
                        * vec2(
                            -(PI * x.x).sin() * (PI * x.y).cosh(),
                            (PI * x.x).cos() * (PI * x.y).sinh(),
                        )
                }),
                curl_u_d: zero_scalar(),
            }
        }
        Case::StokesOnly => Analytic {
            // u_S = curl(sin πx sin π(y−1)) vanishes normally on Σ
            u_s: Arc::new(|x| {
                vec2(
                    PI * (PI * x.x).sin() * (PI * (x.y - 1.0)).cos(),
                    -PI * (PI * x.x).cos() * (PI * (x.y - 1.0)).sin(),
                )
            }),
            grad_u_s: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * (x.y - 1.0)).sin_cos();
                let p2 = PI * PI;
                Mat2 {
                    m: [[p2 * cx * cy, -p2 * sx * sy], [p2 * sx * sy, -p2 * cx * cy]],
                }
            }),
            lap_u_s: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * (x.y - 1.0)).sin_cos();
                -2.0 * PI * PI * vec2(PI * sx * cy, -PI * cx * sy)
            }),
            p_s: Arc::new(|x| (PI * x.x).cos() * (PI * x.y).cos()),
            grad_p_s: Arc::new(|x| {
                let (sx, cx) = (PI * x.x).sin_cos();
                let (sy, cy) = (PI * x.y).sin_cos();
                vec2(-PI * sx * cy, -PI * cx * sy)
            }),
            u_d: zero_vec(),
            div_u_d: zero_scalar(),
            p_d: zero_scalar(),
            grad_p_d: zero_vec(),
            curl_u_d: zero_scalar(),
        },
    }
}

/// Mean of the piecewise pressure over both rectangles by tensor Gauss
/// quadrature (exact for the polynomial case, ~1e-15 for the smooth ones).
fn domain_mean(width: f64, p_s: &ScalarField, p_d: &ScalarField) -> f64 {
    let rule = EdgeRule::gauss(20);
    let mut integral = 0.0;
    for (&xi, &wx) in rule.points.iter().zip(&rule.weights) {
        for (&eta, &wy) in rule.points.iter().zip(&rule.weights) {
            let w = wx * wy * width;
            integral += w * p_d(vec2(width * xi, eta));
            integral += w * p_s(vec2(width * xi, 1.0 + eta));
        }
    }
    integral / (2.0 * width)
}

pub fn make_manufactured(case: Case, width: f64) -> ManufacturedCase {
    make_manufactured_params(case, width, 1.0, 1.0, 1.0)
}

/// Build a manufactured case with the given coefficients. The permeability is
/// κ = μI so that K = I; all data are induced analytically from the exact
/// fields and the mean-zero pressure shift is computed numerically.
pub fn make_manufactured_params(
    case: Case,
    width: f64,
    mu: f64,
    rho: f64,
    alpha_d: f64,
) -> ManufacturedCase {
    assert!(width > 0.0 && mu > 0.0 && rho >= 0.0 && alpha_d > 0.0);
    let a = analytic_fields(case);
    let c = domain_mean(width, &a.p_s, &a.p_d);

    let p_s: ScalarField = {
        let raw = a.p_s.clone();
        Arc::new(move |x| raw(x) - c)
    };
    let p_d: ScalarField = {
        let raw = a.p_d.clone();
        Arc::new(move |x| raw(x) - c)
    };

    // f_S = −μΔu_S + ∇p_S + ρ(u_S·∇)u_S for the divergence-free exact field
    let f_s: VecField = {
        let (u, g, lap, gp) = (a.u_s.clone(), a.grad_u_s.clone(), a.lap_u_s.clone(), a.grad_p_s.clone());
        Arc::new(move |x| -mu * lap(x) + gp(x) + rho * g(x).mul_vec(u(x)))
    };
    // f_D = K⁻¹u_D + ∇p_D with K = I
    let f_d: VecField = {
        let (u, gp) = (a.u_d.clone(), a.grad_p_d.clone());
        Arc::new(move |x| u(x) + gp(x))
    };
    // curl f_D = curl u_D since K = I and curl ∇p_D = 0
    let curl_f_d: ScalarField = a.curl_u_d.clone();

    let g_s: VecField = a.u_s.clone();
    let g_n: FluxField = {
        let u = a.u_d.clone();
        Arc::new(move |x, n| u(x).dot(n))
    };

    // interface data at y = 1 with n_S = (0,−1), τ = (1,0)
    let n_s = vec2(0.0, -1.0);
    let tau = vec2(1.0, 0.0);
    let g_mass: ScalarField = {
        let (us, ud) = (a.u_s.clone(), a.u_d.clone());
        Arc::new(move |x| us(x).dot(n_s) - ud(x).dot(n_s))
    };
    let g_force: ScalarField = {
        let (ps, pd, g) = (p_s.clone(), p_d.clone(), a.grad_u_s.clone());
        Arc::new(move |x| {
            let e = strain(g(x));
            ps(x) - 2.0 * mu * n_s.dot(e.mul_vec(n_s)) - pd(x)
        })
    };
    let friction = alpha_d * mu / mu.sqrt(); // √(τ·κτ) = √μ for κ = μI
    let g_bjs: ScalarField = {
        let (us, g) = (a.u_s.clone(), a.grad_u_s.clone());
        Arc::new(move |x| {
            let e = strain(g(x));
            friction * us(x).dot(tau) + 2.0 * mu * tau.dot(e.mul_vec(n_s))
        })
    };

    let data = ProblemData {
        width,
        mu,
        rho,
        alpha_d,
        kappa: Kappa::Scalar(mu),
        f_s,
        f_d,
        curl_f_d: Some(curl_f_d),
        g_s,
        g_n,
        g_mass,
        g_force,
        g_bjs,
    };
    let exact = ExactSolution {
        u_s: a.u_s,
        grad_u_s: a.grad_u_s,
        p_s,
        u_d: a.u_d,
        div_u_d: a.div_u_d,
        p_d,
    };
    ManufacturedCase {
        name: case.name(),
        data,
        exact,
    }
}

/// Discontinuous-permeability benchmark without an exact solution: a 2×2
/// checkerboard of κ-values in the porous layer and a rotational body force
/// stirring the free flow. The coefficient jumps concentrate the error near
/// the interior cross point and the interface, which adaptive refinement
/// should exploit.
pub fn checkerboard_problem(width: f64, contrast: f64) -> ProblemData {
    assert!(width > 0.0 && contrast > 0.0);
    let half_x = width / 2.0;
    let kappa: MatField = Arc::new(move |x: Vec2| {
        let i = usize::from(x.x >= half_x);
        let j = usize::from(x.y >= 0.5);
        let k = if (i + j) % 2 == 0 { 1.0 } else { contrast };
        Mat2::diag(k, k)
    });
    let mut data = ProblemData::homogeneous(width, 1.0, 1.0, 1.0, Kappa::Field(kappa));
    let center = vec2(width / 2.0, 1.5);
    data.f_s = Arc::new(move |x: Vec2| {
        let r = x - center;
        vec2(-r.y, r.x)
    });
    data
}
