//! Adaptive mixed finite elements for coupled free/porous-medium flow.
//!
//! The library discretizes the stationary Navier-Stokes/Darcy system on a
//! two-layer channel with Bernardi-Raugel velocities in the free-flow region,
//! lowest-order Raviart-Thomas fluxes in the porous region, piecewise-constant
//! pressures and a continuous piecewise-linear interface multiplier on a
//! coarsened partition of the interface. On top of the solver sit a residual
//! a posteriori error estimator with elementwise indicators, Dörfler marking
//! and newest-vertex bisection, closing the usual solve-estimate-mark-refine
//! adaptive loop.

pub mod adaptivity;
pub mod assembly;
pub mod estimator;
pub mod geom;
pub mod mesh;
pub mod dofs;
pub mod model;
pub mod norms;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod spaces;
