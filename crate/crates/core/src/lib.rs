//! Numerical toolkit for first-order hyperbolic systems on [0, 1] with
//! nonlocal integral boundary conditions and Volterra-type integral terms.
//!
//! The pieces are layered: [`expr`] and [`scenario`] describe a problem,
//! [`characteristics`] traces its characteristic curves, [`operators`]
//! evaluates the integral operators of the characteristic representation,
//! [`solver`] computes solutions on a grid, [`smoothing`] measures when
//! discontinuities of the data disappear, and [`proofcheck`] verifies the
//! operator identities behind the smoothing argument numerically.

pub mod characteristics;
pub mod expr;
pub mod field;
pub mod operators;
pub mod proofcheck;
pub mod quadrature;
pub mod scenario;
pub mod smoothing;
pub mod solver;
