//! Adaptive mixed finite element solver for the Cahn-Hilliard equation.
//!
//! The equation `u_t + Δ(εΔu − ε⁻¹f(u)) = 0` on `[-1,1]²` with homogeneous
//! Neumann conditions is discretized in the Ciarlet–Raviart mixed form with
//! continuous `P_m` Lagrange elements for both the phase field `u` and the
//! chemical potential `φ`. Residual a posteriori estimators drive a
//! refine/coarsen loop over newest-vertex-bisection meshes, and the zero
//! level set of `u` is extracted for sharp-interface diagnostics.

pub mod adapt;
pub mod analytic;
pub mod chsolver;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod interface;
pub mod linalg;
pub mod mesh;
pub mod runner;

pub use error::{Error, Result};
