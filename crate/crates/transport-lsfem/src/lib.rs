//! Least-squares finite element solver for the linear transport equation
//!
//! Solves ∇·(βu) + γu = f on polygonal (optionally curved) 2D domains with
//! inflow boundary data, working directly with the flux σ = βu in the
//! lowest-order Raviart-Thomas space. Two quadratic least-squares
//! formulations are provided (`ls1` needs |β| > 0, `ls2` needs γ ≠ 0),
//! together with two scalar recoveries of u from σ, exact a posteriori
//! error estimation, longest-edge adaptive mesh refinement, and a study
//! harness that records convergence histories for a catalog of built-in
//! problems.

pub mod adaptivity;
pub mod assembly;
pub mod fem;
pub mod geom;
pub mod mesh;
pub mod problems;
pub mod postprocess;
pub mod solver;
pub mod study;
pub mod vtk;
pub mod quadrature;

mod summation;

pub use summation::NeumaierSum;
