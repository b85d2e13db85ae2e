//! Mixed finite element solver core for the nonlinear Darcy-Forchheimer
//! equations in 2D.
//!
//! The crate is organised along the solver pipeline:
//!
//! - [`mesh`]: conforming triangular meshes with oriented facets and
//!   boundary tagging,
//! - [`quadrature`]: Gaussian rules on the reference triangle and edge,
//! - [`fespace`]: Raviart-Thomas and discontinuous Lagrange spaces with
//!   the Piola map, Fortin interpolation and L2 projection,
//! - [`forms`]: assembly of all bilinear/nonlinear forms (Darcy mass,
//!   divergence coupling, Forchheimer drag and its Newton Hessian,
//!   weighted facet Laplacians, Riesz blocks),
//! - [`nlsolve`]: the Newton-Raphson driver,
//! - [`linsolve`]: direct and preconditioned MINRES solvers for the
//!   saddle-point tangent systems, plus condition-number estimation,
//! - [`norms`]: parameter-weighted velocity/pressure norms and
//!   convergence-rate bookkeeping.

pub mod error;
pub mod fespace;
pub mod forms;
pub mod linsolve;
pub mod mesh;
pub mod nlsolve;
pub mod norms;
pub mod quadrature;

pub use error::{Error, Result};
