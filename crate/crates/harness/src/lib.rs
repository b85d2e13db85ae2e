//! Experiment drivers and file formats for the Darcy-Forchheimer solver.
//!
//! Four experiments are provided:
//! - `ex1`: convergence against smooth manufactured solutions on the unit
//!   square (error rates in H3(div) / L2 norms),
//! - `ex2`: self-convergence against a fine-mesh reference with extreme
//!   heterogeneous parameters, in both unweighted and parameter-weighted
//!   norms,
//! - `ex3`: anisotropic filtration through a seven-cylinder obstacle domain
//!   (shipped mesh), reporting the peak velocity and Forchheimer threshold,
//! - `ex4`: condition numbers of the preconditioned Newton tangent over a
//!   (r, kappa, F, h) parameter grid for both block preconditioners.

pub mod config;
pub mod experiments;
pub mod manufactured;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};

/// Keep linear algebra single-threaded inside each experiment cell so that
/// repeated runs are bit-identical; outer parallelism goes over independent
/// grid cells.
pub fn configure_determinism() {
    faer::set_global_parallelism(faer::Par::Seq);
}
