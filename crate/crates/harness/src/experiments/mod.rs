//! Experiment drivers.

pub mod ex1;
pub mod ex2;
pub mod ex3;
pub mod ex4;

use std::sync::Arc;

use dfcore::error::Result;
use dfcore::fespace::FeSpace;
use dfcore::mesh::Mesh;

use crate::config::{ExperimentConfig, KappaSpec};
use dfcore::forms::{Kappa, ModelParams};

/// Mixed RT/DG space pair on a mesh.
pub fn space_pair(mesh: Arc<Mesh>, degree: usize) -> Result<(Arc<FeSpace>, Arc<FeSpace>)> {
    let v = FeSpace::raviart_thomas(mesh.clone(), degree)?;
    let q = FeSpace::discontinuous_lagrange(mesh, degree)?;
    Ok((v, q))
}

/// Model parameters from a configuration.
pub fn params_from_config(config: &ExperimentConfig) -> Result<ModelParams> {
    let kappa = match &config.params.kappa {
        KappaSpec::Constant(c) => Kappa::Constant(*c),
        KappaSpec::Named(name) if name == KappaSpec::HETEROGENEOUS_EX2 => {
            crate::manufactured::heterogeneous_kappa_ex2(1e-8)
        }
        KappaSpec::Named(name) if name == KappaSpec::TENSOR_EX3 => {
            crate::manufactured::tensor_kappa_ex3()
        }
        KappaSpec::Named(other) => {
            return Err(dfcore::Error::invalid(format!("unknown kappa spec {other:?}")))
        }
    };
    ModelParams::new(kappa, config.params.forchheimer_f, config.params.r)
}

pub fn newton_config_from(config: &ExperimentConfig) -> dfcore::nlsolve::NewtonConfig {
    dfcore::nlsolve::NewtonConfig {
        tol_abs: config.solver.tol_abs,
        tol_rel: config.solver.tol_rel,
        max_iters: config.solver.max_iters,
        damping: config.solver.damping,
        ..Default::default()
    }
}
