//! Condition numbers of the preconditioned Newton tangent over the
//! (r, kappa, F, h) parameter grid, for the intersection-norm (eq 5.3 form)
//! and scaled-Riesz (eq 5.5 form) block preconditioners.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use dfcore::error::Result;
use dfcore::fespace::FeFunction;
use dfcore::forms::ModelParams;
use dfcore::linsolve::{
    estimate_condition_number, preconditioned_spectrum, PrecondSpec, PrecondVariant,
    PressureMode, TangentPreconditioner,
};
use dfcore::mesh::{structured_rectangle, BoundaryRule, Rect, SplitPattern};
use dfcore::nlsolve::{initial_guess_darcy, newton_solve, tangent_at_state};

use crate::config::{
    ExperimentConfig, LinearisationState, PrecondVariantConfig, PressureModeConfig,
};
use crate::manufactured::smooth_unit_square;
use crate::report::{cond_csv, cond_json, CondRecord};

/// The paper's parameter grid.
pub fn default_grid() -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        vec![3.0, 4.0, 5.0],
        vec![1e-8, 1e-4, 1.0],
        vec![1.0, 1e3, 1e9],
        vec![0.25, 0.125, 0.0625],
    )
}

pub fn precond_spec_from(config: &ExperimentConfig) -> PrecondSpec {
    let variant = match config.precond.variant {
        PrecondVariantConfig::Intersection => PrecondVariant::IntersectionSum,
        PrecondVariantConfig::Scaled => PrecondVariant::ScaledRiesz,
        PrecondVariantConfig::None => PrecondVariant::None,
    };
    let pressure_mode = match config.precond.pressure_mode {
        PressureModeConfig::SumOfInverses => PressureMode::SumOfInverses,
        PressureModeConfig::Canonical => PressureMode::CanonicalInverse,
    };
    PrecondSpec { variant, pressure_mode }
}

/// Condition number of one grid cell. `h_nominal` is the structured grid
/// step (the mesh size is sqrt(2) times it).
pub fn condition_for_cell(
    r: f64,
    kappa: f64,
    forchheimer_f: f64,
    h_nominal: f64,
    degree: usize,
    spec: PrecondSpec,
    state: LinearisationState,
    config: &ExperimentConfig,
) -> Result<f64> {
    let n = (1.0 / h_nominal).round() as usize;
    let mesh = Arc::new(structured_rectangle(
        n,
        n,
        Rect::unit_square(),
        SplitPattern::Diagonal,
        BoundaryRule::flux_left_bottom(),
    )?);
    let (v, q) = crate::experiments::space_pair(mesh, degree)?;
    let params = ModelParams::constant(kappa, forchheimer_f, r);
    let ms = smooth_unit_square(&params);
    let data = ms.problem_data();
    let (u_hat, p_hat) = match state {
        LinearisationState::Zero => (FeFunction::zero(v.clone()), FeFunction::zero(q.clone())),
        LinearisationState::Darcy => initial_guess_darcy(&params, &v, &q, &data)?,
        LinearisationState::Converged => {
            let newton = crate::experiments::newton_config_from(config);
            let (uh, ph, _) = newton_solve(&params, &v, &q, &data, &newton)?;
            (uh, ph)
        }
    };
    let sys = tangent_at_state(&params, &v, &q, &data, &u_hat, &p_hat)?;
    let free = v.free_dofs();
    let pc = TangentPreconditioner::build(&params, &v, &q, &u_hat, &p_hat, spec, &free)?;
    estimate_condition_number(&sys, &pc)
}

/// Spectrum of the preconditioned tangent for one cell (plotting support).
pub fn spectrum_for_cell(
    r: f64,
    kappa: f64,
    forchheimer_f: f64,
    h_nominal: f64,
    degree: usize,
    spec: PrecondSpec,
    state: LinearisationState,
    config: &ExperimentConfig,
) -> Result<Vec<f64>> {
    let n = (1.0 / h_nominal).round() as usize;
    let mesh = Arc::new(structured_rectangle(
        n,
        n,
        Rect::unit_square(),
        SplitPattern::Diagonal,
        BoundaryRule::flux_left_bottom(),
    )?);
    let (v, q) = crate::experiments::space_pair(mesh, degree)?;
    let params = ModelParams::constant(kappa, forchheimer_f, r);
    let ms = smooth_unit_square(&params);
    let data = ms.problem_data();
    let (u_hat, p_hat) = match state {
        LinearisationState::Zero => (FeFunction::zero(v.clone()), FeFunction::zero(q.clone())),
        LinearisationState::Darcy => initial_guess_darcy(&params, &v, &q, &data)?,
        LinearisationState::Converged => {
            let newton = crate::experiments::newton_config_from(config);
            let (uh, ph, _) = newton_solve(&params, &v, &q, &data, &newton)?;
            (uh, ph)
        }
    };
    let sys = tangent_at_state(&params, &v, &q, &data, &u_hat, &p_hat)?;
    let free = v.free_dofs();
    let pc = TangentPreconditioner::build(&params, &v, &q, &u_hat, &p_hat, spec, &free)?;
    preconditioned_spectrum(&sys, &pc)
}

/// Run the full grid; eigenvalue failures are recorded per cell and the
/// sweep continues.
pub fn run(config: &ExperimentConfig) -> Vec<CondRecord> {
    let (rs, kappas, ffs, hs) = default_grid();
    let spec = precond_spec_from(config);
    let state = config.precond.linearisation_state;
    let mut cells = Vec::new();
    for &r in &rs {
        for &kappa in &kappas {
            for &ff in &ffs {
                for &h in &hs {
                    cells.push((r, kappa, ff, h));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(r, kappa, ff, h)| {
            match condition_for_cell(r, kappa, ff, h, config.degree, spec, state, config) {
                Ok(c) => CondRecord {
                    r,
                    kappa,
                    forchheimer_f: ff,
                    h_nominal: h,
                    cond: Some(c),
                    error: None,
                },
                Err(e) => CondRecord {
                    r,
                    kappa,
                    forchheimer_f: ff,
                    h_nominal: h,
                    cond: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn run_and_emit(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<CondRecord>> {
    let records = run(config);
    std::fs::create_dir_all(out_dir)?;
    let (_, _, _, hs) = default_grid();
    let variant = format!("{:?}", config.precond.variant);
    if config.output.formats.iter().any(|f| f == "csv") {
        std::fs::write(out_dir.join("cond.csv"), cond_csv(&records, &hs))?;
    }
    if config.output.formats.iter().any(|f| f == "json") {
        std::fs::write(out_dir.join("report.json"), cond_json(&records, &variant))?;
    }
    Ok(records)
}
