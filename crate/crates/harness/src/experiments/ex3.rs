//! Filtration through a porous domain with seven circular obstacles,
//! anisotropic permeability and a Forchheimer correction. The unstructured
//! obstacle mesh is shipped with the crate; `examples/gen_ex3_mesh.rs`
//! regenerates it from the geometry constants below.

use std::path::Path;
use std::sync::Arc;

use dfcore::error::Result;
use dfcore::fespace::FeFunction;
use dfcore::mesh::{parse_mesh, Mesh};
use dfcore::nlsolve::{newton_solve, ProblemData};
use dfcore::norms::div_residual_inf;
use dfcore::quadrature::triangle_rule;

use crate::config::ExperimentConfig;
use crate::experiments::{newton_config_from, params_from_config, space_pair};
use crate::manufactured::kappa_max_ex3;
use crate::report;

/// Domain side length in metres.
pub const SIDE: f64 = 0.1;
/// Inlet fillet radius: the inlet arc is centred at (r, r) and meets both
/// walls tangentially, so the boundary has no reentrant corner there.
pub const INLET_RADIUS: f64 = 0.024;
/// Outlet fillet radius at the top-right corner.
pub const OUTLET_RADIUS: f64 = 0.036;
/// Obstacle centres and radii as fractions of the domain side.
pub const OBSTACLES: [([f64; 2], f64); 7] = [
    ([0.30, 0.22], 0.085),
    ([0.64, 0.17], 0.062),
    ([0.87, 0.40], 0.072),
    ([0.45, 0.50], 0.098),
    ([0.16, 0.62], 0.070),
    ([0.715, 0.735], 0.082),
    ([0.38, 0.88], 0.058),
];

pub const EX3_MESH_TEXT: &str = include_str!("../../assets/ex3_obstacles.txt");

pub fn obstacle_mesh() -> Result<Mesh> {
    parse_mesh(EX3_MESH_TEXT)
}

/// Radial inlet speed magnitude.
pub const INLET_SPEED: f64 = 0.25;

/// Problem data of the filtration experiment.
pub fn ex3_data() -> ProblemData {
    ProblemData {
        f: Arc::new(|_| [1.3e-5, 0.0]),
        g: Arc::new(|_| 0.0),
        // Radial field u = (1/4) x/|x| imposed through the inlet fillet;
        // the flux tapers to zero where the arc meets the walls.
        boundary_flux: Arc::new(|x: [f64; 2]| {
            let c = [INLET_RADIUS, INLET_RADIUS];
            let centre_dist = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
            let on_arc = x[0] < c[0] + 1e-9
                && x[1] < c[1] + 1e-9
                && (centre_dist - INLET_RADIUS).abs() < 0.25 * INLET_RADIUS;
            if !on_arc {
                return 0.0;
            }
            let rad = (x[0] * x[0] + x[1] * x[1]).sqrt().max(1e-12);
            let n_out = [(x[0] - c[0]) / centre_dist, (x[1] - c[1]) / centre_dist];
            INLET_SPEED * (x[0] * n_out[0] + x[1] * n_out[1]) / rad
        }),
        pressure_head: Arc::new(|_| 0.0),
    }
}

pub struct Ex3Output {
    pub u_max: f64,
    pub forchheimer_threshold: f64,
    pub newton_iters: usize,
    pub div_residual_inf: f64,
    pub n_cells: usize,
    pub n_dofs: usize,
    pub solution: (FeFunction, FeFunction),
}

pub fn run(config: &ExperimentConfig) -> Result<Ex3Output> {
    let params = params_from_config(config)?;
    let mesh = Arc::new(obstacle_mesh()?);
    let (v, q) = space_pair(mesh.clone(), config.degree)?;
    let data = ex3_data();
    let newton = newton_config_from(config);
    let (uh, ph, rep) = newton_solve(&params, &v, &q, &data, &newton)?;
    if !rep.converged {
        return Err(dfcore::Error::Newton {
            iter: rep.iterations,
            msg: format!("obstacle flow did not converge: {:?}", rep.residual_history),
        });
    }
    // Peak speed over quadrature points.
    let rule = triangle_rule(4)?;
    let mut u_max = 0.0f64;
    for c in 0..mesh.n_cells() {
        for p in &rule.points {
            let val = uh.eval_vector(c, *p);
            u_max = u_max.max((val[0] * val[0] + val[1] * val[1]).sqrt());
        }
    }
    let g = data.g.clone();
    let dr = div_residual_inf(&uh, &*g, &q)?;
    let n_dofs = v.n_dofs - v.constrained_dofs.len() + q.n_dofs;
    Ok(Ex3Output {
        u_max,
        forchheimer_threshold: kappa_max_ex3() * params.forchheimer_f * u_max,
        newton_iters: rep.iterations,
        div_residual_inf: dr,
        n_cells: mesh.n_cells(),
        n_dofs,
        solution: (uh, ph),
    })
}

pub fn run_and_emit(config: &ExperimentConfig, out_dir: &Path) -> Result<Ex3Output> {
    let out = run(config)?;
    std::fs::create_dir_all(out_dir)?;
    if config.output.formats.iter().any(|f| f == "json") {
        let doc = serde_json::json!({
            "experiment": "ex3",
            "degree": config.degree,
            "n_cells": out.n_cells,
            "n_dofs": out.n_dofs,
            "u_max": out.u_max,
            "forchheimer_threshold": out.forchheimer_threshold,
            "newton_iters": out.newton_iters,
            "div_residual_inf": out.div_residual_inf,
        });
        std::fs::write(
            out_dir.join("report.json"),
            serde_json::to_string_pretty(&doc).unwrap(),
        )?;
    }
    if config.output.formats.iter().any(|f| f == "vtk") {
        report::write_vtk(&out_dir.join("fields_0.vtk"), &out.solution.0, &out.solution.1)?;
    }
    Ok(out)
}
