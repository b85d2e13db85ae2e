//! Convergence against smooth manufactured solutions on the unit square.

use std::path::Path;
use std::sync::Arc;

use dfcore::error::Result;
use dfcore::fespace::FeFunction;
use dfcore::mesh::{refine_uniform, structured_rectangle, BoundaryRule, Rect, SplitPattern};
use dfcore::nlsolve::newton_solve;
use dfcore::norms::{
    div_residual_inf, norm_h3div_homogeneous_field, norm_l2_scalar_field, ErrorReport,
    LevelRecord,
};

use crate::config::ExperimentConfig;
use crate::experiments::{newton_config_from, params_from_config, space_pair};
use crate::manufactured::smooth_unit_square;
use crate::report;

pub struct Ex1Output {
    pub report: ErrorReport,
    pub solutions: Vec<(FeFunction, FeFunction)>,
}

/// Run the accuracy study: `levels` uniform refinements of the unit square
/// (crossed pattern by default), errors measured in the H3(div) and L2 norms
/// against the manufactured solution.
pub fn run(config: &ExperimentConfig, pattern: SplitPattern) -> Result<Ex1Output> {
    let params = params_from_config(config)?;
    let ms = smooth_unit_square(&params);
    ms.self_check(&params, 1e-10)
        .map_err(dfcore::Error::InvalidArgument)?;
    let data = ms.problem_data();
    let newton = newton_config_from(config);
    let k = config.degree;

    let mut mesh = Arc::new(structured_rectangle(
        2,
        2,
        Rect::unit_square(),
        pattern,
        BoundaryRule::flux_left_bottom(),
    )?);
    let mut levels = Vec::new();
    let mut solutions = Vec::new();
    for level in 0..config.levels {
        if level > 0 {
            mesh = Arc::new(refine_uniform(&mesh));
        }
        let (v, q) = space_pair(mesh.clone(), k)?;
        let (uh, ph, rep) = newton_solve(&params, &v, &q, &data, &newton)?;
        if !rep.converged {
            return Err(dfcore::Error::Newton {
                iter: rep.iterations,
                msg: format!("level {level} did not converge: {:?}", rep.residual_history),
            });
        }
        let deg = 8;
        let uexact = ms.u.clone();
        let udiv = ms.div_u.clone();
        let uh_c = uh.clone();
        let err_u = norm_h3div_homogeneous_field(&mesh, deg, &move |c, rp, x| {
            let a = uh_c.eval_vector(c, rp);
            let e = uexact(x);
            let dd = uh_c.eval_div(c, rp).unwrap() - udiv(x);
            ([e[0] - a[0], e[1] - a[1]], dd)
        })?;
        let pexact = ms.p.clone();
        let ph_c = ph.clone();
        let err_p = norm_l2_scalar_field(&mesh, deg, &move |c, rp, x| {
            pexact(x) - ph_c.eval_scalar(c, rp)
        })?;
        let g = ms.g.clone();
        let dr = div_residual_inf(&uh, &*g, &q)?;
        let n_dofs = v.n_dofs - v.constrained_dofs.len() + q.n_dofs;
        levels.push(LevelRecord {
            h: mesh.h,
            n_dofs,
            err_u,
            err_p,
            err_u_weighted: None,
            err_p_weighted: None,
            div_residual_inf: dr,
            newton_iters: rep.iterations,
        });
        solutions.push((uh, ph));
    }
    Ok(Ex1Output { report: ErrorReport::from_levels(levels)?, solutions })
}

/// Run and write the artifacts (errors.csv, rates.csv, report.json, VTK).
pub fn run_and_emit(
    config: &ExperimentConfig,
    pattern: SplitPattern,
    out_dir: &Path,
) -> Result<Ex1Output> {
    let out = run(config, pattern)?;
    std::fs::create_dir_all(out_dir)?;
    let formats = &config.output.formats;
    if formats.iter().any(|f| f == "csv") {
        std::fs::write(out_dir.join("errors.csv"), report::errors_csv(&out.report, false))?;
        std::fs::write(out_dir.join("rates.csv"), report::rates_csv(&out.report))?;
    }
    if formats.iter().any(|f| f == "json") {
        let meta = serde_json::json!({
            "experiment": "ex1",
            "degree": config.degree,
            "levels": config.levels,
            "pattern": format!("{pattern:?}"),
        });
        std::fs::write(out_dir.join("report.json"), report::report_json(&out.report, meta))?;
    }
    if formats.iter().any(|f| f == "vtk") {
        for (i, (u, p)) in out.solutions.iter().enumerate() {
            report::write_vtk(&out_dir.join(format!("fields_{i}.vtk")), u, p)?;
        }
    }
    Ok(out)
}
