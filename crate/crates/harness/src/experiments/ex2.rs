//! Self-convergence with extreme heterogeneous parameters on (0,2) x (0,1):
//! errors against a reference solution two refinements finer, in both the
//! unweighted H3(div)/L2 norms and the parameter-weighted V / sum-space
//! pressure norms. The reference is transferred down to each level's broken
//! spaces (Fortin interpolation for the flux, L2 projection for the
//! pressure), so the weighted norms are realised on the level meshes the
//! broken pressure space is defined over.

use std::path::Path;
use std::sync::Arc;

use dfcore::error::Result;
use dfcore::fespace::{interpolate_rt, project_l2, FeFunction, FeSpace};
use dfcore::forms::{
    assemble_mass, assemble_pressure_laplacian, assemble_pressure_slaplacian_linearised,
};
use dfcore::mesh::{
    refine_uniform, structured_rectangle, BoundaryRule, BoundaryTag, CellLocator, Mesh, Rect,
    SplitPattern,
};
use dfcore::nlsolve::{newton_solve, ProblemData};
use dfcore::norms::{
    div_residual_inf, norm_h3div_homogeneous, norm_l2, norm_qhat_with_ops, norm_v, ErrorReport,
    LevelRecord,
};

use crate::config::ExperimentConfig;
use crate::experiments::{newton_config_from, params_from_config, space_pair};
use crate::report;

fn ex2_base_mesh() -> Result<Mesh> {
    structured_rectangle(
        4,
        2,
        Rect { x0: 0.0, y0: 0.0, x1: 2.0, y1: 1.0 },
        SplitPattern::Diagonal,
        BoundaryRule {
            left: BoundaryTag::GammaU,
            right: BoundaryTag::GammaP,
            bottom: BoundaryTag::GammaU,
            top: BoundaryTag::GammaU,
        },
    )
}

fn ex2_data() -> ProblemData {
    ProblemData {
        f: Arc::new(|_| [0.0, 0.0]),
        g: Arc::new(|_| 0.0),
        // Prescribed normal flux on the left segment, walls elsewhere.
        boundary_flux: Arc::new(|x: [f64; 2]| {
            if x[0].abs() < 1e-12 {
                2.5 * x[1] * (1.0 - x[1])
            } else {
                0.0
            }
        }),
        pressure_head: Arc::new(|_| 0.0),
    }
}

pub struct Ex2Output {
    pub report: ErrorReport,
    pub solutions: Vec<(FeFunction, FeFunction)>,
    pub reference: (FeFunction, FeFunction),
}

pub fn run(config: &ExperimentConfig) -> Result<Ex2Output> {
    let params = params_from_config(config)?;
    let data = ex2_data();
    let newton = newton_config_from(config);
    let k = config.degree;

    // Level meshes plus a reference two refinements beyond the finest.
    let mut meshes: Vec<Arc<Mesh>> = vec![Arc::new(ex2_base_mesh()?)];
    for _ in 1..(config.levels + 2) {
        meshes.push(Arc::new(refine_uniform(meshes.last().unwrap())));
    }
    let ref_mesh = meshes.last().unwrap().clone();
    let (v_ref, q_ref) = space_pair(ref_mesh.clone(), k)?;
    let (u_ref, p_ref, _) = newton_solve(&params, &v_ref, &q_ref, &data, &newton)?;
    let ref_locator = CellLocator::new(&ref_mesh);
    let u_ref_field = {
        let u = u_ref.clone();
        move |x: [f64; 2]| -> [f64; 2] {
            let (c, r) = ref_locator.locate(x).expect("reference covers the domain");
            u.eval_vector(c, r)
        }
    };
    let ref_locator_p = CellLocator::new(&ref_mesh);
    let p_ref_field = {
        let p = p_ref.clone();
        move |x: [f64; 2]| -> f64 {
            let (c, r) = ref_locator_p.locate(x).expect("reference covers the domain");
            p.eval_scalar(c, r)
        }
    };

    let mut levels = Vec::new();
    let mut solutions = Vec::new();
    for level in 0..config.levels {
        let mesh = meshes[level].clone();
        let (v, q) = space_pair(mesh.clone(), k)?;
        let (uh, ph, rep) = newton_solve(&params, &v, &q, &data, &newton)?;
        if !rep.converged {
            return Err(dfcore::Error::Newton {
                iter: rep.iterations,
                msg: format!("ex2 level {level} did not converge"),
            });
        }
        // Reference transferred into the level spaces.
        let u_star = interpolate_rt(&u_ref_field, &v)?;
        let p_star = project_l2(&p_ref_field, &q)?;
        let mut e_u = u_star.clone();
        for (a, b) in e_u.coeffs.iter_mut().zip(&uh.coeffs) {
            *a -= b;
        }
        let mut e_p = p_star.clone();
        for (a, b) in e_p.coeffs.iter_mut().zip(&ph.coeffs) {
            *a -= b;
        }
        let err_u = norm_h3div_homogeneous(&e_u)?;
        let err_p = norm_l2(&e_p)?;
        let err_u_w = norm_v(&e_u, &params)?;
        // Sum-space blocks on the level mesh, linearised around the
        // transferred reference pressure.
        let mass = assemble_mass(&q)?;
        let a_kappa = assemble_pressure_laplacian(&params.kappa, &q)?;
        let a_s = assemble_pressure_slaplacian_linearised(&p_star, &params, &q)?;
        let err_p_w = norm_qhat_with_ops(&e_p.coeffs, &[&mass, &a_kappa, &a_s])?;
        let g = data.g.clone();
        let dr = div_residual_inf(&uh, &*g, &q)?;
        let n_dofs = v.n_dofs - v.constrained_dofs.len() + q.n_dofs;
        levels.push(LevelRecord {
            h: mesh.h,
            n_dofs,
            err_u,
            err_p,
            err_u_weighted: Some(err_u_w),
            err_p_weighted: Some(err_p_w),
            div_residual_inf: dr,
            newton_iters: rep.iterations,
        });
        solutions.push((uh, ph));
    }
    Ok(Ex2Output {
        report: ErrorReport::from_levels(levels)?,
        solutions,
        reference: (u_ref, p_ref),
    })
}

pub fn run_and_emit(config: &ExperimentConfig, out_dir: &Path) -> Result<Ex2Output> {
    let out = run(config)?;
    std::fs::create_dir_all(out_dir)?;
    let formats = &config.output.formats;
    if formats.iter().any(|f| f == "csv") {
        std::fs::write(out_dir.join("errors.csv"), report::errors_csv(&out.report, true))?;
        std::fs::write(out_dir.join("rates.csv"), report::rates_csv(&out.report))?;
    }
    if formats.iter().any(|f| f == "json") {
        let meta = serde_json::json!({
            "experiment": "ex2",
            "degree": config.degree,
            "levels": config.levels,
            "kappa0": 1e-8,
            "F": config.params.forchheimer_f,
            "r": config.params.r,
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
