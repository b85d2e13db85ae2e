//! Newton-Raphson driver for the mixed Darcy-Forchheimer system.
//!
//! Sign conventions: with the divergence coupling `D[q][v] = (q, div v)`,
//! the first-order system solved is
//!
//! ```text
//! A(u) u + c(u) - D^T p = F + <p_D, v.n>_{Gamma_p}
//! -D u                  = -G
//! ```
//!
//! so the tangent `[[A + H, -D^T], [-D, 0]]` is symmetric. The essential
//! flux condition on Gamma_u is imposed by constraining facet dofs to the
//! boundary data moments and reducing to the free dofs; the convergence
//! metric is the Euclidean norm of the reduced residual.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{boundary_flux_dofs, FeFunction, FeSpace};
use crate::forms::{
    assemble_a, assemble_b, assemble_c_residual, assemble_newton_hessian,
    assemble_pressure_flux_rhs, assemble_rhs, BlockSystem, Lifting, ModelParams, SparseOperator,
};
use crate::linsolve::solve_direct;
use crate::mesh::BoundaryTag;

/// Initial Newton state.
#[derive(Clone)]
pub enum InitialGuess {
    /// Solve the linear Darcy problem (F = 0) first. Default.
    DarcySolve,
    /// Boundary lifting only; zero free dofs and pressure.
    Zero,
    /// User-provided state (constrained dofs are overwritten by the data).
    Provided(Box<(FeFunction, FeFunction)>),
}

#[derive(Clone)]
pub struct NewtonConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Enable backtracking: halve the step while the residual grows, at most
    /// ten times. Plain Newton when `None`.
    pub damping: Option<f64>,
    pub initial_guess: InitialGuess,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            max_iters: 25,
            damping: None,
            initial_guess: InitialGuess::DarcySolve,
        }
    }
}

/// Per-iteration linear solve diagnostics.
#[derive(Clone, Debug)]
pub struct LinearStat {
    pub relative_residual: f64,
}

#[derive(Clone, Debug, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub linear_stats: Vec<LinearStat>,
}

/// Problem data: loads, fluid source, essential flux on Gamma_u and the
/// natural pressure head on Gamma_p.
pub struct ProblemData {
    pub f: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>,
    pub g: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    /// Outward normal flux `u . n` on Gamma_u.
    pub boundary_flux: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    /// Pressure head on Gamma_p (enters the load functional naturally).
    pub pressure_head: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
}

impl ProblemData {
    pub fn homogeneous(f: Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>) -> ProblemData {
        ProblemData {
            f,
            g: Arc::new(|_| 0.0),
            boundary_flux: Arc::new(|_| 0.0),
            pressure_head: Arc::new(|_| 0.0),
        }
    }
}

/// Static (state-independent) parts of the Newton iteration.
struct Workspace {
    a_darcy: SparseOperator,
    div: SparseOperator,
    load_u: Vec<f64>,
    load_p: Vec<f64>,
    lifting: Lifting,
    free_p_dim: usize,
}

impl Workspace {
    fn build(
        params: &ModelParams,
        v_space: &Arc<FeSpace>,
        q_space: &Arc<FeSpace>,
        data: &ProblemData,
    ) -> Result<Workspace> {
        let a_darcy = assemble_a(params, v_space)?;
        let div = assemble_b(v_space, q_space)?;
        let (mut load_u, load_p) = assemble_rhs(&*data.f, &*data.g, v_space, q_space)?;
        let natural = assemble_pressure_flux_rhs(&*data.pressure_head, v_space)?;
        for (l, n) in load_u.iter_mut().zip(&natural) {
            *l -= n;
        }
        let mut boundary = vec![0.0; v_space.n_dofs];
        for (dof, val) in boundary_flux_dofs(v_space, BoundaryTag::GammaU, &*data.boundary_flux)? {
            boundary[dof] = val;
        }
        let lifting = Lifting {
            free_u: v_space.free_dofs(),
            n_u_full: v_space.n_dofs,
            boundary,
        };
        Ok(Workspace { a_darcy, div, load_u, load_p, lifting, free_p_dim: q_space.n_dofs })
    }

    /// Reduced nonlinear residual at a full state. Rows:
    /// `r_u = A u + c(u) - D^T p - load_u`, `r_p = -D u + load_p`.
    fn residual(
        &self,
        params: &ModelParams,
        v_space: &Arc<FeSpace>,
        u: &FeFunction,
        p: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n_u = v_space.n_dofs;
        let mut r_full = vec![0.0; n_u];
        self.a_darcy.matvec(&u.coeffs, &mut r_full);
        let c_res = assemble_c_residual(u, params, v_space)?;
        let mut dtp = vec![0.0; n_u];
        self.div.matvec_transpose(p, &mut dtp);
        for i in 0..n_u {
            r_full[i] += c_res[i] - dtp[i] - self.load_u[i];
        }
        let mut du = vec![0.0; self.free_p_dim];
        self.div.matvec(&u.coeffs, &mut du);
        let r_p: Vec<f64> = du
            .iter()
            .zip(&self.load_p)
            .map(|(a, b)| -a + b)
            .collect();
        Ok((self.lifting.restrict(&r_full), r_p))
    }
}

fn euclidean(ru: &[f64], rp: &[f64]) -> f64 {
    let s: f64 = ru.iter().chain(rp.iter()).map(|v| v * v).sum();
    s.sqrt()
}

/// Solve the linear Darcy problem (`F = 0`) with the same data; the default
/// Newton initialisation.
pub fn initial_guess_darcy(
    params: &ModelParams,
    v_space: &Arc<FeSpace>,
    q_space: &Arc<FeSpace>,
    data: &ProblemData,
) -> Result<(FeFunction, FeFunction)> {
    let ws = Workspace::build(params, v_space, q_space, data)?;
    let mut u = FeFunction::zero(v_space.clone());
    u.coeffs.copy_from_slice(&ws.lifting.boundary);
    let p = vec![0.0; q_space.n_dofs];
    let (r_u, r_p) = ws.residual(&darcy_params(params), v_space, &u, &p)?;
    let sys = tangent_system(&ws, &darcy_params(params), v_space, &u, &r_u, &r_p)?;
    let (du, dp) = solve_direct(&sys)?;
    for (i, &g) in ws.lifting.free_u.iter().enumerate() {
        u.coeffs[g] += du[i];
    }
    let p = dp;
    Ok((u, FeFunction::from_coeffs(q_space.clone(), p)?))
}

fn darcy_params(params: &ModelParams) -> ModelParams {
    let mut p = params.clone();
    p.forchheimer_f = 0.0;
    p
}

fn tangent_system(
    ws: &Workspace,
    params: &ModelParams,
    v_space: &Arc<FeSpace>,
    u: &FeFunction,
    r_u: &[f64],
    r_p: &[f64],
) -> Result<BlockSystem> {
    let hess = assemble_newton_hessian(u, params, v_space)?;
    let a_t = ws.a_darcy.add(&hess);
    let free = &ws.lifting.free_u;
    let all_p: Vec<usize> = (0..ws.free_p_dim).collect();
    let a_red = a_t.submatrix(free, free);
    let b_red = ws.div.submatrix(&all_p, free).scale(-1.0);
    Ok(BlockSystem {
        a: a_red,
        b: b_red,
        rhs_u: r_u.iter().map(|v| -v).collect(),
        rhs_p: r_p.iter().map(|v| -v).collect(),
        lifting: Some(ws.lifting.clone()),
    })
}

/// Reduced tangent system at a given state, with the negated residual as
/// right-hand side (the Newton step system).
pub fn tangent_at_state(
    params: &ModelParams,
    v_space: &Arc<FeSpace>,
    q_space: &Arc<FeSpace>,
    data: &ProblemData,
    u: &FeFunction,
    p: &FeFunction,
) -> Result<BlockSystem> {
    let ws = Workspace::build(params, v_space, q_space, data)?;
    let (r_u, r_p) = ws.residual(params, v_space, u, &p.coeffs)?;
    tangent_system(&ws, params, v_space, u, &r_u, &r_p)
}

/// Newton-Raphson solve of the discrete Darcy-Forchheimer system.
pub fn newton_solve(
    params: &ModelParams,
    v_space: &Arc<FeSpace>,
    q_space: &Arc<FeSpace>,
    data: &ProblemData,
    config: &NewtonConfig,
) -> Result<(FeFunction, FeFunction, NewtonReport)> {
    if v_space.mesh.boundary_facets(BoundaryTag::GammaP).next().is_none() {
        return Err(Error::invalid(
            "well-posed problems need a nonempty pressure boundary Gamma_p",
        ));
    }
    let ws = Workspace::build(params, v_space, q_space, data)?;

    let (mut u, mut p) = match &config.initial_guess {
        InitialGuess::Zero => {
            let mut u = FeFunction::zero(v_space.clone());
            u.coeffs.copy_from_slice(&ws.lifting.boundary);
            (u, vec![0.0; q_space.n_dofs])
        }
        InitialGuess::DarcySolve => {
            let (u, p) = initial_guess_darcy(params, v_space, q_space, data)?;
            (u, p.coeffs)
        }
        InitialGuess::Provided(state) => {
            let (mut u, p) = (state.0.clone(), state.1.clone());
            if u.coeffs.len() != v_space.n_dofs || p.coeffs.len() != q_space.n_dofs {
                return Err(Error::invalid("provided initial state has wrong dimensions"));
            }
            for &dof in &v_space.constrained_dofs {
                u.coeffs[dof] = ws.lifting.boundary[dof];
            }
            (u, p.coeffs)
        }
    };

    let mut report = NewtonReport::default();
    let (mut r_u, mut r_p) = ws.residual(params, v_space, &u, &p)?;
    let mut norm = euclidean(&r_u, &r_p);
    report.residual_history.push(norm);
    let tol = config.tol_abs.max(config.tol_rel * norm);

    for it in 1..=config.max_iters {
        if norm <= tol {
            report.converged = true;
            break;
        }
        let sys = tangent_system(&ws, params, v_space, &u, &r_u, &r_p)?;
        let (du, dp) = solve_direct(&sys).map_err(|e| Error::Newton {
            iter: it,
            msg: format!("tangent solve failed: {e}"),
        })?;
        report.linear_stats.push(LinearStat {
            relative_residual: sys.relative_residual(&du, &dp),
        });

        let mut step = 1.0;
        let mut halvings = 0;
        loop {
            let mut u_new = u.clone();
            for (i, &g) in ws.lifting.free_u.iter().enumerate() {
                u_new.coeffs[g] += step * du[i];
            }
            let p_new: Vec<f64> =
                p.iter().zip(&dp).map(|(a, b)| a + step * b).collect();
            let (ru_new, rp_new) = ws.residual(params, v_space, &u_new, &p_new)?;
            let norm_new = euclidean(&ru_new, &rp_new);
            let accept = config.damping.is_none()
                || norm_new <= norm
                || halvings >= 10
                || norm <= tol;
            if accept {
                u = u_new;
                p = p_new;
                r_u = ru_new;
                r_p = rp_new;
                norm = norm_new;
                break;
            }
            step *= config.damping.unwrap_or(0.5);
            halvings += 1;
        }
        report.iterations = it;
        report.residual_history.push(norm);
        if !norm.is_finite() {
            return Err(Error::Newton { iter: it, msg: "residual is not finite".into() });
        }
        if norm <= tol {
            report.converged = true;
            break;
        }
    }
    if norm <= tol {
        report.converged = true;
    }

    Ok((
        u,
        FeFunction::from_coeffs(q_space.clone(), p)?,
        report,
    ))
}
