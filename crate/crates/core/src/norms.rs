//! Parameter-weighted norms and convergence-rate bookkeeping.
//!
//! The velocity norm is `kappa^{-1/2}||v|| + ||div v|| + F^{1/3}||v||_L3`
//! with variable coefficients moved inside the integrals. The pressure norm
//! is the sum-space norm over (L2, weighted H1, weighted W^{1,3/2})
//! realisations: the infimum over three-way splittings is computed exactly
//! from the stationarity system of the quadratic splitting problem.

use std::sync::Arc;

use faer::linalg::solvers::Solve;

use crate::error::{Error, Result};
use crate::fespace::{divergence_as_dg, project_l2, FeFunction, FeSpace};
use crate::forms::{
    assemble_mass, assemble_pressure_laplacian, assemble_pressure_slaplacian_linearised,
    ModelParams, SparseOperator, TripletBuilder,
};
use crate::mesh::Mesh;
use crate::quadrature::triangle_rule;

/// A vector field with divergence, sampled per (cell, reference point,
/// physical point). Finite element functions and error fields both fit.
pub type VecDivField<'a> = dyn Fn(usize, [f64; 2], [f64; 2]) -> ([f64; 2], f64) + 'a;

fn integrate_field(
    mesh: &Mesh,
    degree: usize,
    field: &VecDivField,
) -> Result<(f64, f64, f64)> {
    let rule = triangle_rule(degree)?;
    let mut l2 = 0.0;
    let mut div2 = 0.0;
    let mut l3 = 0.0;
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map.to_physical(p);
            let (v, d) = field(c, p, x);
            let m2 = v[0] * v[0] + v[1] * v[1];
            l2 += w * map.det * m2;
            div2 += w * map.det * d * d;
            l3 += w * map.det * m2.powf(1.5);
        }
    }
    Ok((l2, div2, l3))
}

/// Weighted velocity norm of a field:
/// `(int kappa^{-1} |v|^2)^{1/2} + ||div v|| + F^{1/3} ||v||_{0,3}`.
pub fn norm_v_field(
    mesh: &Mesh,
    params: &ModelParams,
    degree: usize,
    field: &VecDivField,
) -> Result<f64> {
    let rule = triangle_rule(degree)?;
    let mut kl2 = 0.0;
    let mut div2 = 0.0;
    let mut l3 = 0.0;
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map.to_physical(p);
            let (v, d) = field(c, p, x);
            kl2 += w * map.det * params.kappa.inv_pairing(x, v, v)?;
            div2 += w * map.det * d * d;
            l3 += w * map.det * (v[0] * v[0] + v[1] * v[1]).powf(1.5);
        }
    }
    Ok(kl2.sqrt() + div2.sqrt() + params.forchheimer_f.powf(1.0 / 3.0) * l3.powf(1.0 / 3.0))
}

/// Weighted velocity norm of a finite element function.
pub fn norm_v(u: &FeFunction, params: &ModelParams) -> Result<f64> {
    let deg = 2 * u.space.degree + 4;
    let uc = u.clone();
    norm_v_field(&u.space.mesh, params, deg, &move |c, rp, _x| {
        (uc.eval_vector(c, rp), uc.eval_div(c, rp).unwrap())
    })
}

/// Unweighted `H^3(div)`-type norm: `( ||v||^3_{0,3} + ||div v||^2 )^{1/2}`.
pub fn norm_h3div_field(mesh: &Mesh, degree: usize, field: &VecDivField) -> Result<f64> {
    let (_, div2, l3) = integrate_field(mesh, degree, field)?;
    Ok((l3 + div2).sqrt())
}

/// Homogeneous variant used for error reporting:
/// `( ||v||^2_{0,3} + ||div v||^2 )^{1/2}`. Unlike the power form above it
/// scales linearly with the field, so error-decay rates read off directly
/// (with exactly conserved divergence the power form reports 3/2 of the
/// L3 rate).
pub fn norm_h3div_homogeneous_field(
    mesh: &Mesh,
    degree: usize,
    field: &VecDivField,
) -> Result<f64> {
    let (_, div2, l3) = integrate_field(mesh, degree, field)?;
    Ok((l3.powf(2.0 / 3.0) + div2).sqrt())
}

pub fn norm_h3div_homogeneous(u: &FeFunction) -> Result<f64> {
    let deg = 2 * u.space.degree + 4;
    let uc = u.clone();
    norm_h3div_homogeneous_field(&u.space.mesh, deg, &move |c, rp, _x| {
        (uc.eval_vector(c, rp), uc.eval_div(c, rp).unwrap())
    })
}

pub fn norm_h3div(u: &FeFunction) -> Result<f64> {
    let deg = 2 * u.space.degree + 4;
    let uc = u.clone();
    norm_h3div_field(&u.space.mesh, deg, &move |c, rp, _x| {
        (uc.eval_vector(c, rp), uc.eval_div(c, rp).unwrap())
    })
}

/// L2 norm of a scalar field given per (cell, reference point, physical point).
pub fn norm_l2_scalar_field(
    mesh: &Mesh,
    degree: usize,
    field: &dyn Fn(usize, [f64; 2], [f64; 2]) -> f64,
) -> Result<f64> {
    let rule = triangle_rule(degree)?;
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map.to_physical(p);
            let v = field(c, p, x);
            acc += w * map.det * v * v;
        }
    }
    Ok(acc.sqrt())
}

pub fn norm_l2(q: &FeFunction) -> Result<f64> {
    let deg = 2 * q.space.degree + 4;
    let qc = q.clone();
    norm_l2_scalar_field(&q.space.mesh, deg, &move |c, rp, _x| qc.eval_scalar(c, rp))
}

/// Sum-space pressure norm from pre-assembled realisation blocks:
/// the minimum over splittings `q = q_1 + ... + q_m` of
/// `(sum_i ||q_i||^2_{B_i})^{1/2}`, equal to `(q' (sum_i B_i^{-1})^{-1} q)^{1/2}`.
///
/// Computed through the stationarity system `B_i q_i = lambda`,
/// `sum q_i = q`, whose multiplier gives `norm^2 = q' lambda`.
pub fn norm_qhat_with_ops(q: &[f64], blocks: &[&SparseOperator]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::invalid("sum-space norm needs at least one block"));
    }
    let n = q.len();
    for b in blocks {
        if b.nrows != n || b.ncols != n {
            return Err(Error::invalid("block dimensions must match the vector"));
        }
    }
    let m = blocks.len();
    // KKT system in (q_1..q_m, lambda).
    let dim = (m + 1) * n;
    let mut t = TripletBuilder::new(dim, dim);
    for (bi, b) in blocks.iter().enumerate() {
        for (i, j, v) in b.triplets() {
            t.push(bi * n + i, bi * n + j, v);
        }
        for i in 0..n {
            t.push(bi * n + i, m * n + i, -1.0);
            t.push(m * n + i, bi * n + i, -1.0);
        }
    }
    let kkt = t.finish(true);
    let lu = match kkt.to_faer().sp_lu() {
        Ok(lu) => lu,
        Err(_) => return norm_qhat_dense_pinv(q, blocks),
    };
    let mut rhs = faer::Mat::<f64>::zeros(dim, 1);
    for i in 0..n {
        rhs[(m * n + i, 0)] = -q[i];
    }
    let sol = lu.solve(&rhs);
    let mut sq = 0.0;
    for i in 0..n {
        sq += q[i] * sol[(m * n + i, 0)];
    }
    if !sq.is_finite() || sq < -1e-8 {
        return norm_qhat_dense_pinv(q, blocks);
    }
    Ok(sq.max(0.0).sqrt())
}

/// Pseudo-inverse fallback for singular blocks at desk scale.
fn norm_qhat_dense_pinv(q: &[f64], blocks: &[&SparseOperator]) -> Result<f64> {
    let n = q.len();
    if n > 4000 {
        return Err(Error::Singular(
            "singular sum-space blocks too large for dense pseudo-inverse".into(),
        ));
    }
    let mut s = faer::Mat::<f64>::zeros(n, n);
    let mut any = false;
    for b in blocks {
        let evd = b
            .to_dense()
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let vals = evd.S();
        let vecs = evd.U();
        let max = (0..n).map(|i| vals[i].abs()).fold(0.0f64, f64::max);
        let cut = 1e-12 * max.max(1e-300);
        for j in 0..n {
            if vals[j].abs() > cut {
                any = true;
                let inv = 1.0 / vals[j];
                for r in 0..n {
                    for c in 0..n {
                        s[(r, c)] += inv * vecs[(r, j)] * vecs[(c, j)];
                    }
                }
            }
        }
    }
    if !any {
        return Err(Error::Singular("all sum-space blocks are singular".into()));
    }
    let lu = s.partial_piv_lu();
    let mut rhs = faer::Mat::<f64>::zeros(n, 1);
    for i in 0..n {
        rhs[(i, 0)] = q[i];
    }
    let x = lu.solve(&rhs);
    let mut sq = 0.0;
    for i in 0..n {
        sq += q[i] * x[(i, 0)];
    }
    Ok(sq.max(0.0).sqrt())
}

/// Sum-space pressure norm, assembling the three realisation blocks (mass,
/// weighted facet Laplacian, linearised 3/2-Laplacian around `p_ref`).
/// The 3/2-Laplacian block is dropped when `F = 0`.
pub fn norm_qhat(
    q: &FeFunction,
    params: &ModelParams,
    p_ref: &FeFunction,
) -> Result<f64> {
    let space: &Arc<FeSpace> = &q.space;
    let mass = assemble_mass(space)?;
    let a_kappa = assemble_pressure_laplacian(&params.kappa, space)?;
    if params.forchheimer_f > 0.0 {
        let a_s = assemble_pressure_slaplacian_linearised(p_ref, params, space)?;
        norm_qhat_with_ops(&q.coeffs, &[&mass, &a_kappa, &a_s])
    } else {
        norm_qhat_with_ops(&q.coeffs, &[&mass, &a_kappa])
    }
}

/// Supremum-norm of the projected divergence residual `P_h(div u - g)` over
/// the coefficient vector.
pub fn div_residual_inf(
    u: &FeFunction,
    g: &dyn Fn([f64; 2]) -> f64,
    q_space: &Arc<FeSpace>,
) -> Result<f64> {
    let div_u = divergence_as_dg(u, q_space)?;
    let g_h = project_l2(g, q_space)?;
    Ok(div_u
        .coeffs
        .iter()
        .zip(&g_h.coeffs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// One refinement level of an error study.
#[derive(Clone, Debug, Default)]
pub struct LevelRecord {
    pub h: f64,
    pub n_dofs: usize,
    pub err_u: f64,
    pub err_p: f64,
    pub err_u_weighted: Option<f64>,
    pub err_p_weighted: Option<f64>,
    pub div_residual_inf: f64,
    pub newton_iters: usize,
}

/// Error history with rates computed as `log(e/e~) / log(h/h~)`.
#[derive(Clone, Debug, Default)]
pub struct ErrorReport {
    pub levels: Vec<LevelRecord>,
    pub rates_u: Vec<Option<f64>>,
    pub rates_p: Vec<Option<f64>>,
    pub rates_u_weighted: Vec<Option<f64>>,
    pub rates_p_weighted: Vec<Option<f64>>,
}

impl ErrorReport {
    pub fn from_levels(levels: Vec<LevelRecord>) -> Result<ErrorReport> {
        let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
        let rates_u = convergence_rates(&hs, &levels.iter().map(|l| l.err_u).collect::<Vec<_>>())?;
        let rates_p = convergence_rates(&hs, &levels.iter().map(|l| l.err_p).collect::<Vec<_>>())?;
        let wu: Option<Vec<f64>> = levels.iter().map(|l| l.err_u_weighted).collect();
        let wp: Option<Vec<f64>> = levels.iter().map(|l| l.err_p_weighted).collect();
        let rates_u_weighted = match wu {
            Some(e) => convergence_rates(&hs, &e)?,
            None => vec![None; levels.len()],
        };
        let rates_p_weighted = match wp {
            Some(e) => convergence_rates(&hs, &e)?,
            None => vec![None; levels.len()],
        };
        Ok(ErrorReport { levels, rates_u, rates_p, rates_u_weighted, rates_p_weighted })
    }
}

/// Rates between consecutive levels; the first entry is absent.
pub fn convergence_rates(hs: &[f64], errors: &[f64]) -> Result<Vec<Option<f64>>> {
    if hs.len() != errors.len() {
        return Err(Error::invalid("mismatched level counts"));
    }
    let mut out = vec![None; hs.len()];
    for i in 1..hs.len() {
        if hs[i] >= hs[i - 1] {
            return Err(Error::invalid("mesh sizes must decrease monotonically"));
        }
        out[i] = Some((errors[i - 1] / errors[i]).ln() / (hs[i - 1] / hs[i]).ln());
    }
    Ok(out)
}
