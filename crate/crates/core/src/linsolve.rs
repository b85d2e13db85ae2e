//! Solvers for the saddle-point tangent systems: sparse direct factorisation
//! (reference path), preconditioned MINRES with the block-diagonal operator
//! preconditioners, condition-number estimation of the preconditioned
//! matrices, and discrete kernel extraction.
//!
//! Two preconditioner families are provided for the Newton tangent
//! `[[kappa^{-1} M + F H(u), B^T], [B, 0]]`:
//!
//! - `IntersectionSum`: velocity block `a + H + grad-div` (the Riesz map of
//!   the intersection norm, div term unweighted), pressure block the sum or
//!   the canonical combination of mass, weighted facet Laplacian and
//!   linearised 3/2-Laplacian inverses;
//! - `ScaledRiesz`: both H(div) terms scaled by the pointwise coefficient
//!   `w = kappa^{-1} + F |u|^{r-2}`, pressure block the `1/w`-weighted mass.
//!
//! Condition numbers are computed densely as `|lambda|_max / |lambda|_min`
//! of the preconditioned saddle matrix via the symmetric-definite pencil.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};
use crate::fespace::{FeFunction, FeSpace};
use crate::forms::{
    assemble_a, assemble_div_div, assemble_hdiv_riesz, assemble_mass, assemble_newton_hessian,
    assemble_pressure_laplacian, assemble_pressure_slaplacian_weighted,
    assemble_weighted_dg_mass, BlockSystem, ModelParams, RieszMode, SparseOperator,
};

/// Preconditioner family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondVariant {
    /// Intersection-norm Riesz map with sum-space pressure block.
    IntersectionSum,
    /// Pointwise-scaled H(div) Riesz map with weighted pressure mass.
    ScaledRiesz,
    /// Identity (unpreconditioned).
    None,
}

/// Realisation of the sum-space pressure block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureMode {
    /// Apply `M^{-1} + A_kappa^{-1} + A_s^{-1}` (three solves, summed).
    SumOfInverses,
    /// Apply `(M + A_kappa + A_s)^{-1}` (one solve).
    CanonicalInverse,
}

#[derive(Clone, Copy, Debug)]
pub struct PrecondSpec {
    pub variant: PrecondVariant,
    pub pressure_mode: PressureMode,
}

impl PrecondSpec {
    pub fn intersection() -> Self {
        PrecondSpec { variant: PrecondVariant::IntersectionSum, pressure_mode: PressureMode::SumOfInverses }
    }

    pub fn scaled() -> Self {
        PrecondSpec { variant: PrecondVariant::ScaledRiesz, pressure_mode: PressureMode::SumOfInverses }
    }

    pub fn none() -> Self {
        PrecondSpec { variant: PrecondVariant::None, pressure_mode: PressureMode::SumOfInverses }
    }
}

/// Krylov solve diagnostics.
#[derive(Clone, Debug)]
pub struct KrylovReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub breakdown: bool,
}

/// A factorised SPD block: sparse Cholesky, with a dense eigen-pseudoinverse
/// fallback for singular blocks at desk scale.
enum SpdSolve {
    Chol(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Pinv { vecs: Mat<f64>, inv_vals: Vec<f64> },
}

impl SpdSolve {
    fn factor(op: &SparseOperator) -> Result<SpdSolve> {
        let n = op.nrows;
        if let Ok(ch) = op.to_faer().sp_cholesky(faer::Side::Lower) {
            // Some singular matrices still factor numerically; probe once.
            let probe = Mat::<f64>::from_fn(n, 1, |i, _| (i % 7) as f64 / 7.0 + 0.1);
            let sol = ch.solve(&probe);
            if (0..n).all(|i| sol[(i, 0)].is_finite()) {
                return Ok(SpdSolve::Chol(ch));
            }
        }
        if n > 4000 {
            return Err(Error::Singular(
                "block not positive definite and too large for dense pseudo-inverse".into(),
            ));
        }
        let evd = op
            .to_dense()
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        let max = (0..n).map(|i| s[i].abs()).fold(0.0f64, f64::max);
        let cut = 1e-12 * max.max(1e-300);
        let inv_vals = (0..n)
            .map(|i| if s[i].abs() > cut { 1.0 / s[i] } else { 0.0 })
            .collect();
        Ok(SpdSolve::Pinv { vecs: evd.U().to_owned(), inv_vals })
    }

    fn solve_vec(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        match self {
            SpdSolve::Chol(ch) => {
                let mut m = Mat::<f64>::zeros(n, 1);
                for (i, &v) in r.iter().enumerate() {
                    m[(i, 0)] = v;
                }
                let s = ch.solve(&m);
                (0..n).map(|i| s[(i, 0)]).collect()
            }
            SpdSolve::Pinv { vecs, inv_vals } => {
                let mut proj = vec![0.0; n];
                for j in 0..n {
                    let mut d = 0.0;
                    for i in 0..n {
                        d += vecs[(i, j)] * r[i];
                    }
                    proj[j] = d * inv_vals[j];
                }
                let mut out = vec![0.0; n];
                for (i, o) in out.iter_mut().enumerate() {
                    let mut d = 0.0;
                    for j in 0..n {
                        d += vecs[(i, j)] * proj[j];
                    }
                    *o = d;
                }
                out
            }
        }
    }

    /// Dense matrix of the solve applied to the identity.
    fn to_dense_inverse(&self, n: usize) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = self.solve_vec(&e);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

enum PressureApply {
    Identity,
    SumOfInverses { blocks: Vec<SpdSolve> },
    Single { block: SpdSolve },
}

/// Assembled and factorised block-diagonal preconditioner for one Newton
/// state. Factorisations are immutable once built; `apply` is reentrant.
pub struct TangentPreconditioner {
    pub spec: PrecondSpec,
    n_u: usize,
    n_p: usize,
    velocity_riesz: Option<SparseOperator>,
    velocity: Option<SpdSolve>,
    pressure_ops: Vec<SparseOperator>,
    pressure: PressureApply,
}

impl TangentPreconditioner {
    /// Build the preconditioner at the linearisation state `(u_hat, p_hat)`.
    /// `free_u` selects the reduced velocity dofs.
    pub fn build(
        params: &ModelParams,
        v_space: &Arc<FeSpace>,
        q_space: &Arc<FeSpace>,
        u_hat: &FeFunction,
        p_hat: &FeFunction,
        spec: PrecondSpec,
        free_u: &[usize],
    ) -> Result<TangentPreconditioner> {
        let n_u = free_u.len();
        let n_p = q_space.n_dofs;
        match spec.variant {
            PrecondVariant::None => Ok(TangentPreconditioner {
                spec,
                n_u,
                n_p,
                velocity_riesz: None,
                velocity: None,
                pressure_ops: Vec::new(),
                pressure: PressureApply::Identity,
            }),
            PrecondVariant::IntersectionSum => {
                let r_u_full = assemble_a(params, v_space)?
                    .add(&assemble_newton_hessian(u_hat, params, v_space)?)
                    .add(&assemble_div_div(v_space)?);
                let r_u = r_u_full.submatrix(free_u, free_u);
                let velocity = SpdSolve::factor(&r_u)?;

                let mass = assemble_mass(q_space)?;
                let a_kappa = assemble_pressure_laplacian(&params.kappa, q_space)?;
                let mut ops = vec![mass, a_kappa];
                if params.forchheimer_f > 0.0 {
                    let a_s = assemble_pressure_slaplacian_weighted(
                        p_hat,
                        &hessian_inverse_weight(params, u_hat),
                        params.epsilon_reg,
                        q_space,
                    )?;
                    ops.push(a_s);
                }
                let pressure = match spec.pressure_mode {
                    PressureMode::SumOfInverses => {
                        let blocks = ops
                            .iter()
                            .map(SpdSolve::factor)
                            .collect::<Result<Vec<_>>>()?;
                        PressureApply::SumOfInverses { blocks }
                    }
                    PressureMode::CanonicalInverse => {
                        let mut sum = ops[0].clone();
                        for op in &ops[1..] {
                            sum = sum.add(op);
                        }
                        PressureApply::Single { block: SpdSolve::factor(&sum)? }
                    }
                };
                Ok(TangentPreconditioner {
                    spec,
                    n_u,
                    n_p,
                    velocity_riesz: Some(r_u),
                    velocity: Some(velocity),
                    pressure_ops: ops,
                    pressure,
                })
            }
            PrecondVariant::ScaledRiesz => {
                let w = scaled_weight(params, u_hat);
                let r_u_full = assemble_hdiv_riesz(&w, v_space, RieszMode::Scaled)?;
                let r_u = r_u_full.submatrix(free_u, free_u);
                let velocity = SpdSolve::factor(&r_u)?;
                let w_inv = scaled_weight(params, u_hat);
                let m_w = assemble_weighted_dg_mass(
                    &move |c, rp, x| 1.0 / w_inv(c, rp, x),
                    q_space,
                )?;
                let pressure = PressureApply::Single { block: SpdSolve::factor(&m_w)? };
                Ok(TangentPreconditioner {
                    spec,
                    n_u,
                    n_p,
                    velocity_riesz: Some(r_u),
                    velocity: Some(velocity),
                    pressure_ops: vec![m_w],
                    pressure,
                })
            }
        }
    }

    /// Apply the block-diagonal preconditioner to a residual pair.
    pub fn apply(&self, r_u: &[f64], r_p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(r_u.len(), self.n_u);
        debug_assert_eq!(r_p.len(), self.n_p);
        let zu = match &self.velocity {
            Some(s) => s.solve_vec(r_u),
            None => r_u.to_vec(),
        };
        let zp = match &self.pressure {
            PressureApply::Identity => r_p.to_vec(),
            PressureApply::Single { block } => block.solve_vec(r_p),
            PressureApply::SumOfInverses { blocks } => {
                let mut acc = vec![0.0; r_p.len()];
                for b in blocks {
                    let s = b.solve_vec(r_p);
                    for (a, v) in acc.iter_mut().zip(&s) {
                        *a += v;
                    }
                }
                acc
            }
        };
        (zu, zp)
    }

    /// Dense matrix of the preconditioner application (block diagonal).
    pub fn to_dense_apply(&self) -> Mat<f64> {
        let n = self.n_u + self.n_p;
        let mut out = Mat::<f64>::zeros(n, n);
        let pu = match &self.velocity {
            Some(s) => s.to_dense_inverse(self.n_u),
            None => Mat::from_fn(self.n_u, self.n_u, |i, j| if i == j { 1.0 } else { 0.0 }),
        };
        for i in 0..self.n_u {
            for j in 0..self.n_u {
                out[(i, j)] = pu[(i, j)];
            }
        }
        match &self.pressure {
            PressureApply::Identity => {
                for i in 0..self.n_p {
                    out[(self.n_u + i, self.n_u + i)] = 1.0;
                }
            }
            PressureApply::Single { block } => {
                let pp = block.to_dense_inverse(self.n_p);
                for i in 0..self.n_p {
                    for j in 0..self.n_p {
                        out[(self.n_u + i, self.n_u + j)] = pp[(i, j)];
                    }
                }
            }
            PressureApply::SumOfInverses { blocks } => {
                for b in blocks {
                    let pp = b.to_dense_inverse(self.n_p);
                    for i in 0..self.n_p {
                        for j in 0..self.n_p {
                            out[(self.n_u + i, self.n_u + j)] += pp[(i, j)];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn velocity_block(&self) -> Option<&SparseOperator> {
        self.velocity_riesz.as_ref()
    }

    pub fn pressure_operators(&self) -> &[SparseOperator] {
        &self.pressure_ops
    }
}

/// Pointwise scalar `kappa^{-1} + F |u|^{r-2}` (tensor kappa reduced through
/// its smallest eigenvalue).
pub fn scaled_weight<'a>(
    params: &'a ModelParams,
    u_hat: &'a FeFunction,
) -> impl Fn(usize, [f64; 2], [f64; 2]) -> f64 + 'a {
    move |c, rp, x| {
        let u = u_hat.eval_vector(c, rp);
        let mag = (u[0] * u[0] + u[1] * u[1]).sqrt().max(params.epsilon_reg);
        params.kappa.inv_scalar(x) + params.forchheimer_f * mag.powf(params.r - 2.0)
    }
}

/// Inverse of the scalar Hessian surrogate `F |u|^{r-2}`, used as the weight
/// of the pressure-side 3/2-Laplacian.
pub fn hessian_inverse_weight<'a>(
    params: &'a ModelParams,
    u_hat: &'a FeFunction,
) -> impl Fn(usize, [f64; 2], [f64; 2]) -> f64 + 'a {
    move |c, rp, _x| {
        let u = u_hat.eval_vector(c, rp);
        let mag = (u[0] * u[0] + u[1] * u[1]).sqrt().max(params.epsilon_reg);
        1.0 / (params.forchheimer_f * mag.powf(params.r - 2.0)).max(1e-300)
    }
}

/// Sparse direct solve of the full saddle system, with a couple of
/// iterative-refinement sweeps to hold the algebraic residual down under
/// extreme block scalings.
pub fn solve_direct(sys: &BlockSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = sys.dim();
    let saddle = sys.saddle_operator();
    let lu = saddle
        .to_faer()
        .sp_lu()
        .map_err(|e| Error::Singular(format!("saddle LU: {e:?}")))?;
    let rhs = sys.rhs();
    let mut b = Mat::<f64>::zeros(n, 1);
    for (i, &v) in rhs.iter().enumerate() {
        b[(i, 0)] = v;
    }
    let sol = lu.solve(&b);
    let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    for _ in 0..2 {
        let mut ax = vec![0.0; n];
        sys.apply(&x, &mut ax);
        let mut res_norm = 0.0f64;
        let mut r = Mat::<f64>::zeros(n, 1);
        for i in 0..n {
            let ri = rhs[i] - ax[i];
            r[(i, 0)] = ri;
            res_norm = res_norm.max(ri.abs());
        }
        if res_norm == 0.0 {
            break;
        }
        let corr = lu.solve(&r);
        for i in 0..n {
            x[i] += corr[(i, 0)];
        }
    }
    let u: Vec<f64> = x[..sys.n_u()].to_vec();
    let p: Vec<f64> = x[sys.n_u()..].to_vec();
    let rel = sys.relative_residual(&u, &p);
    if !rel.is_finite() || rel > 1e-6 {
        return Err(Error::Singular(format!("direct solve residual {rel:.3e}")));
    }
    Ok((u, p))
}

/// Preconditioned MINRES for the symmetric indefinite saddle system with an
/// SPD block-diagonal preconditioner.
pub fn minres_solve(
    sys: &BlockSystem,
    precond: &TangentPreconditioner,
    tol: f64,
    maxit: usize,
) -> Result<((Vec<f64>, Vec<f64>), KrylovReport)> {
    let n = sys.dim();
    let nu = sys.n_u();
    let apply_p = |r: &[f64]| -> Vec<f64> {
        let (zu, zp) = precond.apply(&r[..nu], &r[nu..]);
        let mut z = zu;
        z.extend_from_slice(&zp);
        z
    };

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };

    // Lanczos pairs (v, z = P v), normalized so that v' z = 1.
    let mut x = vec![0.0; n];
    let mut v = sys.rhs();
    let mut z = apply_p(&v);
    let g2 = dot(&z, &v);
    if g2 < 0.0 {
        return Err(Error::Singular("preconditioner is not positive definite".into()));
    }
    let gamma0 = g2.sqrt();
    if gamma0 == 0.0 {
        return Ok((
            (vec![0.0; nu], vec![0.0; sys.n_p()]),
            KrylovReport { iterations: 0, relative_residual: 0.0, breakdown: false },
        ));
    }
    for t in v.iter_mut() {
        *t /= gamma0;
    }
    for t in z.iter_mut() {
        *t /= gamma0;
    }
    let mut v_old = vec![0.0; n];
    let mut beta = 0.0f64; // gamma_j entering the three-term recurrence
    let mut eta = gamma0;
    let (mut s_old, mut s_cur) = (0.0f64, 0.0f64);
    let (mut c_old, mut c_cur) = (1.0f64, 1.0f64);
    let mut w_old = vec![0.0; n];
    let mut w_cur = vec![0.0; n];
    let mut iterations = 0;
    let mut breakdown = false;

    for it in 1..=maxit {
        iterations = it;
        let mut az = vec![0.0; n];
        sys.apply(&z, &mut az);
        let alpha = dot(&z, &az);
        let mut v_next = az;
        for i in 0..n {
            v_next[i] -= alpha * v[i] + beta * v_old[i];
        }
        let mut z_next = apply_p(&v_next);
        let g2 = dot(&z_next, &v_next);
        if g2 < -1e-14 {
            breakdown = true;
            break;
        }
        let beta_next = g2.max(0.0).sqrt();
        if beta_next > 0.0 {
            for t in v_next.iter_mut() {
                *t /= beta_next;
            }
            for t in z_next.iter_mut() {
                *t /= beta_next;
            }
        }

        let alpha0 = c_cur * alpha - c_old * s_cur * beta;
        let alpha1 = (alpha0 * alpha0 + beta_next * beta_next).sqrt();
        let alpha2 = s_cur * alpha + c_old * c_cur * beta;
        let alpha3 = s_old * beta;
        if alpha1 == 0.0 {
            breakdown = true;
            break;
        }
        let c_next = alpha0 / alpha1;
        let s_next = beta_next / alpha1;
        let mut w_next = vec![0.0; n];
        for i in 0..n {
            w_next[i] = (z[i] - alpha3 * w_old[i] - alpha2 * w_cur[i]) / alpha1;
        }
        for i in 0..n {
            x[i] += c_next * eta * w_next[i];
        }
        eta = -s_next * eta;

        v_old = v;
        v = v_next;
        z = z_next;
        beta = beta_next;
        s_old = s_cur;
        s_cur = s_next;
        c_old = c_cur;
        c_cur = c_next;
        w_old = w_cur;
        w_cur = w_next;

        if (eta.abs() / gamma0) <= tol || beta_next == 0.0 {
            break;
        }
    }

    let u: Vec<f64> = x[..nu].to_vec();
    let p: Vec<f64> = x[nu..].to_vec();
    let rel = eta.abs() / gamma0;
    Ok((
        (u, p),
        KrylovReport { iterations, relative_residual: rel, breakdown },
    ))
}

/// Condition number `|lambda|_max / |lambda|_min` of the preconditioned
/// saddle matrix, through the symmetric-definite pencil: with the SPD
/// preconditioner application `P = L L^T`, the spectrum of `P A` equals that
/// of `L^T A L`.
pub fn estimate_condition_number(
    sys: &BlockSystem,
    precond: &TangentPreconditioner,
) -> Result<f64> {
    let n = sys.dim();
    if n > 20_000 {
        return Err(Error::invalid(
            "dense condition-number estimation limited to 20000 dofs",
        ));
    }
    let a = sys.saddle_operator().to_dense();
    let evals: Vec<f64> = if matches!(precond.spec.variant, PrecondVariant::None) {
        let evd = a
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        (0..n).map(|i| s[i]).collect()
    } else {
        let p = precond.to_dense_apply();
        let llt = p.llt(faer::Side::Lower).map_err(|e| {
            Error::Eigen(format!("preconditioner application not SPD: {e:?}"))
        })?;
        let l = llt.L().to_owned();
        // B = L^T A L
        let al = &a * &l;
        let b = l.transpose() * &al;
        let evd = b
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        (0..n).map(|i| s[i]).collect()
    };
    let max = evals.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min = evals.iter().fold(f64::INFINITY, |m, &v| m.min(v.abs()));
    if min == 0.0 || !min.is_finite() {
        return Err(Error::Eigen("singular preconditioned matrix".into()));
    }
    Ok(max / min)
}

/// Eigenvalues of the preconditioned saddle matrix (for spectrum dumps).
pub fn preconditioned_spectrum(
    sys: &BlockSystem,
    precond: &TangentPreconditioner,
) -> Result<Vec<f64>> {
    let n = sys.dim();
    let a = sys.saddle_operator().to_dense();
    let evals = if matches!(precond.spec.variant, PrecondVariant::None) {
        let evd = a
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        (0..n).map(|i| s[i]).collect()
    } else {
        let p = precond.to_dense_apply();
        let llt = p
            .llt(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("not SPD: {e:?}")))?;
        let l = llt.L().to_owned();
        let al = &a * &l;
        let b = l.transpose() * &al;
        let evd = b
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let s = evd.S();
        (0..n).map(|i| s[i]).collect()
    };
    Ok(evals)
}

/// Orthonormal basis of the kernel of `B` via dense SVD (desk scale).
pub fn kernel_basis(b: &SparseOperator) -> Result<Vec<Vec<f64>>> {
    let (m, n) = (b.nrows, b.ncols);
    if n > 4000 {
        return Err(Error::invalid("dense kernel extraction limited to 4000 columns"));
    }
    let dense = b.to_dense();
    let svd = dense.svd().map_err(|e| Error::Eigen(format!("SVD failed: {e:?}")))?;
    let s = svd.S();
    let v = svd.V();
    let rank_dim = m.min(n);
    let smax = (0..rank_dim).map(|i| s[i]).fold(0.0f64, f64::max);
    let tol = 1e-10 * smax.max(1e-300);
    let mut basis = Vec::new();
    for j in 0..n {
        let sv = if j < rank_dim { s[j] } else { 0.0 };
        if sv <= tol {
            basis.push((0..n).map(|i| v[(i, j)]).collect());
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{assemble_b, TripletBuilder};
    use crate::mesh::{structured_rectangle, BoundaryRule, Mesh, Rect, SplitPattern};

    fn unit_mesh(n: usize) -> Arc<Mesh> {
        Arc::new(
            structured_rectangle(
                n,
                n,
                Rect::unit_square(),
                SplitPattern::Diagonal,
                BoundaryRule::flux_left_bottom(),
            )
            .unwrap(),
        )
    }

    fn small_saddle(nu: usize, np: usize, seed: usize) -> BlockSystem {
        // SPD A = diag-dominant random symmetric; B random full rank.
        let mut a = TripletBuilder::new(nu, nu);
        for i in 0..nu {
            for j in 0..=i {
                let v = (((i * 31 + j * 17 + seed) % 19) as f64 / 19.0 - 0.5) * 0.2;
                if i == j {
                    a.push(i, i, 3.0 + v);
                } else {
                    a.push(i, j, v);
                    a.push(j, i, v);
                }
            }
        }
        let mut b = TripletBuilder::new(np, nu);
        for i in 0..np {
            for j in 0..nu {
                let v = ((i * 13 + j * 7 + seed) % 23) as f64 / 23.0 - 0.4;
                b.push(i, j, v);
            }
        }
        let rhs_u = (0..nu).map(|i| ((i + seed) % 11) as f64 / 11.0 - 0.3).collect();
        let rhs_p = (0..np).map(|i| ((i * 3 + seed) % 7) as f64 / 7.0 - 0.2).collect();
        BlockSystem { a: a.finish(true), b: b.finish(false), rhs_u, rhs_p, lifting: None }
    }

    #[test]
    fn direct_solve_identity_block() {
        let n = 6;
        let sys = BlockSystem {
            a: SparseOperator::identity(n),
            b: SparseOperator::zeros(0, n),
            rhs_u: (0..n).map(|i| i as f64).collect(),
            rhs_p: vec![],
            lifting: None,
        };
        let (u, p) = solve_direct(&sys).unwrap();
        assert!(p.is_empty());
        for (i, v) in u.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn direct_solve_matches_dense_oracle() {
        let sys = small_saddle(17, 6, 3);
        let (u, p) = solve_direct(&sys).unwrap();
        // Dense oracle through faer's dense LU.
        let n = sys.dim();
        let dense = sys.saddle_operator().to_dense();
        let lu = dense.partial_piv_lu();
        let mut b = Mat::<f64>::zeros(n, 1);
        for (i, &v) in sys.rhs().iter().enumerate() {
            b[(i, 0)] = v;
        }
        let x = lu.solve(&b);
        for i in 0..sys.n_u() {
            assert!((u[i] - x[(i, 0)]).abs() < 1e-10);
        }
        for i in 0..sys.n_p() {
            assert!((p[i] - x[(sys.n_u() + i, 0)]).abs() < 1e-10);
        }
        assert!(sys.relative_residual(&u, &p) < 1e-10);
    }

    #[test]
    fn preconditioner_none_is_identity() {
        let mesh = unit_mesh(2);
        let v = FeSpace::raviart_thomas(mesh.clone(), 0).unwrap();
        let q = FeSpace::discontinuous_lagrange(mesh, 0).unwrap();
        let params = ModelParams::unit();
        let u0 = FeFunction::zero(v.clone());
        let p0 = FeFunction::zero(q.clone());
        let free = v.free_dofs();
        let pc = TangentPreconditioner::build(
            &params,
            &v,
            &q,
            &u0,
            &p0,
            PrecondSpec::none(),
            &free,
        )
        .unwrap();
        let ru: Vec<f64> = (0..free.len()).map(|i| i as f64 * 0.1).collect();
        let rp: Vec<f64> = (0..q.n_dofs).map(|i| 1.0 - i as f64 * 0.05).collect();
        let (zu, zp) = pc.apply(&ru, &rp);
        assert_eq!(zu, ru);
        assert_eq!(zp, rp);
    }

    #[test]
    fn preconditioner_application_is_spd() {
        let mesh = unit_mesh(2);
        let v = FeSpace::raviart_thomas(mesh.clone(), 0).unwrap();
        let q = FeSpace::discontinuous_lagrange(mesh, 0).unwrap();
        let params = ModelParams::constant(1e-4, 10.0, 3.0);
        let u_hat =
            crate::fespace::interpolate_rt(&|x| [0.3 + x[1], 0.2 - x[0]], &v).unwrap();
        let p_hat = crate::fespace::project_l2(&|x| x[0] * x[1], &q).unwrap();
        let free = v.free_dofs();
        for spec in [
            PrecondSpec::intersection(),
            PrecondSpec {
                variant: PrecondVariant::IntersectionSum,
                pressure_mode: PressureMode::CanonicalInverse,
            },
            PrecondSpec::scaled(),
        ] {
            let pc = TangentPreconditioner::build(
                &params, &v, &q, &u_hat, &p_hat, spec, &free,
            )
            .unwrap();
            for trial in 0..100 {
                let ru: Vec<f64> = (0..free.len())
                    .map(|i| (((i * 29 + trial * 13) % 41) as f64 / 41.0) - 0.5)
                    .collect();
                let rp: Vec<f64> = (0..q.n_dofs)
                    .map(|i| (((i * 7 + trial * 3) % 31) as f64 / 31.0) - 0.5)
                    .collect();
                let (zu, zp) = pc.apply(&ru, &rp);
                let mut inner = 0.0;
                for (a, b) in ru.iter().zip(&zu) {
                    inner += a * b;
                }
                for (a, b) in rp.iter().zip(&zp) {
                    inner += a * b;
                }
                let nonzero = ru.iter().chain(&rp).any(|&t| t != 0.0);
                if nonzero {
                    assert!(inner > 0.0, "trial {trial}: <Pr, r> = {inner}");
                }
                // Symmetry check: <P r, s> = <r, P s> for a shifted vector.
                let su: Vec<f64> = ru.iter().rev().cloned().collect();
                let sp: Vec<f64> = rp.iter().rev().cloned().collect();
                let (zsu, zsp) = pc.apply(&su, &sp);
                let mut lhs = 0.0;
                let mut rhs = 0.0;
                for i in 0..ru.len() {
                    lhs += zu[i] * su[i];
                    rhs += ru[i] * zsu[i];
                }
                for i in 0..rp.len() {
                    lhs += zp[i] * sp[i];
                    rhs += rp[i] * zsp[i];
                }
                assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            }
        }
    }

    #[test]
    fn velocity_block_application_matches_dense_inverse() {
        let mesh = unit_mesh(1);
        let v = FeSpace::raviart_thomas(mesh.clone(), 0).unwrap();
        let q = FeSpace::discontinuous_lagrange(mesh, 0).unwrap();
        let params = ModelParams::constant(1.0, 0.0, 3.0);
        let u0 = FeFunction::zero(v.clone());
        let p0 = FeFunction::zero(q.clone());
        let free = v.free_dofs();
        let pc = TangentPreconditioner::build(
            &params,
            &v,
            &q,
            &u0,
            &p0,
            PrecondSpec::intersection(),
            &free,
        )
        .unwrap();
        let r_u = pc.velocity_block().unwrap().to_dense();
        let lu = r_u.partial_piv_lu();
        let ru: Vec<f64> = (0..free.len()).map(|i| 0.3 + i as f64).collect();
        let rp = vec![0.0; q.n_dofs];
        let (zu, _) = pc.apply(&ru, &rp);
        let mut b = Mat::<f64>::zeros(free.len(), 1);
        for (i, &t) in ru.iter().enumerate() {
            b[(i, 0)] = t;
        }
        let x = lu.solve(&b);
        for i in 0..free.len() {
            assert!((zu[i] - x[(i, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn minres_with_exact_inverse_preconditioner() {
        // When P = A^{-1} exactly, MINRES converges in O(1) iterations.
        let nu = 12;
        let sys = BlockSystem {
            a: SparseOperator::identity(nu).scale(2.0),
            b: SparseOperator::zeros(0, nu),
            rhs_u: (0..nu).map(|i| (i % 5) as f64 - 1.0).collect(),
            rhs_p: vec![],
            lifting: None,
        };
        // Identity preconditioner on an SPD diagonal system: MINRES solves a
        // 1-cluster spectrum in a single iteration.
        let pc = TangentPreconditioner {
            spec: PrecondSpec::none(),
            n_u: nu,
            n_p: 0,
            velocity_riesz: None,
            velocity: None,
            pressure_ops: vec![],
            pressure: PressureApply::Identity,
        };
        let ((u, _), rep) = minres_solve(&sys, &pc, 1e-12, 50).unwrap();
        assert!(rep.iterations <= 2, "iterations {}", rep.iterations);
        for (i, v) in u.iter().enumerate() {
            let expect = ((i % 5) as f64 - 1.0) / 2.0;
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn minres_matches_direct_on_saddle() {
        let sys = small_saddle(20, 7, 5);
        let pc = TangentPreconditioner {
            spec: PrecondSpec::none(),
            n_u: 20,
            n_p: 7,
            velocity_riesz: None,
            velocity: None,
            pressure_ops: vec![],
            pressure: PressureApply::Identity,
        };
        let ((u, p), rep) = minres_solve(&sys, &pc, 1e-12, 500).unwrap();
        assert!(!rep.breakdown);
        assert!(rep.relative_residual <= 1e-10, "residual {}", rep.relative_residual);
        let (ud, pd) = solve_direct(&sys).unwrap();
        for i in 0..20 {
            assert!((u[i] - ud[i]).abs() < 1e-8);
        }
        for i in 0..7 {
            assert!((p[i] - pd[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn condition_number_of_exactly_preconditioned_system() {
        // A is SPD; the preconditioner that applies A^{-1} gives cond 1.
        let mesh = unit_mesh(2);
        let v = FeSpace::raviart_thomas(mesh, 0).unwrap();
        let params = ModelParams::constant(1.0, 0.0, 3.0);
        let free = v.free_dofs();
        let r_u = assemble_a(&params, &v)
            .unwrap()
            .add(&assemble_newton_hessian(&FeFunction::zero(v.clone()), &params, &v).unwrap())
            .add(&assemble_div_div(&v).unwrap())
            .submatrix(&free, &free);
        let sys = BlockSystem {
            a: r_u.clone(),
            b: SparseOperator::zeros(0, free.len()),
            rhs_u: vec![0.0; free.len()],
            rhs_p: vec![],
            lifting: None,
        };
        let pc = TangentPreconditioner {
            spec: PrecondSpec::intersection(),
            n_u: free.len(),
            n_p: 0,
            velocity_riesz: Some(r_u.clone()),
            velocity: Some(SpdSolve::factor(&r_u).unwrap()),
            pressure_ops: vec![],
            pressure: PressureApply::SumOfInverses { blocks: vec![] },
        };
        let cond = estimate_condition_number(&sys, &pc).unwrap();
        assert!((cond - 1.0).abs() < 1e-8, "cond {cond}");
    }

    #[test]
    fn kernel_basis_dimensions_and_divergence() {
        let mesh = unit_mesh(2);
        let v = FeSpace::raviart_thomas(mesh.clone(), 0).unwrap();
        let q = FeSpace::discontinuous_lagrange(mesh.clone(), 0).unwrap();
        let free = v.free_dofs();
        let b = assemble_b(&v, &q).unwrap().submatrix(&(0..q.n_dofs).collect::<Vec<_>>(), &free);
        let basis = kernel_basis(&b).unwrap();
        // Rank-nullity: B is onto (pressure dofs independent), so
        // dim null = n_u_free - n_p.
        assert_eq!(basis.len(), free.len() - q.n_dofs);
        for vec_k in &basis {
            let mut bv = vec![0.0; q.n_dofs];
            b.matvec(vec_k, &mut bv);
            let norm: f64 = bv.iter().map(|t| t * t).sum::<f64>().sqrt();
            assert!(norm <= 1e-10);
            // Pointwise divergence check through the finite element function.
            let mut coeffs = vec![0.0; v.n_dofs];
            for (i, &g) in free.iter().enumerate() {
                coeffs[g] = vec_k[i];
            }
            let f = FeFunction::from_coeffs(v.clone(), coeffs).unwrap();
            for c in 0..mesh.n_cells() {
                let d = f.eval_div(c, [0.25, 0.25]).unwrap();
                assert!(d.abs() < 1e-10, "cell {c}: div {d}");
            }
        }
        // The weighted tangent block is SPD on the kernel.
        let params = ModelParams::constant(0.5, 2.0, 3.0);
        let u_hat = crate::fespace::interpolate_rt(&|x| [x[1], -x[0]], &v).unwrap();
        let a_t = assemble_a(&params, &v)
            .unwrap()
            .add(&assemble_newton_hessian(&u_hat, &params, &v).unwrap())
            .submatrix(&free, &free)
            .to_dense();
        for vec_k in &basis {
            let mut quad = 0.0;
            for i in 0..free.len() {
                for j in 0..free.len() {
                    quad += vec_k[i] * a_t[(i, j)] * vec_k[j];
                }
            }
            assert!(quad > 0.0, "tangent not positive on kernel: {quad}");
        }
    }
}
