//! Assembly of all discrete operators and functionals of the mixed method:
//! the weighted Darcy mass `a`, the divergence coupling `b`, the Forchheimer
//! residual `c` and its Newton Hessian, load vectors, H(div) Riesz blocks,
//! facet-penalised weighted pressure Laplacians, the linearised 3/2-Laplacian
//! and mass matrices.
//!
//! Assembly loops run sequentially in deterministic cell/facet order;
//! duplicate triplets are merged in sorted order so repeated runs produce
//! bit-identical operators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{dg_basis_eval, dg_basis_grad, dg_local_dim, FeFunction, FeSpace, SpaceKind};
use crate::mesh::BoundaryTag;
use crate::quadrature::{edge_rule, triangle_rule, TriangleRule};

/// Hydraulic conductivity: constant, scalar field, or SPD tensor field.
pub enum Kappa {
    Constant(f64),
    Scalar(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
    Tensor(Arc<dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Send + Sync>),
}

impl Clone for Kappa {
    fn clone(&self) -> Self {
        match self {
            Kappa::Constant(c) => Kappa::Constant(*c),
            Kappa::Scalar(f) => Kappa::Scalar(f.clone()),
            Kappa::Tensor(f) => Kappa::Tensor(f.clone()),
        }
    }
}

impl Kappa {
    /// `v . kappa(x)^{-1} w` , checking positive definiteness.
    pub fn inv_pairing(&self, x: [f64; 2], v: [f64; 2], w: [f64; 2]) -> Result<f64> {
        match self {
            Kappa::Constant(c) => {
                if *c <= 0.0 {
                    return Err(Error::invalid("kappa must be positive"));
                }
                Ok((v[0] * w[0] + v[1] * w[1]) / c)
            }
            Kappa::Scalar(f) => {
                let c = f(x);
                if c <= 0.0 {
                    return Err(Error::invalid(format!("kappa({x:?}) = {c} not positive")));
                }
                Ok((v[0] * w[0] + v[1] * w[1]) / c)
            }
            Kappa::Tensor(f) => {
                let k = f(x);
                let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
                let asym = (k[0][1] - k[1][0]).abs();
                if det <= 0.0 || k[0][0] <= 0.0 || asym > 1e-12 * (det.abs() + 1.0) {
                    return Err(Error::invalid(format!("kappa({x:?}) not SPD")));
                }
                // kappa^{-1} w
                let iw = [
                    (k[1][1] * w[0] - k[0][1] * w[1]) / det,
                    (-k[1][0] * w[0] + k[0][0] * w[1]) / det,
                ];
                Ok(v[0] * iw[0] + v[1] * iw[1])
            }
        }
    }

    /// `g . kappa(x) h` (used by the weighted pressure Laplacian).
    pub fn pairing(&self, x: [f64; 2], g: [f64; 2], h: [f64; 2]) -> f64 {
        match self {
            Kappa::Constant(c) => c * (g[0] * h[0] + g[1] * h[1]),
            Kappa::Scalar(f) => f(x) * (g[0] * h[0] + g[1] * h[1]),
            Kappa::Tensor(f) => {
                let k = f(x);
                g[0] * (k[0][0] * h[0] + k[0][1] * h[1]) + g[1] * (k[1][0] * h[0] + k[1][1] * h[1])
            }
        }
    }

    /// Scalar facet weight: `n . kappa n` for the penalty terms.
    pub fn normal_weight(&self, x: [f64; 2], n: [f64; 2]) -> f64 {
        self.pairing(x, n, n)
    }

    /// Largest eigenvalue of `kappa(x)^{-1}` (scalar reduction used by the
    /// scaled Riesz map: tensors reduce via their smallest eigenvalue).
    pub fn inv_scalar(&self, x: [f64; 2]) -> f64 {
        match self {
            Kappa::Constant(c) => 1.0 / c,
            Kappa::Scalar(f) => 1.0 / f(x),
            Kappa::Tensor(f) => {
                let k = f(x);
                let mean = 0.5 * (k[0][0] + k[1][1]);
                let rad = (0.25 * (k[0][0] - k[1][1]).powi(2) + k[0][1] * k[1][0]).sqrt();
                1.0 / (mean - rad)
            }
        }
    }
}

/// Model parameters of the Darcy-Forchheimer system.
#[derive(Clone)]
pub struct ModelParams {
    pub kappa: Kappa,
    /// Forchheimer coefficient F >= 0.
    pub forchheimer_f: f64,
    /// Forchheimer index r >= 2.
    pub r: f64,
    /// Clamp for |u| inside Hessian weights (singular for r < 4).
    pub epsilon_reg: f64,
}

impl ModelParams {
    pub fn new(kappa: Kappa, forchheimer_f: f64, r: f64) -> Result<ModelParams> {
        if forchheimer_f < 0.0 {
            return Err(Error::invalid("Forchheimer coefficient must be nonnegative"));
        }
        if r < 2.0 {
            return Err(Error::invalid("Forchheimer index must be at least 2"));
        }
        Ok(ModelParams { kappa, forchheimer_f, r, epsilon_reg: 1e-10 })
    }

    pub fn unit() -> ModelParams {
        ModelParams { kappa: Kappa::Constant(1.0), forchheimer_f: 1.0, r: 3.5, epsilon_reg: 1e-10 }
    }

    pub fn constant(kappa: f64, forchheimer_f: f64, r: f64) -> ModelParams {
        ModelParams { kappa: Kappa::Constant(kappa), forchheimer_f, r, epsilon_reg: 1e-10 }
    }
}

/// Sparse matrix in merged triplet form. Deterministic construction,
/// desk-scale operations; factorisations convert to compressed column form.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub nrows: usize,
    pub ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub symmetric: bool,
}

/// Triplet accumulator for assembly.
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn finish(mut self, symmetric: bool) -> SparseOperator {
        self.entries.sort_by_key(|&(i, j, _)| (j, i));
        let mut rows = Vec::with_capacity(self.entries.len());
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals = Vec::with_capacity(self.entries.len());
        for (i, j, v) in self.entries {
            if let (Some(&li), Some(&lj)) = (rows.last(), cols.last()) {
                if li == i && lj == j {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(i);
            cols.push(j);
            vals.push(v);
        }
        SparseOperator { nrows: self.nrows, ncols: self.ncols, rows, cols, vals, symmetric }
    }
}

impl SparseOperator {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).finish(false)
    }

    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.finish(true)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.vals.len()).map(|k| (self.rows[k], self.cols[k], self.vals[k]))
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        y.fill(0.0);
        for k in 0..self.vals.len() {
            y[self.rows[k]] += self.vals[k] * x[self.cols[k]];
        }
    }

    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(0.0);
        for k in 0..self.vals.len() {
            y[self.cols[k]] += self.vals[k] * x[self.rows[k]];
        }
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut b = TripletBuilder::new(self.ncols, self.nrows);
        for (i, j, v) in self.triplets() {
            b.push(j, i, v);
        }
        b.finish(self.symmetric)
    }

    pub fn add(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::new(self.nrows, self.ncols);
        for (i, j, v) in self.triplets().chain(other.triplets()) {
            b.push(i, j, v);
        }
        b.finish(self.symmetric && other.symmetric)
    }

    pub fn scale(&self, s: f64) -> SparseOperator {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= s;
        }
        out
    }

    /// Extract the submatrix of the given (sorted) row and column id lists.
    pub fn submatrix(&self, keep_rows: &[usize], keep_cols: &[usize]) -> SparseOperator {
        let mut rmap = vec![usize::MAX; self.nrows];
        for (new, &old) in keep_rows.iter().enumerate() {
            rmap[old] = new;
        }
        let mut cmap = vec![usize::MAX; self.ncols];
        for (new, &old) in keep_cols.iter().enumerate() {
            cmap[old] = new;
        }
        let mut b = TripletBuilder::new(keep_rows.len(), keep_cols.len());
        for (i, j, v) in self.triplets() {
            if rmap[i] != usize::MAX && cmap[j] != usize::MAX {
                b.push(rmap[i], cmap[j], v);
            }
        }
        b.finish(self.symmetric)
    }

    pub fn to_faer(&self) -> faer::sparse::SparseColMat<usize, f64> {
        let trips: Vec<faer::sparse::Triplet<usize, usize, f64>> = self
            .triplets()
            .map(|(i, j, v)| faer::sparse::Triplet::new(i, j, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("valid triplets")
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest absolute deviation from symmetry.
    pub fn max_asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut d = self.add(&t.scale(-1.0));
        let mut max = 0.0f64;
        for v in d.vals.drain(..) {
            max = max.max(v.abs());
        }
        max
    }

    /// Write in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, path: &std::path::Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Scalar coefficient field evaluated per (cell, reference point, physical
/// point); lets weights depend on finite element states.
pub type CellField<'a> = dyn Fn(usize, [f64; 2], [f64; 2]) -> f64 + 'a;

/// Essential-boundary bookkeeping for a reduced velocity space: the free dof
/// ids and the prescribed values on the constrained ones.
#[derive(Clone, Debug)]
pub struct Lifting {
    pub free_u: Vec<usize>,
    pub n_u_full: usize,
    /// Full-length vector carrying the boundary values (zero on free dofs).
    pub boundary: Vec<f64>,
}

impl Lifting {
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_u.iter().map(|&i| full[i]).collect()
    }

    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = self.boundary.clone();
        for (i, &g) in self.free_u.iter().enumerate() {
            full[g] = reduced[i];
        }
        full
    }
}

/// Reduced saddle-point tangent system
/// `[[A, B^T], [B, 0]] [du, dp] = [rhs_u, rhs_p]`.
#[derive(Clone)]
pub struct BlockSystem {
    pub a: SparseOperator,
    pub b: SparseOperator,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    pub lifting: Option<Lifting>,
}

impl BlockSystem {
    pub fn n_u(&self) -> usize {
        self.a.nrows
    }

    pub fn n_p(&self) -> usize {
        self.b.nrows
    }

    pub fn dim(&self) -> usize {
        self.n_u() + self.n_p()
    }

    /// Saddle-point operator application.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (nu, np) = (self.n_u(), self.n_p());
        debug_assert_eq!(x.len(), nu + np);
        debug_assert_eq!(y.len(), nu + np);
        let mut tmp = vec![0.0; nu];
        self.a.matvec(&x[..nu], &mut tmp);
        let mut bt = vec![0.0; nu];
        self.b.matvec_transpose(&x[nu..], &mut bt);
        for i in 0..nu {
            y[i] = tmp[i] + bt[i];
        }
        let mut bp = vec![0.0; np];
        self.b.matvec(&x[..nu], &mut bp);
        y[nu..].copy_from_slice(&bp);
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.dim());
        r.extend_from_slice(&self.rhs_u);
        r.extend_from_slice(&self.rhs_p);
        r
    }

    /// Full saddle matrix as a sparse operator.
    pub fn saddle_operator(&self) -> SparseOperator {
        let (nu, np) = (self.n_u(), self.n_p());
        let mut t = TripletBuilder::new(nu + np, nu + np);
        for (i, j, v) in self.a.triplets() {
            t.push(i, j, v);
        }
        for (i, j, v) in self.b.triplets() {
            t.push(nu + i, j, v);
            t.push(j, nu + i, v);
        }
        t.finish(true)
    }

    /// Relative residual of a candidate solution.
    pub fn relative_residual(&self, u: &[f64], p: &[f64]) -> f64 {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(u);
        x.extend_from_slice(p);
        let mut y = vec![0.0; self.dim()];
        self.apply(&x, &mut y);
        let rhs = self.rhs();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.dim() {
            num += (y[i] - rhs[i]).powi(2);
            den += rhs[i].powi(2);
        }
        (num / den.max(1e-300)).sqrt()
    }
}

fn check_rt(space: &FeSpace, what: &str) -> Result<()> {
    if space.kind != SpaceKind::RaviartThomas {
        return Err(Error::invalid(format!("{what} requires an RT space")));
    }
    Ok(())
}

fn check_dg(space: &FeSpace, what: &str) -> Result<()> {
    if space.kind != SpaceKind::DiscontinuousLagrange {
        return Err(Error::invalid(format!("{what} requires a DG space")));
    }
    Ok(())
}

/// Tabulated RT basis data at the points of a triangle rule.
struct RtTab {
    /// values[p][l] - reference basis value at point p.
    values: Vec<Vec<[f64; 2]>>,
    /// divs[p][l] - reference divergence at point p.
    divs: Vec<Vec<f64>>,
}

fn tabulate_rt(space: &FeSpace, rule: &TriangleRule) -> RtTab {
    let mut values = Vec::with_capacity(rule.points.len());
    let mut divs = Vec::with_capacity(rule.points.len());
    for &p in &rule.points {
        let mut v = Vec::new();
        space.rt_basis(p, &mut v);
        let mut d = Vec::new();
        space.rt_basis_div(p, &mut d);
        values.push(v);
        divs.push(d);
    }
    RtTab { values, divs }
}

fn quad_degree_bilinear(k: usize) -> usize {
    2 * k + 2
}

fn quad_degree_nonlinear(k: usize) -> usize {
    2 * k + 4
}

/// Weighted velocity mass matrix `(kappa^{-1} u, v)`; SPD for SPD kappa.
pub fn assemble_a(params: &ModelParams, space: &Arc<FeSpace>) -> Result<SparseOperator> {
    check_rt(space, "assemble_a")?;
    let k = space.degree;
    let variable = !matches!(params.kappa, Kappa::Constant(_));
    let deg = if variable { quad_degree_nonlinear(k) } else { quad_degree_bilinear(k) };
    let rule = triangle_rule(deg)?;
    let tab = tabulate_rt(space, &rule);
    let mesh = &space.mesh;
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs, space.n_dofs);
    let mut dofs = Vec::with_capacity(nl);
    let mut phys = vec![[0.0f64; 2]; nl];
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        space.cell_dofs(c, &mut dofs);
        let mut local = vec![0.0; nl * nl];
        for (pi, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let x = map.to_physical(p);
            for l in 0..nl {
                phys[l] = map.piola(tab.values[pi][l]);
            }
            for i in 0..nl {
                for j in 0..=i {
                    let val = params
                        .kappa
                        .inv_pairing(x, phys[i], phys[j])
                        .map_err(|e| Error::Assembly { cell: c, msg: e.to_string() })?;
                    local[i * nl + j] += w * map.det * val;
                }
            }
        }
        for i in 0..nl {
            for j in 0..=i {
                let v = local[i * nl + j];
                let (gi, si) = dofs[i];
                let (gj, sj) = dofs[j];
                b.push(gi, gj, si * sj * v);
                if i != j {
                    b.push(gj, gi, si * sj * v);
                }
            }
        }
    }
    Ok(b.finish(true))
}

/// Divergence coupling `b(v, q) = (q, div v)`, rows indexed by pressure dofs.
pub fn assemble_b(v_space: &Arc<FeSpace>, q_space: &Arc<FeSpace>) -> Result<SparseOperator> {
    check_rt(v_space, "assemble_b")?;
    check_dg(q_space, "assemble_b")?;
    if !Arc::ptr_eq(&v_space.mesh, &q_space.mesh) {
        return Err(Error::invalid("spaces must share a mesh"));
    }
    let k = v_space.degree;
    let rule = triangle_rule(quad_degree_bilinear(k))?;
    let tab = tabulate_rt(v_space, &rule);
    let mesh = &v_space.mesh;
    let nl_v = v_space.n_local();
    let nl_q = dg_local_dim(q_space.degree);
    let mut b = TripletBuilder::new(q_space.n_dofs, v_space.n_dofs);
    let mut dofs_v = Vec::with_capacity(nl_v);
    let mut dofs_q = Vec::with_capacity(nl_q);
    for c in 0..mesh.n_cells() {
        v_space.cell_dofs(c, &mut dofs_v);
        q_space.cell_dofs(c, &mut dofs_q);
        let mut local = vec![0.0; nl_q * nl_v];
        for (pi, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            // Piola divergence carries 1/det; det cancels with the area factor.
            for qi in 0..nl_q {
                let qv = dg_basis_eval(qi, p);
                for l in 0..nl_v {
                    local[qi * nl_v + l] += w * qv * tab.divs[pi][l];
                }
            }
        }
        for qi in 0..nl_q {
            let (gq, _) = dofs_q[qi];
            for l in 0..nl_v {
                let (gv, sv) = dofs_v[l];
                b.push(gq, gv, sv * local[qi * nl_v + l]);
            }
        }
    }
    Ok(b.finish(false))
}

/// Forchheimer residual vector: entries `(F |u|^{r-2} u, phi_i)`.
pub fn assemble_c_residual(
    u: &FeFunction,
    params: &ModelParams,
    space: &Arc<FeSpace>,
) -> Result<Vec<f64>> {
    check_rt(space, "assemble_c_residual")?;
    let k = space.degree;
    let rule = triangle_rule(quad_degree_nonlinear(k))?;
    let tab = tabulate_rt(space, &rule);
    let mesh = &space.mesh;
    let nl = space.n_local();
    let mut out = vec![0.0; space.n_dofs];
    if params.forchheimer_f == 0.0 {
        return Ok(out);
    }
    let mut dofs = Vec::with_capacity(nl);
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        space.cell_dofs(c, &mut dofs);
        // Local coefficients of the state.
        let coef: Vec<f64> = dofs.iter().map(|&(g, s)| s * u.coeffs[g]).collect();
        for (pi, (_, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let mut uval = [0.0; 2];
            for l in 0..nl {
                uval[0] += coef[l] * tab.values[pi][l][0];
                uval[1] += coef[l] * tab.values[pi][l][1];
            }
            let up = map.piola(uval);
            let mag = (up[0] * up[0] + up[1] * up[1]).sqrt();
            let weight = params.forchheimer_f * mag.powf(params.r - 2.0);
            if weight == 0.0 {
                continue;
            }
            for l in 0..nl {
                let phi = map.piola(tab.values[pi][l]);
                let (g, s) = dofs[l];
                out[g] += s * w * map.det * weight * (up[0] * phi[0] + up[1] * phi[1]);
            }
        }
    }
    Ok(out)
}

/// Newton Hessian of the Forchheimer term at state `u_m`:
/// `F |u|^{r-2} (du, v) + F (r-2) |u|^{r-4} (u . du)(u . v)`,
/// with |u| clamped below by `epsilon_reg` inside the weights.
pub fn assemble_newton_hessian(
    u_m: &FeFunction,
    params: &ModelParams,
    space: &Arc<FeSpace>,
) -> Result<SparseOperator> {
    check_rt(space, "assemble_newton_hessian")?;
    let k = space.degree;
    let rule = triangle_rule(quad_degree_nonlinear(k))?;
    let tab = tabulate_rt(space, &rule);
    let mesh = &space.mesh;
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs, space.n_dofs);
    if params.forchheimer_f == 0.0 {
        return Ok(b.finish(true));
    }
    let mut dofs = Vec::with_capacity(nl);
    let mut phys = vec![[0.0f64; 2]; nl];
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        space.cell_dofs(c, &mut dofs);
        let coef: Vec<f64> = dofs.iter().map(|&(g, s)| s * u_m.coeffs[g]).collect();
        let mut local = vec![0.0; nl * nl];
        for (pi, (_, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let mut uval = [0.0; 2];
            for l in 0..nl {
                uval[0] += coef[l] * tab.values[pi][l][0];
                uval[1] += coef[l] * tab.values[pi][l][1];
            }
            let up = map.piola(uval);
            let mag = (up[0] * up[0] + up[1] * up[1]).sqrt().max(params.epsilon_reg);
            let w1 = params.forchheimer_f * mag.powf(params.r - 2.0);
            let w2 = params.forchheimer_f * (params.r - 2.0) * mag.powf(params.r - 4.0);
            for l in 0..nl {
                phys[l] = map.piola(tab.values[pi][l]);
            }
            for i in 0..nl {
                let udi = up[0] * phys[i][0] + up[1] * phys[i][1];
                for j in 0..=i {
                    let dot = phys[i][0] * phys[j][0] + phys[i][1] * phys[j][1];
                    let udj = up[0] * phys[j][0] + up[1] * phys[j][1];
                    local[i * nl + j] += w * map.det * (w1 * dot + w2 * udi * udj);
                }
            }
        }
        for i in 0..nl {
            for j in 0..=i {
                let v = local[i * nl + j];
                let (gi, si) = dofs[i];
                let (gj, sj) = dofs[j];
                b.push(gi, gj, si * sj * v);
                if i != j {
                    b.push(gj, gi, si * sj * v);
                }
            }
        }
    }
    Ok(b.finish(true))
}

/// Load vectors `(f, v)` and `(g, q)`.
pub fn assemble_rhs(
    f: &dyn Fn([f64; 2]) -> [f64; 2],
    g: &dyn Fn([f64; 2]) -> f64,
    v_space: &Arc<FeSpace>,
    q_space: &Arc<FeSpace>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rt(v_space, "assemble_rhs")?;
    check_dg(q_space, "assemble_rhs")?;
    let k = v_space.degree;
    let rule = triangle_rule(quad_degree_nonlinear(k))?;
    let tab = tabulate_rt(v_space, &rule);
    let mesh = &v_space.mesh;
    let nl_v = v_space.n_local();
    let nl_q = dg_local_dim(q_space.degree);
    let mut rhs_u = vec![0.0; v_space.n_dofs];
    let mut rhs_p = vec![0.0; q_space.n_dofs];
    let mut dofs_v = Vec::with_capacity(nl_v);
    let mut dofs_q = Vec::with_capacity(nl_q);
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        v_space.cell_dofs(c, &mut dofs_v);
        q_space.cell_dofs(c, &mut dofs_q);
        for (pi, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let x = map.to_physical(p);
            let fv = f(x);
            let gv = g(x);
            for l in 0..nl_v {
                let phi = map.piola(tab.values[pi][l]);
                let (gd, s) = dofs_v[l];
                rhs_u[gd] += s * w * map.det * (fv[0] * phi[0] + fv[1] * phi[1]);
            }
            for qi in 0..nl_q {
                let (gd, _) = dofs_q[qi];
                rhs_p[gd] += w * map.det * gv * dg_basis_eval(qi, p);
            }
        }
    }
    Ok((rhs_u, rhs_p))
}

/// Natural pressure boundary term `<p_D, v . n>` over Gamma_p facets
/// (flux measured along the domain-outward normal).
pub fn assemble_pressure_flux_rhs(
    p_d: &dyn Fn([f64; 2]) -> f64,
    v_space: &Arc<FeSpace>,
) -> Result<Vec<f64>> {
    check_rt(v_space, "assemble_pressure_flux_rhs")?;
    let k = v_space.degree;
    let mesh = &v_space.mesh;
    let erule = edge_rule(2 * k + 5)?;
    let mut out = vec![0.0; v_space.n_dofs];
    let mut basis = Vec::new();
    let mut dofs = Vec::new();
    for f in mesh.boundary_facets(BoundaryTag::GammaP) {
        let cell = mesh.facets[f].cells.0;
        let map = mesh.cell_map(cell);
        let outward_sign = mesh.cell_facets[cell]
            .iter()
            .find(|fu| fu.facet == f)
            .map(|fu| fu.sign)
            .expect("incidence");
        let n_global = mesh.facet_normal(f);
        let n_out = [outward_sign * n_global[0], outward_sign * n_global[1]];
        let len = mesh.facet_length(f);
        v_space.cell_dofs(cell, &mut dofs);
        for (s, w) in erule.points.iter().zip(&erule.weights) {
            let x = mesh.facet_point(f, *s);
            let rp = map.to_reference(x);
            v_space.rt_basis(rp, &mut basis);
            let pd = p_d(x);
            for (l, &(g, sg)) in dofs.iter().enumerate() {
                let phi = map.piola(basis[l]);
                out[g] += sg * w * len * pd * (phi[0] * n_out[0] + phi[1] * n_out[1]);
            }
        }
    }
    Ok(out)
}

/// Velocity block of the weighted H(div) Riesz maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RieszMode {
    /// `(w u, v) + (div u, div v)`: intersection-space norm, div term unweighted.
    Intersection,
    /// `(w u, v) + (w div u, div v)`: pointwise-scaled full H(div) norm.
    Scaled,
    /// `(w u, v)` only.
    NoDiv,
}

/// Weighted H(div) Riesz operator with the given scalar weight field.
pub fn assemble_hdiv_riesz(
    weight: &CellField,
    space: &Arc<FeSpace>,
    mode: RieszMode,
) -> Result<SparseOperator> {
    check_rt(space, "assemble_hdiv_riesz")?;
    let k = space.degree;
    let rule = triangle_rule(quad_degree_nonlinear(k))?;
    let tab = tabulate_rt(space, &rule);
    let mesh = &space.mesh;
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs, space.n_dofs);
    let mut dofs = Vec::with_capacity(nl);
    let mut phys = vec![[0.0f64; 2]; nl];
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        space.cell_dofs(c, &mut dofs);
        let mut local = vec![0.0; nl * nl];
        for (pi, (&p, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let x = map.to_physical(p);
            let wv = weight(c, p, x);
            for l in 0..nl {
                phys[l] = map.piola(tab.values[pi][l]);
            }
            let dw = match mode {
                RieszMode::Intersection => 1.0,
                RieszMode::Scaled => wv,
                RieszMode::NoDiv => 0.0,
            };
            for i in 0..nl {
                for j in 0..=i {
                    let dot = phys[i][0] * phys[j][0] + phys[i][1] * phys[j][1];
                    let div = tab.divs[pi][i] * tab.divs[pi][j] / (map.det * map.det);
                    local[i * nl + j] += w * map.det * (wv * dot + dw * div);
                }
            }
        }
        for i in 0..nl {
            for j in 0..=i {
                let v = local[i * nl + j];
                let (gi, si) = dofs[i];
                let (gj, sj) = dofs[j];
                b.push(gi, gj, si * sj * v);
                if i != j {
                    b.push(gj, gi, si * sj * v);
                }
            }
        }
    }
    Ok(b.finish(true))
}

/// Unweighted grad-div stiffness `(div u, div v)`.
pub fn assemble_div_div(space: &Arc<FeSpace>) -> Result<SparseOperator> {
    check_rt(space, "assemble_div_div")?;
    let k = space.degree;
    let rule = triangle_rule(quad_degree_bilinear(k))?;
    let tab = tabulate_rt(space, &rule);
    let mesh = &space.mesh;
    let nl = space.n_local();
    let mut b = TripletBuilder::new(space.n_dofs, space.n_dofs);
    let mut dofs = Vec::with_capacity(nl);
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        space.cell_dofs(c, &mut dofs);
        let mut local = vec![0.0; nl * nl];
        for (pi, (_, &w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            for i in 0..nl {
                for j in 0..=i {
                    local[i * nl + j] += w * tab.divs[pi][i] * tab.divs[pi][j] / map.det;
                }
            }
        }
        for i in 0..nl {
            for j in 0..=i {
                let v = local[i * nl + j];
                let (gi, si) = dofs[i];
                let (gj, sj) = dofs[j];
                b.push(gi, gj, si * sj * v);
                if i != j {
                    b.push(gj, gi, si * sj * v);
                }
            }
        }
    }
    Ok(b.finish(true))
}

/// Mass matrix of a space (RT or DG).
pub fn assemble_mass(space: &Arc<FeSpace>) -> Result<SparseOperator> {
    match space.kind {
        SpaceKind::RaviartThomas => {
            assemble_hdiv_riesz(&|_, _, _| 1.0, space, RieszMode::NoDiv)
        }
        SpaceKind::DiscontinuousLagrange => assemble_weighted_dg_mass(&|_, _, _| 1.0, space),
    }
}

/// DG mass matrix with a scalar weight field; block diagonal per cell.
pub fn assemble_weighted_dg_mass(
    weight: &CellField,
    space: &Arc<FeSpace>,
) -> Result<SparseOperator> {
    check_dg(space, "assemble_weighted_dg_mass")?;
    let k = space.degree;
    let rule = triangle_rule(quad_degree_nonlinear(k))?;
    let mesh = &space.mesh;
    let nl = dg_local_dim(k);
    let mut b = TripletBuilder::new(space.n_dofs, space.n_dofs);
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map.to_physical(p);
            let wv = weight(c, p, x);
            for i in 0..nl {
                for j in 0..nl {
                    b.push(
                        c * nl + i,
                        c * nl + j,
                        w * map.det * wv * dg_basis_eval(i, p) * dg_basis_eval(j, p),
                    );
                }
            }
        }
    }
    Ok(b.finish(true))
}

/// Facet-penalised weighted pressure Laplacian:
/// `sum_K (kappa grad p, grad q)_K + sum_F (1/h_F)(kappa [[p]], [[q]])_F`
/// over interior and Gamma_p facets; the jump reduces to the trace on
/// boundary facets. For k = 0 only the facet terms are active.
pub fn assemble_pressure_laplacian(
    kappa: &Kappa,
    space: &Arc<FeSpace>,
) -> Result<SparseOperator> {
    let mesh = space.mesh.clone();
    let kappa = kappa.clone();
    let kappa2 = kappa.clone();
    assemble_facet_laplacian_impl(
        space,
        &move |_c, x, g, h| kappa.pairing(x, g, h),
        &move |fct: usize, x: [f64; 2]| -> f64 {
            let n = mesh.facet_normal(fct);
            kappa2.normal_weight(x, n) / mesh.facet_length(fct)
        },
    )
}

/// Linearised weighted s-Laplacian (s = 3/2) around `p_ref`:
/// cell term `w(x) [ |G|^{s-2} (grad p, grad q)
///                   + (s-2)|G|^{s-4} (G . grad p)(G . grad q) ]`,
/// facet term `w(x) (s-1) h_F^{1-s} |[[p_ref]]|^{s-2} ([[p]], [[q]])_F`,
/// where `G = grad p_ref` and `w` is the inverse Forchheimer weight
/// (`1/F`, or `1/(F |u|^{r-2})` in the preconditioner variant).
pub fn assemble_pressure_slaplacian_weighted(
    p_ref: &FeFunction,
    inv_weight: &CellField,
    epsilon_reg: f64,
    space: &Arc<FeSpace>,
) -> Result<SparseOperator> {
    check_dg(space, "assemble_pressure_slaplacian_weighted")?;
    let s = 1.5;
    let mesh = space.mesh.clone();
    let p_ref = p_ref.clone();
    let p_ref2 = p_ref.clone();
    let cell_pairing = move |c: usize, x: [f64; 2], g: [f64; 2], h: [f64; 2]| -> f64 {
        let grad_ref = p_ref.eval_scalar_grad(c);
        let mag = (grad_ref[0] * grad_ref[0] + grad_ref[1] * grad_ref[1])
            .sqrt()
            .max(epsilon_reg);
        let w = inv_weight(c, [0.0, 0.0], x);
        let gh = g[0] * h[0] + g[1] * h[1];
        let gg = grad_ref[0] * g[0] + grad_ref[1] * g[1];
        let hg = grad_ref[0] * h[0] + grad_ref[1] * h[1];
        w * (mag.powf(s - 2.0) * gh + (s - 2.0) * mag.powf(s - 4.0) * gg * hg)
    };
    let mesh2 = mesh.clone();
    assemble_facet_laplacian_impl(
        space,
        &|c, x, g, h| cell_pairing(c, x, g, h),
        &move |fct: usize, x: [f64; 2]| -> f64 {
            // Facet weight: w (s-1) h_F^{1-s} |[[p_ref]]|^{s-2}.
            let facet = &mesh2.facets[fct];
            let c1 = facet.cells.0;
            let r1 = mesh2.cell_map(c1).to_reference(x);
            let p1 = p_ref2.eval_scalar(c1, r1);
            let jump = match facet.cells.1 {
                Some(c2) => {
                    let r2 = mesh2.cell_map(c2).to_reference(x);
                    p1 - p_ref2.eval_scalar(c2, r2)
                }
                None => p1,
            };
            let mag = jump.abs().max(epsilon_reg);
            let w = inv_weight(c1, r1, x);
            let h_f = mesh2.facet_length(fct);
            w * (s - 1.0) * h_f.powf(1.0 - s) * mag.powf(s - 2.0)
        },
    )
}

/// Spec-facing s-Laplacian with the constant weight `1/F`.
pub fn assemble_pressure_slaplacian_linearised(
    p_ref: &FeFunction,
    params: &ModelParams,
    space: &Arc<FeSpace>,
) -> Result<SparseOperator> {
    let inv_f = if params.forchheimer_f == 0.0 {
        return Err(Error::invalid("s-Laplacian needs a positive Forchheimer coefficient"));
    } else {
        1.0 / params.forchheimer_f
    };
    assemble_pressure_slaplacian_weighted(p_ref, &move |_, _, _| inv_f, params.epsilon_reg, space)
}

/// Core loop: cell gradient terms plus facet jump penalties over interior
/// and Gamma_p facets. `facet_weight(facet, x)` already includes all scaling.
fn assemble_facet_laplacian_impl(
    space: &Arc<FeSpace>,
    cell_pairing: &dyn Fn(usize, [f64; 2], [f64; 2], [f64; 2]) -> f64,
    facet_weight: &dyn Fn(usize, [f64; 2]) -> f64,
) -> Result<SparseOperator> {
    check_dg(space, "facet laplacian")?;
    let k = space.degree;
    let nl = dg_local_dim(k);
    let mesh = &space.mesh;
    let mut b = TripletBuilder::new(space.n_dofs, space.n_dofs);

    // Cell terms vanish for k = 0 (constant gradients are zero).
    if k >= 1 {
        let rule = triangle_rule(quad_degree_nonlinear(k))?;
        for c in 0..mesh.n_cells() {
            let map = mesh.cell_map(c);
            // Physical gradients of the modal basis are constant per cell.
            let grads: Vec<[f64; 2]> = (0..nl).map(|l| map.grad(dg_basis_grad(l))).collect();
            for (&p, &w) in rule.points.iter().zip(&rule.weights) {
                let x = map.to_physical(p);
                for i in 0..nl {
                    for j in 0..nl {
                        let v = cell_pairing(c, x, grads[i], grads[j]);
                        b.push(c * nl + i, c * nl + j, w * map.det * v);
                    }
                }
            }
        }
    }

    let erule = edge_rule(2 * k + 5)?;
    for (fi, facet) in mesh.facets.iter().enumerate() {
        if facet.tag == Some(BoundaryTag::GammaU) {
            continue;
        }
        let len = mesh.facet_length(fi);
        let c1 = facet.cells.0;
        let map1 = mesh.cell_map(c1);
        match facet.cells.1 {
            Some(c2) => {
                let map2 = mesh.cell_map(c2);
                for (s, w) in erule.points.iter().zip(&erule.weights) {
                    let x = mesh.facet_point(fi, *s);
                    let wf = facet_weight(fi, x);
                    let r1 = map1.to_reference(x);
                    let r2 = map2.to_reference(x);
                    // Jump basis: +basis on c1, -basis on c2.
                    let mut ids = Vec::with_capacity(2 * nl);
                    for l in 0..nl {
                        ids.push((c1 * nl + l, dg_basis_eval(l, r1)));
                    }
                    for l in 0..nl {
                        ids.push((c2 * nl + l, -dg_basis_eval(l, r2)));
                    }
                    for &(gi, vi) in &ids {
                        for &(gj, vj) in &ids {
                            b.push(gi, gj, w * len * wf * vi * vj);
                        }
                    }
                }
            }
            None => {
                for (s, w) in erule.points.iter().zip(&erule.weights) {
                    let x = mesh.facet_point(fi, *s);
                    let wf = facet_weight(fi, x);
                    let r1 = map1.to_reference(x);
                    for i in 0..nl {
                        for j in 0..nl {
                            b.push(
                                c1 * nl + i,
                                c1 * nl + j,
                                w * len * wf * dg_basis_eval(i, r1) * dg_basis_eval(j, r1),
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(b.finish(true))
}

/// Discrete gradient: the RT representative of `q` through the pairing
/// `(grad_h q, v) = -(div v, q)` for all `v` in the (constrained) RT space.
pub fn discrete_gradient(q: &FeFunction, rt_space: &Arc<FeSpace>) -> Result<FeFunction> {
    check_rt(rt_space, "discrete_gradient")?;
    check_dg(&q.space, "discrete_gradient")?;
    if !Arc::ptr_eq(&rt_space.mesh, &q.space.mesh) || rt_space.degree != q.space.degree {
        return Err(Error::invalid("discrete gradient needs matching spaces on one mesh"));
    }
    let mass = assemble_mass(rt_space)?;
    let div = assemble_b(rt_space, &q.space)?;
    let mut rhs_full = vec![0.0; rt_space.n_dofs];
    div.matvec_transpose(&q.coeffs, &mut rhs_full);
    for v in &mut rhs_full {
        *v = -*v;
    }
    let free = rt_space.free_dofs();
    let m_ff = mass.submatrix(&free, &free);
    let rhs: Vec<f64> = free.iter().map(|&i| rhs_full[i]).collect();
    let chol = m_ff
        .to_faer()
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Singular(format!("RT mass Cholesky: {e:?}")))?;
    let mut x = faer::Mat::zeros(free.len(), 1);
    for (i, v) in rhs.iter().enumerate() {
        x[(i, 0)] = *v;
    }
    let sol = faer::linalg::solvers::Solve::solve(&chol, &x);
    let mut coeffs = vec![0.0; rt_space.n_dofs];
    for (i, &g) in free.iter().enumerate() {
        coeffs[g] = sol[(i, 0)];
    }
    FeFunction::from_coeffs(rt_space.clone(), coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{interpolate_rt, project_l2};
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

    fn rt_space(mesh: &Arc<Mesh>, k: usize) -> Arc<FeSpace> {
        FeSpace::raviart_thomas(mesh.clone(), k).unwrap()
    }

    fn dg_space(mesh: &Arc<Mesh>, k: usize) -> Arc<FeSpace> {
        FeSpace::discontinuous_lagrange(mesh.clone(), k).unwrap()
    }

    fn seeded(coeffs: &mut [f64], seed: usize) {
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = (((i + seed) * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
        }
    }

    /// Quadrature oracle for `(kappa^{-1} phi_i, phi_j)` built from pointwise
    /// evaluation of unit-coefficient functions (independent of the assembly
    /// loop's tabulation and scatter path).
    fn a_entry_oracle_deg(
        params: &ModelParams,
        space: &Arc<FeSpace>,
        i: usize,
        j: usize,
        deg: usize,
    ) -> f64 {
        let mesh = &space.mesh;
        let rule = triangle_rule(deg).unwrap();
        let mut fi = FeFunction::zero(space.clone());
        fi.coeffs[i] = 1.0;
        let mut fj = FeFunction::zero(space.clone());
        fj.coeffs[j] = 1.0;
        let mut acc = 0.0;
        for c in 0..mesh.n_cells() {
            let map = mesh.cell_map(c);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let x = map.to_physical(*p);
                let a = fi.eval_vector(c, *p);
                let b = fj.eval_vector(c, *p);
                acc += w * map.det * params.kappa.inv_pairing(x, a, b).unwrap();
            }
        }
        acc
    }

    fn a_entry_oracle(params: &ModelParams, space: &Arc<FeSpace>, i: usize, j: usize) -> f64 {
        a_entry_oracle_deg(params, space, i, j, 10)
    }

    #[test]
    fn a_diagonal_entry_is_squared_norm() {
        let mesh = unit_mesh(1);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::unit();
        let a = assemble_a(&params, &rt0).unwrap();
        let dense = a.to_dense();
        for i in 0..rt0.n_dofs {
            let oracle = a_entry_oracle(&params, &rt0, i, i);
            assert!((dense[(i, i)] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn a_scales_inversely_with_kappa() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let a1 = assemble_a(&ModelParams::constant(1.0, 1.0, 3.0), &rt0).unwrap();
        let a2 = assemble_a(&ModelParams::constant(1e-8, 1.0, 3.0), &rt0).unwrap();
        let (d1, d2) = (a1.to_dense(), a2.to_dense());
        for i in 0..rt0.n_dofs {
            for j in 0..rt0.n_dofs {
                let expect = 1e8 * d1[(i, j)];
                if expect.abs() > 0.0 {
                    assert!(((d2[(i, j)] - expect) / expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn a_heterogeneous_kappa_matches_oracle() {
        let mesh = unit_mesh(1);
        let rt0 = rt_space(&mesh, 0);
        let kappa = Kappa::Scalar(Arc::new(|x: [f64; 2]| {
            1.0 + (-0.5 * (10.0 * x[1] - 5.0 - (10.0 * x[0]).sin()).powi(2)).exp()
        }));
        let params = ModelParams::new(kappa, 1.0, 3.5).unwrap();
        let a = assemble_a(&params, &rt0).unwrap();
        let dense = a.to_dense();
        // Same quadrature degree as the assembly (2k+4), independent path.
        for i in 0..rt0.n_dofs {
            for j in 0..rt0.n_dofs {
                let oracle = a_entry_oracle_deg(&params, &rt0, i, j, 4);
                assert!(
                    (dense[(i, j)] - oracle).abs() < 1e-12 * (1.0 + oracle.abs()),
                    "entry ({i},{j}): {} vs {}",
                    dense[(i, j)],
                    oracle
                );
            }
        }
    }

    #[test]
    fn a_rejects_non_spd_tensor() {
        let mesh = unit_mesh(1);
        let rt0 = rt_space(&mesh, 0);
        let kappa = Kappa::Tensor(Arc::new(|_| [[1.0, 0.0], [0.0, -1.0]]));
        let params = ModelParams { kappa, forchheimer_f: 0.0, r: 3.0, epsilon_reg: 1e-10 };
        match assemble_a(&params, &rt0) {
            Err(Error::Assembly { cell, .. }) => assert_eq!(cell, 0),
            other => panic!("expected assembly error, got {other:?}"),
        }
    }

    #[test]
    fn b_annihilates_divergence_free_fields() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let dg0 = dg_space(&mesh, 0);
        let b = assemble_b(&rt0, &dg0).unwrap();
        let f = interpolate_rt(&|_| [1.0, 0.0], &rt0).unwrap();
        let mut y = vec![0.0; dg0.n_dofs];
        b.matvec(&f.coeffs, &mut y);
        for v in y {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn b_single_cell_is_net_flux() {
        let text = "forchheimer-mesh v1\nvertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2\nboundary 3\n0 1 GAMMA_U\n1 2 GAMMA_P\n0 2 GAMMA_P\n";
        let mesh = Arc::new(crate::mesh::parse_mesh(text).unwrap());
        let rt0 = rt_space(&mesh, 0);
        let dg0 = dg_space(&mesh, 0);
        let b = assemble_b(&rt0, &dg0).unwrap().to_dense();
        for f in 0..mesh.n_facets() {
            // b(phi_f, 1) = net outward flux of the unit-flux facet basis
            // relative to the global facet normal.
            let cell = mesh.facets[f].cells.0;
            let sign = mesh.cell_facets[cell]
                .iter()
                .find(|fu| fu.facet == f)
                .unwrap()
                .sign;
            assert!((b[(0, f)] - sign).abs() < 1e-13);
        }
    }

    #[test]
    fn b_commutes_with_interpolation() {
        for k in [0usize, 1] {
            let mesh = unit_mesh(2);
            let rt = rt_space(&mesh, k);
            let dg = dg_space(&mesh, k);
            let b = assemble_b(&rt, &dg).unwrap();
            let mass_p = assemble_mass(&dg).unwrap();
            let v = |x: [f64; 2]| {
                [
                    (std::f64::consts::PI * x[0]).cos() * x[1],
                    x[0] * x[0] - 0.3 * x[1],
                ]
            };
            let div_v = |x: [f64; 2]| {
                -(std::f64::consts::PI) * (std::f64::consts::PI * x[0]).sin() * x[1] - 0.3
            };
            let pi_v = interpolate_rt(&v, &rt).unwrap();
            let ph = project_l2(&div_v, &dg).unwrap();
            let mut lhs = vec![0.0; dg.n_dofs];
            b.matvec(&pi_v.coeffs, &mut lhs);
            let mut rhs = vec![0.0; dg.n_dofs];
            mass_p.matvec(&ph.coeffs, &mut rhs);
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-9, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn c_residual_zero_states() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::constant(1.0, 1.0, 3.0);
        let zero = FeFunction::zero(rt0.clone());
        let r = assemble_c_residual(&zero, &params, &rt0).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));

        let mut u = FeFunction::zero(rt0.clone());
        seeded(&mut u.coeffs, 7);
        let params0 = ModelParams::constant(1.0, 0.0, 3.0);
        let r = assemble_c_residual(&u, &params0, &rt0).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c_residual_constant_state_r3_is_linear() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::constant(1.0, 2.5, 3.0);
        let u = interpolate_rt(&|_| [1.0, 0.0], &rt0).unwrap();
        let r = assemble_c_residual(&u, &params, &rt0).unwrap();
        // |u| = 1, so entries equal F * int phi_x.
        let rule = triangle_rule(6).unwrap();
        for g in 0..rt0.n_dofs {
            let mut phi = FeFunction::zero(rt0.clone());
            phi.coeffs[g] = 1.0;
            let mut oracle = 0.0;
            for c in 0..mesh.n_cells() {
                let map = mesh.cell_map(c);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    oracle += w * map.det * params.forchheimer_f * phi.eval_vector(c, *p)[0];
                }
            }
            assert!((r[g] - oracle).abs() < 1e-12, "dof {g}: {} vs {}", r[g], oracle);
        }
    }

    #[test]
    fn hessian_vanishes_at_zero_state_r3() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::constant(1.0, 1.0, 3.0);
        let zero = FeFunction::zero(rt0.clone());
        let h = assemble_newton_hessian(&zero, &params, &rt0).unwrap();
        let d = h.to_dense();
        let mut max = 0.0f64;
        for i in 0..rt0.n_dofs {
            for j in 0..rt0.n_dofs {
                max = max.max(d[(i, j)].abs());
            }
        }
        // Only the epsilon-clamped first weight survives.
        assert!(max < 1e-9, "max {max}");
    }

    #[test]
    fn hessian_matches_finite_differences() {
        for k in [0usize, 1] {
            let mesh = unit_mesh(2);
            let rt = rt_space(&mesh, k);
            let params = ModelParams::constant(1.0, 1.7, 3.0);
            // Smooth state bounded away from zero plus a mild perturbation.
            let mut u = interpolate_rt(&|x| [1.0 + 0.3 * x[1], 0.8 - 0.2 * x[0]], &rt).unwrap();
            let mut pert = vec![0.0; rt.n_dofs];
            seeded(&mut pert, 3);
            for (c, p) in u.coeffs.iter_mut().zip(&pert) {
                *c += 0.05 * p;
            }
            let mut delta = FeFunction::zero(rt.clone());
            seeded(&mut delta.coeffs, 11);
            let h = assemble_newton_hessian(&u, &params, &rt).unwrap();
            let mut hd = vec![0.0; rt.n_dofs];
            h.matvec(&delta.coeffs, &mut hd);

            let t = 1e-6;
            let mut u_t = u.clone();
            for (c, d) in u_t.coeffs.iter_mut().zip(&delta.coeffs) {
                *c += t * d;
            }
            let r1 = assemble_c_residual(&u_t, &params, &rt).unwrap();
            let r0 = assemble_c_residual(&u, &params, &rt).unwrap();
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..rt.n_dofs {
                let fd = (r1[i] - r0[i]) / t;
                num += (fd - hd[i]).powi(2);
                den += hd[i].powi(2);
            }
            let rel = (num / den).sqrt();
            assert!(rel < 1e-5, "k={k}: relative FD error {rel}");
        }
    }

    #[test]
    fn hessian_constant_state_closed_form() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::constant(1.0, 3.0, 3.0);
        let u = interpolate_rt(&|_| [1.0, 0.0], &rt0).unwrap();
        let h = assemble_newton_hessian(&u, &params, &rt0).unwrap().to_dense();
        // Weight is F * (I + e_x e_x^T) = F * diag(2, 1).
        let rule = triangle_rule(6).unwrap();
        for i in 0..rt0.n_dofs {
            let mut fi = FeFunction::zero(rt0.clone());
            fi.coeffs[i] = 1.0;
            for j in 0..rt0.n_dofs {
                let mut fj = FeFunction::zero(rt0.clone());
                fj.coeffs[j] = 1.0;
                let mut oracle = 0.0;
                for c in 0..mesh.n_cells() {
                    let map = mesh.cell_map(c);
                    for (p, w) in rule.points.iter().zip(&rule.weights) {
                        let a = fi.eval_vector(c, *p);
                        let b = fj.eval_vector(c, *p);
                        oracle += w
                            * map.det
                            * params.forchheimer_f
                            * (2.0 * a[0] * b[0] + a[1] * b[1]);
                    }
                }
                assert!((h[(i, j)] - oracle).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn rhs_zero_and_areas() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let dg0 = dg_space(&mesh, 0);
        let (ru, rp) = assemble_rhs(&|_| [0.0, 0.0], &|_| 0.0, &rt0, &dg0).unwrap();
        assert!(ru.iter().all(|&v| v == 0.0));
        assert!(rp.iter().all(|&v| v == 0.0));
        let (_, rp) = assemble_rhs(&|_| [0.0, 0.0], &|_| 1.0, &rt0, &dg0).unwrap();
        for c in 0..mesh.n_cells() {
            assert!((rp[c] - mesh.cell_area(c)).abs() < 1e-14);
        }
    }

    #[test]
    fn riesz_modes_compose() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let mass = assemble_mass(&rt0).unwrap().to_dense();
        let no_div = assemble_hdiv_riesz(&|_, _, _| 1.0, &rt0, RieszMode::NoDiv)
            .unwrap()
            .to_dense();
        for i in 0..rt0.n_dofs {
            for j in 0..rt0.n_dofs {
                assert!((mass[(i, j)] - no_div[(i, j)]).abs() < 1e-13);
            }
        }
        let full = assemble_hdiv_riesz(&|_, _, _| 1.0, &rt0, RieszMode::Intersection).unwrap();
        let sum = assemble_mass(&rt0)
            .unwrap()
            .add(&assemble_div_div(&rt0).unwrap())
            .to_dense();
        let fd = full.to_dense();
        for i in 0..rt0.n_dofs {
            for j in 0..rt0.n_dofs {
                assert!((fd[(i, j)] - sum[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pressure_laplacian_two_cell_closed_form() {
        let text = "forchheimer-mesh v1\nvertices 4\n0 0\n1 0\n1 1\n0 1\ncells 2\n0 1 2\n0 2 3\nboundary 4\n0 1 GAMMA_U\n0 3 GAMMA_U\n1 2 GAMMA_U\n2 3 GAMMA_U\n";
        let mesh = Arc::new(crate::mesh::parse_mesh(text).unwrap());
        let dg0 = dg_space(&mesh, 0);
        let a = assemble_pressure_laplacian(&Kappa::Constant(1.0), &dg0).unwrap().to_dense();
        // Single interior facet (the diagonal, length sqrt 2):
        // (1/h_F) * |F| * (p1 - p2)^2 contributes the 2x2 graph Laplacian.
        for (i, j, v) in [(0, 0, 1.0), (1, 1, 1.0), (0, 1, -1.0), (1, 0, -1.0)] {
            assert!((a[(i, j)] - v).abs() < 1e-13, "({i},{j}): {}", a[(i, j)]);
        }
        // All boundary facets are Gamma_u, so constants are in the kernel.
        let dg = dg0;
        let apl = assemble_pressure_laplacian(&Kappa::Constant(1.0), &dg).unwrap();
        let ones = vec![1.0; dg.n_dofs];
        let mut y = vec![0.0; dg.n_dofs];
        apl.matvec(&ones, &mut y);
        assert!(y.iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn pressure_laplacian_scales_linearly_in_kappa() {
        let mesh = unit_mesh(2);
        let dg0 = dg_space(&mesh, 0);
        let a1 = assemble_pressure_laplacian(&Kappa::Constant(1.0), &dg0).unwrap().to_dense();
        let a2 = assemble_pressure_laplacian(&Kappa::Constant(1e4), &dg0).unwrap().to_dense();
        for i in 0..dg0.n_dofs {
            for j in 0..dg0.n_dofs {
                assert!((a2[(i, j)] - 1e4 * a1[(i, j)]).abs() < 1e-9 * (1.0 + a1[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn slaplacian_limits() {
        let mesh = unit_mesh(2);
        let dg1 = dg_space(&mesh, 1);
        let p_ref = project_l2(&|x| x[0] * x[1], &dg1).unwrap();
        // Entries scale exactly as 1/F, so F -> infinity kills the operator.
        let a1 = assemble_pressure_slaplacian_linearised(
            &p_ref,
            &ModelParams::constant(1.0, 1.0, 3.0),
            &dg1,
        )
        .unwrap()
        .to_dense();
        let a2 = assemble_pressure_slaplacian_linearised(
            &p_ref,
            &ModelParams::constant(1.0, 1e3, 3.0),
            &dg1,
        )
        .unwrap()
        .to_dense();
        for i in 0..dg1.n_dofs {
            for j in 0..dg1.n_dofs {
                assert!(
                    (a2[(i, j)] - 1e-3 * a1[(i, j)]).abs() <= 1e-12 * (1.0 + a1[(i, j)].abs()),
                    "entry ({i},{j})"
                );
            }
        }

        // Zero reference state: regularised, finite, no NaN.
        let zero = FeFunction::zero(dg1.clone());
        let params = ModelParams::constant(1.0, 1.0, 3.0);
        let a = assemble_pressure_slaplacian_linearised(&zero, &params, &dg1).unwrap();
        for (_, _, v) in a.triplets() {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn slaplacian_unit_gradient_closed_form_weights() {
        // Single cell with every facet on Gamma_u: facet penalties drop out
        // and only the cell term survives. With p_ref = x the weights reduce
        // to (1/F)[(grad p, grad q) - 0.5 (dx p)(dx q)].
        let text = "forchheimer-mesh v1\nvertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2\nboundary 3\n0 1 GAMMA_U\n1 2 GAMMA_U\n0 2 GAMMA_U\n";
        let mesh = Arc::new(crate::mesh::parse_mesh(text).unwrap());
        let dg1 = dg_space(&mesh, 1);
        let p_ref = project_l2(&|x| x[0], &dg1).unwrap();
        let params = ModelParams::constant(1.0, 2.0, 3.0);
        let a = assemble_pressure_slaplacian_linearised(&p_ref, &params, &dg1)
            .unwrap()
            .to_dense();
        let map = mesh.cell_map(0);
        let area = mesh.cell_area(0);
        for i in 0..3 {
            let gi = map.grad(dg_basis_grad(i));
            for j in 0..3 {
                let gj = map.grad(dg_basis_grad(j));
                let oracle = area
                    * (1.0 / params.forchheimer_f)
                    * ((gi[0] * gj[0] + gi[1] * gj[1]) - 0.5 * gi[0] * gj[0]);
                assert!(
                    (a[(i, j)] - oracle).abs() < 1e-13,
                    "entry ({i},{j}): {} vs {oracle}",
                    a[(i, j)]
                );
            }
        }
    }

    #[test]
    fn mass_matrices() {
        let mesh = unit_mesh(2);
        let dg0 = dg_space(&mesh, 0);
        let m = assemble_mass(&dg0).unwrap().to_dense();
        let mut total = 0.0;
        for c in 0..mesh.n_cells() {
            assert!((m[(c, c)] - mesh.cell_area(c)).abs() < 1e-14);
            total += m[(c, c)];
        }
        assert!((total - 1.0).abs() < 1e-12);

        let rt0 = rt_space(&mesh, 0);
        let mrt = assemble_mass(&rt0).unwrap().to_dense();
        let params = ModelParams::constant(1.0, 0.0, 3.0);
        for i in 0..rt0.n_dofs {
            let oracle = a_entry_oracle(&params, &rt0, i, i);
            assert!((mrt[(i, i)] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn documented_operators_are_symmetric() {
        let mesh = unit_mesh(2);
        let rt1 = rt_space(&mesh, 1);
        let dg1 = dg_space(&mesh, 1);
        let params = ModelParams::unit();
        let mut u = FeFunction::zero(rt1.clone());
        seeded(&mut u.coeffs, 5);
        let p_ref = project_l2(&|x| x[0] * x[1], &dg1).unwrap();
        let ops = vec![
            assemble_a(&params, &rt1).unwrap(),
            assemble_newton_hessian(&u, &params, &rt1).unwrap(),
            assemble_mass(&rt1).unwrap(),
            assemble_div_div(&rt1).unwrap(),
            assemble_pressure_laplacian(&Kappa::Constant(2.0), &dg1).unwrap(),
            assemble_pressure_slaplacian_linearised(&p_ref, &params, &dg1).unwrap(),
        ];
        for op in ops {
            assert!(op.max_asymmetry() <= 1e-12);
        }
    }

    #[test]
    fn forchheimer_term_is_monotone() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::constant(1.0, 2.0, 3.0);
        let rule = triangle_rule(8).unwrap();
        for trial in 0..40 {
            let mut a = FeFunction::zero(rt0.clone());
            seeded(&mut a.coeffs, trial * 2 + 1);
            let mut b = FeFunction::zero(rt0.clone());
            seeded(&mut b.coeffs, trial * 2 + 2);
            let ra = assemble_c_residual(&a, &params, &rt0).unwrap();
            let rb = assemble_c_residual(&b, &params, &rt0).unwrap();
            let mut s = 0.0;
            for i in 0..rt0.n_dofs {
                s += (ra[i] - rb[i]) * (a.coeffs[i] - b.coeffs[i]);
            }
            assert!(s >= 0.0, "trial {trial}: monotonicity scalar {s}");
            // Lower bound c * F * ||a-b||^3_{L3}.
            let mut l3 = 0.0;
            for c in 0..mesh.n_cells() {
                let map = mesh.cell_map(c);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let va = a.eval_vector(c, *p);
                    let vb = b.eval_vector(c, *p);
                    let d = ((va[0] - vb[0]).powi(2) + (va[1] - vb[1]).powi(2)).sqrt();
                    l3 += w * map.det * d.powi(3);
                }
            }
            let bound = params.forchheimer_f * l3;
            assert!(
                s >= 0.2 * bound,
                "trial {trial}: scalar {s} below 0.2 * F ||a-b||^3 = {bound}"
            );
        }
    }

    #[test]
    fn hessian_is_positive_semidefinite() {
        let mesh = unit_mesh(2);
        let rt0 = rt_space(&mesh, 0);
        let params = ModelParams::constant(1.0, 1.0, 3.0);
        for trial in 0..5 {
            let mut u = FeFunction::zero(rt0.clone());
            seeded(&mut u.coeffs, 100 + trial);
            let h = assemble_newton_hessian(&u, &params, &rt0).unwrap();
            let evd = h
                .to_dense()
                .self_adjoint_eigen(faer::Side::Lower)
                .expect("eigendecomposition");
            let s = evd.S();
            let min = (0..rt0.n_dofs).map(|i| s[i]).fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10, "trial {trial}: min eigenvalue {min}");
        }
    }

    #[test]
    fn discrete_gradient_adjointness() {
        for k in [0usize, 1] {
            let mesh = unit_mesh(2);
            let rt = rt_space(&mesh, k);
            let dg = dg_space(&mesh, k);
            let mut q = FeFunction::zero(dg.clone());
            seeded(&mut q.coeffs, 17);
            let g = discrete_gradient(&q, &rt).unwrap();
            let mass = assemble_mass(&rt).unwrap();
            let div = assemble_b(&rt, &dg).unwrap();
            // (grad_h q, v) + (div v, q) = 0 for every free v.
            let mut mg = vec![0.0; rt.n_dofs];
            mass.matvec(&g.coeffs, &mut mg);
            let mut dtq = vec![0.0; rt.n_dofs];
            div.matvec_transpose(&q.coeffs, &mut dtq);
            let mut max = 0.0f64;
            for i in 0..rt.n_dofs {
                if !rt.is_constrained(i) {
                    max = max.max((mg[i] + dtq[i]).abs());
                }
            }
            assert!(max <= 1e-11, "k={k}: adjointness residual {max}");
        }
    }

    #[test]
    fn discrete_gradient_of_constant_pairs_to_zero_flux() {
        // For q = c and v with zero boundary flux, (grad_h q, v) = 0.
        let mesh = unit_mesh(2);
        let rt = rt_space(&mesh, 0);
        let dg = dg_space(&mesh, 0);
        let q = project_l2(&|_| 3.25, &dg).unwrap();
        let g = discrete_gradient(&q, &rt).unwrap();
        let mass = assemble_mass(&rt).unwrap();
        let mut mg = vec![0.0; rt.n_dofs];
        mass.matvec(&g.coeffs, &mut mg);
        // Interior test function: zero on all boundary facets.
        let mut v = vec![0.0; rt.n_dofs];
        for (f, facet) in mesh.facets.iter().enumerate() {
            if !facet.is_boundary() {
                v[f] = 1.0 + f as f64 * 0.1;
            }
        }
        let pairing: f64 = mg.iter().zip(&v).map(|(a, b)| a * b).sum();
        // (grad_h c, v) = -(div v, c) = -c * net boundary flux of v = 0.
        assert!(pairing.abs() < 1e-11, "pairing {pairing}");
    }

    #[test]
    fn discrete_gradient_two_assembly_paths_agree() {
        let mesh = unit_mesh(2);
        let rt = rt_space(&mesh, 0);
        let dg = dg_space(&mesh, 0);
        let q = project_l2(&|x| x[0], &dg).unwrap();
        let g = discrete_gradient(&q, &rt).unwrap();
        let div = assemble_b(&rt, &dg).unwrap();
        let mass = assemble_mass(&rt).unwrap();
        // Path 1: (grad_h q, v) through the mass matrix.
        let mut path1 = vec![0.0; rt.n_dofs];
        mass.matvec(&g.coeffs, &mut path1);
        // Path 2: -(div v, q) assembled independently.
        let mut path2 = vec![0.0; rt.n_dofs];
        div.matvec_transpose(&q.coeffs, &mut path2);
        for i in 0..rt.n_dofs {
            if !rt.is_constrained(i) {
                assert!((path1[i] + path2[i]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn matrix_market_export() {
        let mesh = unit_mesh(1);
        let rt0 = rt_space(&mesh, 0);
        let m = assemble_mass(&rt0).unwrap();
        let dir = std::env::temp_dir().join("dfcore-mm");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mass.mtx");
        m.write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general"));
        let header: Vec<usize> = text
            .lines()
            .nth(1)
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        assert_eq!(header[0], m.nrows);
        assert_eq!(header[2], m.nnz());
    }
}
