//! Raviart-Thomas and discontinuous Lagrange spaces on triangles.
//!
//! Reference triangle: vertices (0,0), (1,0), (0,1); local edge `i` is the
//! edge opposite local vertex `i`, traversed counter-clockwise. RT basis
//! functions are constructed by inverting the degree-of-freedom matrix over
//! the span `[P_k]^2 + x * P~_k` and mapped to physical cells by the
//! contravariant Piola transform.
//!
//! Degrees of freedom:
//! - RT_0: one normal-flux integral per facet.
//! - RT_1: per facet the flux moments against 1 and the odd Legendre mode
//!   `2t-1`, plus two interior moments against the coordinate directions.
//! - DG_k: modal coefficients over {1, x, y} restricted to degree k.
//!
//! Facet dofs are stored against the global facet orientation (vertex index
//! low to high). The constant-flux moment changes sign when a cell sees the
//! facet with opposite normal; the odd moment is orientation-invariant since
//! normal flip and parameter reversal cancel.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::quadrature::{edge_rule, triangle_rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    RaviartThomas,
    DiscontinuousLagrange,
}

/// Local reference edges: endpoints (by local vertex index) of edge `i`,
/// traversed counter-clockwise.
const REF_EDGE: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];
const REF_VERTS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Outward unit normal and length of reference edge `i`.
fn ref_edge_normal(i: usize) -> ([f64; 2], f64) {
    let a = REF_VERTS[REF_EDGE[i][0]];
    let b = REF_VERTS[REF_EDGE[i][1]];
    let t = [b[0] - a[0], b[1] - a[1]];
    let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
    ([t[1] / len, -t[0] / len], len)
}

fn ref_edge_point(i: usize, s: f64) -> [f64; 2] {
    let a = REF_VERTS[REF_EDGE[i][0]];
    let b = REF_VERTS[REF_EDGE[i][1]];
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Monomial span of RT_k on the reference cell.
fn rt_span_dim(k: usize) -> usize {
    match k {
        0 => 3,
        1 => 8,
        _ => unreachable!(),
    }
}

fn rt_span_eval(k: usize, j: usize, p: [f64; 2]) -> [f64; 2] {
    let [x, y] = p;
    match (k, j) {
        (0, 0) => [1.0, 0.0],
        (0, 1) => [0.0, 1.0],
        (0, 2) => [x, y],
        (1, 0) => [1.0, 0.0],
        (1, 1) => [x, 0.0],
        (1, 2) => [y, 0.0],
        (1, 3) => [0.0, 1.0],
        (1, 4) => [0.0, x],
        (1, 5) => [0.0, y],
        (1, 6) => [x * x, x * y],
        (1, 7) => [x * y, y * y],
        _ => unreachable!(),
    }
}

fn rt_span_div(k: usize, j: usize, p: [f64; 2]) -> f64 {
    let [x, y] = p;
    match (k, j) {
        (0, 0) | (0, 1) => 0.0,
        (0, 2) => 2.0,
        (1, 0) | (1, 2) | (1, 3) | (1, 4) => 0.0,
        (1, 1) | (1, 5) => 1.0,
        (1, 6) => 3.0 * x,
        (1, 7) => 3.0 * y,
        _ => unreachable!(),
    }
}

/// Reference RT element: columns of `coeffs` expand each basis function in
/// the monomial span.
#[derive(Clone, Debug)]
struct RtRefElement {
    k: usize,
    n_dofs: usize,
    coeffs: Vec<Vec<f64>>, // [span_j][dof_l]
}

/// Gauss-Jordan solve of a small dense system with multiple right-hand
/// sides; used once per element family.
fn solve_dense_small(mut a: Vec<Vec<f64>>, mut rhs: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err(Error::Singular("small dense system".into()));
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
        }
        for j in 0..rhs[col].len() {
            rhs[col][j] /= d;
        }
        for i in 0..n {
            if i != col && a[i][col] != 0.0 {
                let f = a[i][col];
                for j in 0..n {
                    a[i][j] -= f * a[col][j];
                }
                for j in 0..rhs[i].len() {
                    let v = rhs[col][j];
                    rhs[i][j] -= f * v;
                }
            }
        }
    }
    Ok(rhs)
}

impl RtRefElement {
    fn build(k: usize) -> Result<RtRefElement> {
        let dim = rt_span_dim(k);
        let erule = edge_rule(2 * k + 3)?;
        let trule = triangle_rule(2 * k + 2)?;
        // Dof matrix: rows are functionals, columns span functions.
        let mut m = vec![vec![0.0; dim]; dim];
        for j in 0..dim {
            let mut row = 0;
            for e in 0..3 {
                let (n, len) = ref_edge_normal(e);
                for moment in 0..=k {
                    let mut val = 0.0;
                    for (s, w) in erule.points.iter().zip(&erule.weights) {
                        let v = rt_span_eval(k, j, ref_edge_point(e, *s));
                        let q = if moment == 0 { 1.0 } else { 2.0 * s - 1.0 };
                        val += w * len * (v[0] * n[0] + v[1] * n[1]) * q;
                    }
                    m[row][j] = val;
                    row += 1;
                }
            }
            if k == 1 {
                for dir in 0..2 {
                    let mut val = 0.0;
                    for (p, w) in trule.points.iter().zip(&trule.weights) {
                        val += w * rt_span_eval(k, j, *p)[dir];
                    }
                    m[row][j] = val;
                    row += 1;
                }
            }
        }
        let mut id = vec![vec![0.0; dim]; dim];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        // Column l of the inverse expands basis function l in the span.
        let inv = solve_dense_small(m, id)?;
        Ok(RtRefElement { k, n_dofs: dim, coeffs: inv })
    }

    fn eval(&self, l: usize, p: [f64; 2]) -> [f64; 2] {
        let mut v = [0.0; 2];
        for j in 0..rt_span_dim(self.k) {
            let c = self.coeffs[j][l];
            if c != 0.0 {
                let s = rt_span_eval(self.k, j, p);
                v[0] += c * s[0];
                v[1] += c * s[1];
            }
        }
        v
    }

    fn eval_div(&self, l: usize, p: [f64; 2]) -> f64 {
        let mut v = 0.0;
        for j in 0..rt_span_dim(self.k) {
            let c = self.coeffs[j][l];
            if c != 0.0 {
                v += c * rt_span_div(self.k, j, p);
            }
        }
        v
    }
}

pub fn dg_local_dim(k: usize) -> usize {
    match k {
        0 => 1,
        1 => 3,
        _ => unreachable!(),
    }
}

/// DG modal basis {1, x, y} truncated to degree k, on the reference cell.
pub fn dg_basis_eval(l: usize, p: [f64; 2]) -> f64 {
    match l {
        0 => 1.0,
        1 => p[0],
        2 => p[1],
        _ => unreachable!(),
    }
}

/// Reference gradient of the DG modal basis.
pub fn dg_basis_grad(l: usize) -> [f64; 2] {
    match l {
        0 => [0.0, 0.0],
        1 => [1.0, 0.0],
        2 => [0.0, 1.0],
        _ => unreachable!(),
    }
}

/// A finite element space bound to a mesh. Immutable after construction.
pub struct FeSpace {
    pub kind: SpaceKind,
    pub degree: usize,
    pub mesh: Arc<Mesh>,
    pub n_dofs: usize,
    /// Velocity dofs on Gamma_u facets (essential flux condition); empty for
    /// pressure spaces.
    pub constrained_dofs: Vec<usize>,
    constrained: Vec<bool>,
    rt: Option<RtRefElement>,
}

impl FeSpace {
    pub fn raviart_thomas(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<FeSpace>> {
        if degree > 1 {
            return Err(Error::invalid("only RT_0 and RT_1 are supported"));
        }
        let k = degree;
        let n_dofs = mesh.n_facets() * (k + 1) + mesh.n_cells() * 2 * k;
        let mut constrained = vec![false; n_dofs];
        for f in mesh.boundary_facets(BoundaryTag::GammaU) {
            for m in 0..=k {
                constrained[f * (k + 1) + m] = true;
            }
        }
        let constrained_dofs = constrained
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| i)
            .collect();
        Ok(Arc::new(FeSpace {
            kind: SpaceKind::RaviartThomas,
            degree,
            mesh,
            n_dofs,
            constrained_dofs,
            constrained,
            rt: Some(RtRefElement::build(k)?),
        }))
    }

    pub fn discontinuous_lagrange(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<FeSpace>> {
        if degree > 1 {
            return Err(Error::invalid("only DG_0 and DG_1 are supported"));
        }
        let n_dofs = mesh.n_cells() * dg_local_dim(degree);
        Ok(Arc::new(FeSpace {
            kind: SpaceKind::DiscontinuousLagrange,
            degree,
            mesh,
            n_dofs,
            constrained_dofs: Vec::new(),
            constrained: vec![false; n_dofs],
            rt: None,
        }))
    }

    pub fn n_local(&self) -> usize {
        match self.kind {
            SpaceKind::RaviartThomas => 3 * (self.degree + 1) + 2 * self.degree,
            SpaceKind::DiscontinuousLagrange => dg_local_dim(self.degree),
        }
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs).filter(|&i| !self.constrained[i]).collect()
    }

    /// Global dof ids and orientation signs for the local dofs of a cell.
    pub fn cell_dofs(&self, c: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self.kind {
            SpaceKind::RaviartThomas => {
                let k = self.degree;
                for fu in &self.mesh.cell_facets[c] {
                    out.push((fu.facet * (k + 1), fu.sign));
                    if k == 1 {
                        // Odd facet moment is orientation-invariant.
                        out.push((fu.facet * 2 + 1, 1.0));
                    }
                }
                if k == 1 {
                    let base = self.mesh.n_facets() * 2 + c * 2;
                    out.push((base, 1.0));
                    out.push((base + 1, 1.0));
                }
            }
            SpaceKind::DiscontinuousLagrange => {
                let nl = dg_local_dim(self.degree);
                for l in 0..nl {
                    out.push((c * nl + l, 1.0));
                }
            }
        }
    }

    /// Reference basis values of the RT element at a reference point.
    pub fn rt_basis(&self, p: [f64; 2], out: &mut Vec<[f64; 2]>) {
        let rt = self.rt.as_ref().expect("RT basis on a pressure space");
        out.clear();
        for l in 0..rt.n_dofs {
            out.push(rt.eval(l, p));
        }
    }

    /// Reference basis divergences of the RT element at a reference point.
    pub fn rt_basis_div(&self, p: [f64; 2], out: &mut Vec<f64>) {
        let rt = self.rt.as_ref().expect("RT basis on a pressure space");
        out.clear();
        for l in 0..rt.n_dofs {
            out.push(rt.eval_div(l, p));
        }
    }
}

/// A finite element function: a coefficient vector over a space.
#[derive(Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zero(space: Arc<FeSpace>) -> FeFunction {
        let n = space.n_dofs;
        FeFunction { space, coeffs: vec![0.0; n] }
    }

    pub fn from_coeffs(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<FeFunction> {
        if coeffs.len() != space.n_dofs {
            return Err(Error::invalid(format!(
                "coefficient vector length {} does not match space dimension {}",
                coeffs.len(),
                space.n_dofs
            )));
        }
        Ok(FeFunction { space, coeffs })
    }

    /// Evaluate a vector-valued (RT) function at a reference point of a cell.
    pub fn eval_vector(&self, cell: usize, rp: [f64; 2]) -> [f64; 2] {
        debug_assert_eq!(self.space.kind, SpaceKind::RaviartThomas);
        let rt = self.space.rt.as_ref().unwrap();
        let mut dofs = Vec::with_capacity(self.space.n_local());
        self.space.cell_dofs(cell, &mut dofs);
        let mut v = [0.0; 2];
        for (l, &(g, sign)) in dofs.iter().enumerate() {
            let c = sign * self.coeffs[g];
            if c != 0.0 {
                let b = rt.eval(l, rp);
                v[0] += c * b[0];
                v[1] += c * b[1];
            }
        }
        self.space.mesh.cell_map(cell).piola(v)
    }

    /// Evaluate a scalar (DG) function at a reference point of a cell.
    pub fn eval_scalar(&self, cell: usize, rp: [f64; 2]) -> f64 {
        debug_assert_eq!(self.space.kind, SpaceKind::DiscontinuousLagrange);
        let nl = dg_local_dim(self.space.degree);
        let mut v = 0.0;
        for l in 0..nl {
            v += self.coeffs[cell * nl + l] * dg_basis_eval(l, rp);
        }
        v
    }

    /// Physical gradient of a scalar (DG) function on a cell (constant for
    /// the modal basis up to degree 1).
    pub fn eval_scalar_grad(&self, cell: usize) -> [f64; 2] {
        debug_assert_eq!(self.space.kind, SpaceKind::DiscontinuousLagrange);
        let nl = dg_local_dim(self.space.degree);
        let mut g = [0.0; 2];
        for l in 0..nl {
            let gr = dg_basis_grad(l);
            let c = self.coeffs[cell * nl + l];
            g[0] += c * gr[0];
            g[1] += c * gr[1];
        }
        self.space.mesh.cell_map(cell).grad(g)
    }

    /// Divergence of an RT function at a reference point of a cell.
    pub fn eval_div(&self, cell: usize, rp: [f64; 2]) -> Result<f64> {
        if self.space.kind != SpaceKind::RaviartThomas {
            return Err(Error::invalid("eval_div requires an RT space"));
        }
        if cell >= self.space.mesh.n_cells() {
            return Err(Error::invalid(format!("cell {cell} out of range")));
        }
        let rt = self.space.rt.as_ref().unwrap();
        let mut dofs = Vec::with_capacity(self.space.n_local());
        self.space.cell_dofs(cell, &mut dofs);
        let mut v = 0.0;
        for (l, &(g, sign)) in dofs.iter().enumerate() {
            let c = sign * self.coeffs[g];
            if c != 0.0 {
                v += c * rt.eval_div(l, rp);
            }
        }
        Ok(v / self.space.mesh.cell_map(cell).det)
    }
}

/// Checked vector evaluation matching the `eval` operation contract.
pub fn eval(f: &FeFunction, cell: usize, rp: [f64; 2]) -> Result<[f64; 2]> {
    if cell >= f.space.mesh.n_cells() {
        return Err(Error::invalid(format!("cell {cell} out of range")));
    }
    Ok(f.eval_vector(cell, rp))
}

/// Fortin (canonical RT) interpolation of a smooth vector field: facet flux
/// moments against the global facet orientation, plus interior moments of the
/// Piola pullback for RT_1. Satisfies the commuting identity
/// `div interpolate_rt(v) = project_l2(div v)`.
pub fn interpolate_rt(
    v: &dyn Fn([f64; 2]) -> [f64; 2],
    space: &Arc<FeSpace>,
) -> Result<FeFunction> {
    if space.kind != SpaceKind::RaviartThomas {
        return Err(Error::invalid("interpolate_rt requires an RT space"));
    }
    let k = space.degree;
    let mesh = &space.mesh;
    let erule = edge_rule(9)?;
    let mut coeffs = vec![0.0; space.n_dofs];
    for f in 0..mesh.n_facets() {
        let n = mesh.facet_normal(f);
        let len = mesh.facet_length(f);
        for m in 0..=k {
            let mut val = 0.0;
            for (s, w) in erule.points.iter().zip(&erule.weights) {
                let x = mesh.facet_point(f, *s);
                let vv = v(x);
                let vn = vv[0] * n[0] + vv[1] * n[1];
                let q = if m == 0 { 1.0 } else { 2.0 * s - 1.0 };
                val += w * len * vn * q;
            }
            coeffs[f * (k + 1) + m] = val;
        }
    }
    if k == 1 {
        let trule = triangle_rule(8)?;
        for c in 0..mesh.n_cells() {
            let map = mesh.cell_map(c);
            let mut ix = 0.0;
            let mut iy = 0.0;
            for (p, w) in trule.points.iter().zip(&trule.weights) {
                let vh = map.piola_inv(v(map.to_physical(*p)));
                ix += w * vh[0];
                iy += w * vh[1];
            }
            let base = mesh.n_facets() * 2 + c * 2;
            coeffs[base] = ix;
            coeffs[base + 1] = iy;
        }
    }
    FeFunction::from_coeffs(space.clone(), coeffs)
}

/// Facet dof values of the essential flux condition `u . n_out = data` on
/// facets with the given tag. Returns (dof, value) pairs.
pub fn boundary_flux_dofs(
    space: &Arc<FeSpace>,
    tag: BoundaryTag,
    un_out: &dyn Fn([f64; 2]) -> f64,
) -> Result<Vec<(usize, f64)>> {
    if space.kind != SpaceKind::RaviartThomas {
        return Err(Error::invalid("boundary flux dofs require an RT space"));
    }
    let k = space.degree;
    let mesh = &space.mesh;
    let erule = edge_rule(9)?;
    let mut out = Vec::new();
    for f in mesh.boundary_facets(tag) {
        let cell = mesh.facets[f].cells.0;
        let outward_sign = mesh.cell_facets[cell]
            .iter()
            .find(|fu| fu.facet == f)
            .map(|fu| fu.sign)
            .expect("facet incidence");
        let len = mesh.facet_length(f);
        for m in 0..=k {
            let mut val = 0.0;
            for (s, w) in erule.points.iter().zip(&erule.weights) {
                let x = mesh.facet_point(f, *s);
                let q = if m == 0 { 1.0 } else { 2.0 * s - 1.0 };
                // Datum is the outward flux; the global dof measures flux in
                // the global facet normal direction.
                val += w * len * outward_sign * un_out(x) * q;
            }
            out.push((f * (k + 1) + m, val));
        }
    }
    Ok(out)
}

/// Orthogonal L2 projection onto a DG space, computed cellwise.
pub fn project_l2(q: &dyn Fn([f64; 2]) -> f64, space: &Arc<FeSpace>) -> Result<FeFunction> {
    if space.kind != SpaceKind::DiscontinuousLagrange {
        return Err(Error::invalid("project_l2 requires a DG space"));
    }
    let k = space.degree;
    let nl = dg_local_dim(k);
    let trule = triangle_rule(8)?;
    let mesh = &space.mesh;
    // Reference mass of the modal basis; the det factor cancels against the
    // one in the load.
    let mut mref = vec![vec![0.0; nl]; nl];
    for (p, w) in trule.points.iter().zip(&trule.weights) {
        for i in 0..nl {
            for j in 0..nl {
                mref[i][j] += w * dg_basis_eval(i, *p) * dg_basis_eval(j, *p);
            }
        }
    }
    let mut coeffs = vec![0.0; space.n_dofs];
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_map(c);
        let mut rhs = vec![vec![0.0]; nl];
        for (p, w) in trule.points.iter().zip(&trule.weights) {
            let qx = q(map.to_physical(*p));
            for (i, r) in rhs.iter_mut().enumerate() {
                r[0] += w * qx * dg_basis_eval(i, *p);
            }
        }
        let sol = solve_dense_small(mref.clone(), rhs)?;
        for (i, s) in sol.iter().enumerate() {
            coeffs[c * nl + i] = s[0];
        }
    }
    FeFunction::from_coeffs(space.clone(), coeffs)
}

/// Represent the divergence of an RT function exactly in a DG space of the
/// same degree (`div RT_k` lies in `P_k` cellwise).
pub fn divergence_as_dg(u: &FeFunction, dg: &Arc<FeSpace>) -> Result<FeFunction> {
    if u.space.kind != SpaceKind::RaviartThomas
        || dg.kind != SpaceKind::DiscontinuousLagrange
        || u.space.degree != dg.degree
    {
        return Err(Error::invalid("divergence_as_dg requires a matching RT/DG pair"));
    }
    let nl = dg_local_dim(dg.degree);
    let mut coeffs = vec![0.0; dg.n_dofs];
    for c in 0..dg.mesh.n_cells() {
        // div is a polynomial in {1, x, y}; read coefficients off vertex values.
        let d0 = u.eval_div(c, [0.0, 0.0])?;
        if nl == 1 {
            coeffs[c] = d0;
        } else {
            let dx = u.eval_div(c, [1.0, 0.0])?;
            let dy = u.eval_div(c, [0.0, 1.0])?;
            coeffs[c * 3] = d0;
            coeffs[c * 3 + 1] = dx - d0;
            coeffs[c * 3 + 2] = dy - d0;
        }
    }
    FeFunction::from_coeffs(dg.clone(), coeffs)
}

pub use crate::forms::discrete_gradient;
