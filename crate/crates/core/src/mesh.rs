//! Conforming 2D triangular meshes with oriented facets and boundary tags.
//!
//! Conventions:
//! - Cells store vertex triples in counter-clockwise order (positive area).
//! - Facets store their vertex pair as `(lo, hi)` with `lo < hi`; the global
//!   facet direction is `hi - lo` and the global facet normal is that
//!   direction rotated by -90 degrees. This makes assembly independent of
//!   cell traversal order.
//! - Local facet `i` of a cell is the edge opposite local vertex `i`,
//!   traversed from local vertex `(i+1)%3` to `(i+2)%3` (counter-clockwise,
//!   so the rotated edge direction is the outward normal).
//! - `cell_facets[c][i]` carries the sign relating the cell's outward normal
//!   on that edge to the global facet normal.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Boundary part of a facet: essential flux boundary or pressure boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    GammaU,
    GammaP,
}

/// A mesh edge. Boundary facets have `cells.1 == None` and must carry a tag.
#[derive(Clone, Debug)]
pub struct Facet {
    /// Vertex pair with `verts[0] < verts[1]`.
    pub verts: [usize; 2],
    /// Adjacent cells; interior facets have exactly two.
    pub cells: (usize, Option<usize>),
    pub tag: Option<BoundaryTag>,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Reference to a facet from a cell, with the outward-normal sign.
#[derive(Clone, Copy, Debug)]
pub struct FacetUse {
    pub facet: usize,
    /// +1 if the cell's outward normal equals the global facet normal.
    pub sign: f64,
}

/// Affine map from the reference triangle {(0,0),(1,0),(0,1)} to a cell.
#[derive(Clone, Copy, Debug)]
pub struct CellMap {
    /// Columns are the edge vectors v1-v0 and v2-v0.
    pub a: [[f64; 2]; 2],
    pub origin: [f64; 2],
    pub det: f64,
}

impl CellMap {
    pub fn to_physical(&self, r: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.a[0][0] * r[0] + self.a[1][0] * r[1],
            self.origin[1] + self.a[0][1] * r[0] + self.a[1][1] * r[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            (self.a[1][1] * d[0] - self.a[1][0] * d[1]) / self.det,
            (-self.a[0][1] * d[0] + self.a[0][0] * d[1]) / self.det,
        ]
    }

    /// Contravariant Piola transform of a reference vector value.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            (self.a[0][0] * v[0] + self.a[1][0] * v[1]) / self.det,
            (self.a[0][1] * v[0] + self.a[1][1] * v[1]) / self.det,
        ]
    }

    /// Inverse Piola transform of a physical vector value: `det A^{-1} v`.
    pub fn piola_inv(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a[1][1] * v[0] - self.a[1][0] * v[1],
            -self.a[0][1] * v[0] + self.a[0][0] * v[1],
        ]
    }

    /// Covariant transform of a reference gradient: `A^{-T} g`.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            (self.a[1][1] * g[0] - self.a[0][1] * g[1]) / self.det,
            (-self.a[1][0] * g[0] + self.a[0][0] * g[1]) / self.det,
        ]
    }
}

/// Conforming triangular mesh. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    pub cell_facets: Vec<[FacetUse; 3]>,
    /// Maximum cell diameter.
    pub h: f64,
}

/// Per-side boundary tagging rule for structured rectangles.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryRule {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl BoundaryRule {
    /// Gamma_u on left and bottom, Gamma_p on top and right.
    pub fn flux_left_bottom() -> Self {
        BoundaryRule {
            left: BoundaryTag::GammaU,
            bottom: BoundaryTag::GammaU,
            right: BoundaryTag::GammaP,
            top: BoundaryTag::GammaP,
        }
    }
}

/// Rectangle extent for structured meshes.
#[derive(Clone, Copy, Debug)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn unit_square() -> Self {
        Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 }
    }
}

/// Triangulation pattern of each structured quad.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitPattern {
    /// Two triangles per quad, diagonal from lower-left to upper-right.
    Diagonal,
    /// Four triangles per quad meeting at the quad centre.
    Crossed,
}

impl Mesh {
    /// Build a mesh from vertices, CCW cells and a boundary tag table keyed
    /// by sorted vertex pairs. Derives facets, incidence and mesh size, and
    /// validates the construction invariants.
    pub fn from_cells(
        vertices: Vec<[f64; 2]>,
        cells: Vec<[usize; 3]>,
        tags: &BTreeMap<(usize, usize), BoundaryTag>,
    ) -> Result<Mesh> {
        let nv = vertices.len();
        for (c, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= nv {
                    return Err(Error::MeshValidation(format!(
                        "cell {c} references vertex {v} out of range {nv}"
                    )));
                }
            }
            let area = signed_area(&vertices, cell);
            if area <= 0.0 {
                return Err(Error::MeshValidation(format!(
                    "cell {c} has non-positive signed area {area:.3e}"
                )));
            }
        }

        // Collect facets keyed by sorted vertex pair.
        let mut facet_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut facets: Vec<Facet> = Vec::new();
        let mut cell_facets: Vec<[FacetUse; 3]> = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut uses = [FacetUse { facet: usize::MAX, sign: 0.0 }; 3];
            for i in 0..3 {
                let p = cell[(i + 1) % 3];
                let q = cell[(i + 2) % 3];
                let key = (p.min(q), p.max(q));
                let id = *facet_ids.entry(key).or_insert_with(|| {
                    facets.push(Facet { verts: [key.0, key.1], cells: (c, None), tag: None });
                    facets.len() - 1
                });
                let f = &mut facets[id];
                if f.cells.0 != c {
                    if f.cells.1.is_some() {
                        return Err(Error::MeshValidation(format!(
                            "facet ({},{}) adjacent to more than two cells",
                            key.0, key.1
                        )));
                    }
                    f.cells.1 = Some(c);
                }
                // Local traversal p -> q; global direction lo -> hi.
                let sign = if p < q { 1.0 } else { -1.0 };
                uses[i] = FacetUse { facet: id, sign };
            }
            cell_facets.push(uses);
        }

        // Apply boundary tags.
        for (&(a, b), &tag) in tags {
            match facet_ids.get(&(a, b)) {
                Some(&id) => {
                    if !facets[id].is_boundary() {
                        return Err(Error::MeshValidation(format!(
                            "facet ({a},{b}) is interior but carries a boundary tag"
                        )));
                    }
                    facets[id].tag = Some(tag);
                }
                None => {
                    return Err(Error::MeshValidation(format!(
                        "tagged facet ({a},{b}) does not exist"
                    )))
                }
            }
        }
        for f in &facets {
            if f.is_boundary() && f.tag.is_none() {
                return Err(Error::MeshValidation(format!(
                    "boundary facet ({},{}) has no tag",
                    f.verts[0], f.verts[1]
                )));
            }
        }

        let h = cells
            .iter()
            .map(|cell| cell_diameter(&vertices, cell))
            .fold(0.0, f64::max);

        Ok(Mesh { vertices, cells, facets, cell_facets, h })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn cell_map(&self, c: usize) -> CellMap {
        let [i, j, k] = self.cells[c];
        let v0 = self.vertices[i];
        let v1 = self.vertices[j];
        let v2 = self.vertices[k];
        let a = [[v1[0] - v0[0], v1[1] - v0[1]], [v2[0] - v0[0], v2[1] - v0[1]]];
        let det = a[0][0] * a[1][1] - a[1][0] * a[0][1];
        CellMap { a, origin: v0, det }
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        signed_area(&self.vertices, &self.cells[c])
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        cell_diameter(&self.vertices, &self.cells[c])
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].verts;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Unit global facet normal (direction lo->hi rotated by -90 degrees).
    pub fn facet_normal(&self, f: usize) -> [f64; 2] {
        let [a, b] = self.facets[f].verts;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let t = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [t[1] / len, -t[0] / len]
    }

    /// Point on facet `f` at arclength parameter `s` in [0,1] (from lo to hi).
    pub fn facet_point(&self, f: usize, s: f64) -> [f64; 2] {
        let [a, b] = self.facets[f].verts;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])]
    }

    pub fn boundary_facets(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.facets
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == Some(tag))
            .map(|(i, _)| i)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }
}

fn signed_area(vertices: &[[f64; 2]], cell: &[usize; 3]) -> f64 {
    let a = vertices[cell[0]];
    let b = vertices[cell[1]];
    let c = vertices[cell[2]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn cell_diameter(vertices: &[[f64; 2]], cell: &[usize; 3]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..3 {
        let p = vertices[cell[i]];
        let q = vertices[cell[(i + 1) % 3]];
        d = d.max(((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt());
    }
    d
}

/// Structured triangulation of a rectangle with per-side boundary tags.
pub fn structured_rectangle(
    nx: usize,
    ny: usize,
    extent: Rect,
    pattern: SplitPattern,
    rule: BoundaryRule,
) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("subdivision counts must be at least 1"));
    }
    if extent.x1 <= extent.x0 || extent.y1 <= extent.y0 {
        return Err(Error::invalid("rectangle extent must have positive side lengths"));
    }
    let dx = (extent.x1 - extent.x0) / nx as f64;
    let dy = (extent.y1 - extent.y0) / ny as f64;

    let grid = |i: usize, j: usize| -> [f64; 2] {
        // Exact endpoints keep boundary detection robust.
        let x = if i == nx { extent.x1 } else { extent.x0 + i as f64 * dx };
        let y = if j == ny { extent.y1 } else { extent.y0 + j as f64 * dy };
        [x, y]
    };

    let mut vertices = Vec::new();
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(grid(i, j));
        }
    }

    let mut cells = Vec::new();
    match pattern {
        SplitPattern::Diagonal => {
            for j in 0..ny {
                for i in 0..nx {
                    let s = vid(i, j);
                    let (a, b, c, d) = (s, s + 1, s + nx + 2, s + nx + 1);
                    cells.push([a, b, c]);
                    cells.push([a, c, d]);
                }
            }
        }
        SplitPattern::Crossed => {
            for j in 0..ny {
                for i in 0..nx {
                    let s = vid(i, j);
                    let (a, b, c, d) = (s, s + 1, s + nx + 2, s + nx + 1);
                    let centre = [
                        extent.x0 + (i as f64 + 0.5) * dx,
                        extent.y0 + (j as f64 + 0.5) * dy,
                    ];
                    vertices.push(centre);
                    let m = vertices.len() - 1;
                    cells.push([a, b, m]);
                    cells.push([b, c, m]);
                    cells.push([c, d, m]);
                    cells.push([d, a, m]);
                }
            }
        }
    }

    let mut tags = BTreeMap::new();
    for j in 0..ny {
        let l = (vid(0, j).min(vid(0, j + 1)), vid(0, j).max(vid(0, j + 1)));
        tags.insert(l, rule.left);
        let r = (vid(nx, j).min(vid(nx, j + 1)), vid(nx, j).max(vid(nx, j + 1)));
        tags.insert(r, rule.right);
    }
    for i in 0..nx {
        let b = (vid(i, 0).min(vid(i + 1, 0)), vid(i, 0).max(vid(i + 1, 0)));
        tags.insert(b, rule.bottom);
        let t = (vid(i, ny).min(vid(i + 1, ny)), vid(i, ny).max(vid(i + 1, ny)));
        tags.insert(t, rule.top);
    }

    Mesh::from_cells(vertices, cells, &tags)
}

/// Red refinement: each triangle splits into four similar triangles via edge
/// midpoints. Boundary tags are inherited by the child halves of each
/// boundary facet.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    // One new vertex per facet (edge midpoint), indexed by facet id.
    let mut midpoint = vec![0usize; mesh.n_facets()];
    for (f, facet) in mesh.facets.iter().enumerate() {
        let a = mesh.vertices[facet.verts[0]];
        let b = mesh.vertices[facet.verts[1]];
        vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        midpoint[f] = vertices.len() - 1;
    }

    let mut cells = Vec::with_capacity(4 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let [v0, v1, v2] = mesh.cells[c];
        // Local facet i is opposite local vertex i.
        let m0 = midpoint[mesh.cell_facets[c][0].facet]; // midpoint of (v1,v2)
        let m1 = midpoint[mesh.cell_facets[c][1].facet]; // midpoint of (v2,v0)
        let m2 = midpoint[mesh.cell_facets[c][2].facet]; // midpoint of (v0,v1)
        cells.push([v0, m2, m1]);
        cells.push([v1, m0, m2]);
        cells.push([v2, m1, m0]);
        cells.push([m0, m1, m2]);
    }

    let mut tags = BTreeMap::new();
    for (f, facet) in mesh.facets.iter().enumerate() {
        if let Some(tag) = facet.tag {
            let [a, b] = facet.verts;
            let m = midpoint[f];
            tags.insert((a.min(m), a.max(m)), tag);
            tags.insert((b.min(m), b.max(m)), tag);
        }
    }

    Mesh::from_cells(vertices, cells, &tags).expect("red refinement preserves validity")
}

/// Serialise a mesh in the `forchheimer-mesh v1` ASCII format.
pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("forchheimer-mesh v1\n");
    let _ = writeln!(out, "vertices {}", mesh.n_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.17e} {:.17e}", v[0], v[1]);
    }
    let _ = writeln!(out, "cells {}", mesh.n_cells());
    for c in &mesh.cells {
        let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
    }
    let tagged: Vec<&Facet> = mesh.facets.iter().filter(|f| f.tag.is_some()).collect();
    let _ = writeln!(out, "boundary {}", tagged.len());
    for f in tagged {
        let name = match f.tag.unwrap() {
            BoundaryTag::GammaU => "GAMMA_U",
            BoundaryTag::GammaP => "GAMMA_P",
        };
        let _ = writeln!(out, "{} {} {}", f.verts[0], f.verts[1], name);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a mesh from the `forchheimer-mesh v1` ASCII format.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text.lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        for (idx, raw) in lines.by_ref() {
            let s = raw.trim();
            if !s.is_empty() {
                return Ok((idx + 1, s.to_string()));
            }
        }
        Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {expect}") })
    };

    let (ln, header) = next_line("header")?;
    if header != "forchheimer-mesh v1" {
        return Err(Error::Parse { line: ln, msg: format!("bad header {header:?}") });
    }

    let parse_count = |line: usize, s: &str, key: &str| -> Result<usize> {
        let mut it = s.split_whitespace();
        match (it.next(), it.next(), it.next()) {
            (Some(k), Some(n), None) if k == key => n.parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("bad count in {s:?}"),
            }),
            _ => Err(Error::Parse { line, msg: format!("expected `{key} N`, got {s:?}") }),
        }
    };

    let (ln, s) = next_line("vertices")?;
    let nv = parse_count(ln, &s, "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, s) = next_line("vertex line")?;
        let vals: Vec<f64> = s.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        if vals.len() != 2 || s.split_whitespace().count() != 2 {
            return Err(Error::Parse { line: ln, msg: format!("expected `x y`, got {s:?}") });
        }
        vertices.push([vals[0], vals[1]]);
    }

    let (ln, s) = next_line("cells")?;
    let nc = parse_count(ln, &s, "cells")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, s) = next_line("cell line")?;
        let vals: Vec<usize> = s.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        if vals.len() != 3 || s.split_whitespace().count() != 3 {
            return Err(Error::Parse { line: ln, msg: format!("expected `i j k`, got {s:?}") });
        }
        cells.push([vals[0], vals[1], vals[2]]);
    }

    let (ln, s) = next_line("boundary")?;
    let nb = parse_count(ln, &s, "boundary")?;
    let mut tags = BTreeMap::new();
    for _ in 0..nb {
        let (ln, s) = next_line("boundary line")?;
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Parse { line: ln, msg: format!("expected `i j TAG`, got {s:?}") });
        }
        let a: usize = toks[0]
            .parse()
            .map_err(|_| Error::Parse { line: ln, msg: format!("bad index {:?}", toks[0]) })?;
        let b: usize = toks[1]
            .parse()
            .map_err(|_| Error::Parse { line: ln, msg: format!("bad index {:?}", toks[1]) })?;
        let tag = match toks[2] {
            "GAMMA_U" => BoundaryTag::GammaU,
            "GAMMA_P" => BoundaryTag::GammaP,
            other => {
                return Err(Error::Parse { line: ln, msg: format!("unknown tag {other:?}") })
            }
        };
        let key = (a.min(b), a.max(b));
        if tags.insert(key, tag).is_some() {
            return Err(Error::MeshValidation(format!(
                "facet ({},{}) tagged twice",
                key.0, key.1
            )));
        }
        let _ = ln;
    }

    Mesh::from_cells(vertices, cells, &tags)
}

/// Uniform-bin point locator over a mesh, used for inter-mesh transfer.
pub struct CellLocator<'a> {
    mesh: &'a Mesh,
    nx: usize,
    ny: usize,
    lo: [f64; 2],
    size: [f64; 2],
    bins: Vec<Vec<usize>>,
}

impl<'a> CellLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let n = (mesh.n_cells() as f64).sqrt().ceil() as usize;
        let (nx, ny) = (n.max(1), n.max(1));
        let size = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
        let mut bins = vec![Vec::new(); nx * ny];
        for c in 0..mesh.n_cells() {
            let mut blo = [usize::MAX; 2];
            let mut bhi = [0usize; 2];
            for &v in &mesh.cells[c] {
                let p = mesh.vertices[v];
                let bx = (((p[0] - lo[0]) / size[0] * nx as f64) as usize).min(nx - 1);
                let by = (((p[1] - lo[1]) / size[1] * ny as f64) as usize).min(ny - 1);
                blo[0] = blo[0].min(bx);
                blo[1] = blo[1].min(by);
                bhi[0] = bhi[0].max(bx);
                bhi[1] = bhi[1].max(by);
            }
            for by in blo[1]..=bhi[1] {
                for bx in blo[0]..=bhi[0] {
                    bins[by * nx + bx].push(c);
                }
            }
        }
        CellLocator { mesh, nx, ny, lo, size, bins }
    }

    /// Find a cell containing `p` and the reference coordinates within it.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let bx = (((p[0] - self.lo[0]) / self.size[0] * self.nx as f64) as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let by = (((p[1] - self.lo[1]) / self.size[1] * self.ny as f64) as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        const TOL: f64 = 1e-10;
        for &c in &self.bins[by * self.nx + bx] {
            let r = self.mesh.cell_map(c).to_reference(p);
            if r[0] >= -TOL && r[1] >= -TOL && r[0] + r[1] <= 1.0 + TOL {
                return Some((c, r));
            }
        }
        // Points on bin borders can land in a neighbouring bin.
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (qx, qy) = (bx as i64 + dx, by as i64 + dy);
                if qx < 0 || qy < 0 || qx >= self.nx as i64 || qy >= self.ny as i64 {
                    continue;
                }
                for &c in &self.bins[qy as usize * self.nx + qx as usize] {
                    let r = self.mesh.cell_map(c).to_reference(p);
                    if r[0] >= -TOL && r[1] >= -TOL && r[0] + r[1] <= 1.0 + TOL {
                        return Some((c, r));
                    }
                }
            }
        }
        None
    }
}
