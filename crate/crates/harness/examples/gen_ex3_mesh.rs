//! Regenerates the shipped obstacle mesh for the filtration experiment:
//! a structured triangulation of the square domain with seven circular
//! obstacles and quarter-circle inlet/outlet cuts removed, and the cut
//! boundaries snapped onto the circles.
//!
//!     cargo run --example gen_ex3_mesh -- [n] [out-path]

use std::collections::BTreeMap;

use dfcore::mesh::{save_mesh, BoundaryTag, Mesh};
use dfsolve::experiments::ex3::{INLET_RADIUS, OBSTACLES, OUTLET_RADIUS, SIDE};

struct Disk {
    centre: [f64; 2],
    radius: f64,
}

fn disks() -> Vec<Disk> {
    OBSTACLES
        .iter()
        .map(|(c, r)| Disk { centre: [c[0] * SIDE, c[1] * SIDE], radius: r * SIDE })
        .collect()
}

fn inside(d: &Disk, p: [f64; 2]) -> bool {
    let dx = p[0] - d.centre[0];
    let dy = p[1] - d.centre[1];
    dx * dx + dy * dy < d.radius * d.radius
}

/// Corner fillets: the inlet/outlet arcs are tangent to the walls, cutting
/// the sliver between the corner and the arc out of the domain.
struct Fillet {
    centre: [f64; 2],
    radius: f64,
    corner: [f64; 2],
}

fn fillets() -> [Fillet; 2] {
    [
        Fillet {
            centre: [INLET_RADIUS, INLET_RADIUS],
            radius: INLET_RADIUS,
            corner: [0.0, 0.0],
        },
        Fillet {
            centre: [SIDE - OUTLET_RADIUS, SIDE - OUTLET_RADIUS],
            radius: OUTLET_RADIUS,
            corner: [SIDE, SIDE],
        },
    ]
}

impl Fillet {
    /// Inside the removed corner sliver: within the corner quadrant but
    /// outside the fillet disk.
    fn in_sliver(&self, p: [f64; 2]) -> bool {
        let qx = (p[0] - self.centre[0]) * (self.corner[0] - self.centre[0]) > 0.0;
        let qy = (p[1] - self.centre[1]) * (self.corner[1] - self.centre[1]) > 0.0;
        if !(qx && qy) {
            return false;
        }
        let dx = p[0] - self.centre[0];
        let dy = p[1] - self.centre[1];
        dx * dx + dy * dy > self.radius * self.radius
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(48);
    let out = args
        .get(2)
        .cloned()
        .unwrap_or_else(|| "crates/harness/assets/ex3_obstacles.txt".to_string());

    let holes = disks();
    let cuts = fillets();
    let h = SIDE / n as f64;

    // Structured grid vertices, then crossed triangles per quad.
    let mut vertices = Vec::new();
    let vid = |i: usize, j: usize| j * (n + 1) + i;
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut cells: Vec<[usize; 3]> = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            let m = vertices.len() - 1;
            cells.push([a, b, m]);
            cells.push([b, c, m]);
            cells.push([c, d, m]);
            cells.push([d, a, m]);
        }
    }

    // Keep cells whose centroid lies outside every obstacle and sliver.
    let keep: Vec<[usize; 3]> = cells
        .into_iter()
        .filter(|cell| {
            let cx = (vertices[cell[0]][0] + vertices[cell[1]][0] + vertices[cell[2]][0]) / 3.0;
            let cy = (vertices[cell[0]][1] + vertices[cell[1]][1] + vertices[cell[2]][1]) / 3.0;
            !holes.iter().any(|d| inside(d, [cx, cy]))
                && !cuts.iter().any(|f| f.in_sliver([cx, cy]))
        })
        .collect();

    // Snap remaining vertices that fall inside a hole onto its circle.
    let mut used = vec![false; vertices.len()];
    for cell in &keep {
        for &v in cell {
            used[v] = true;
        }
    }
    for (vi, v) in vertices.iter_mut().enumerate() {
        if !used[vi] {
            continue;
        }
        for d in &holes {
            if inside(d, *v) {
                let dx = v[0] - d.centre[0];
                let dy = v[1] - d.centre[1];
                let len = (dx * dx + dy * dy).sqrt().max(1e-12 * d.radius);
                v[0] = d.centre[0] + dx / len * d.radius;
                v[1] = d.centre[1] + dy / len * d.radius;
                v[0] = v[0].clamp(0.0, SIDE);
                v[1] = v[1].clamp(0.0, SIDE);
            }
        }
        for f in &cuts {
            if f.in_sliver(*v) {
                let dx = v[0] - f.centre[0];
                let dy = v[1] - f.centre[1];
                let len = (dx * dx + dy * dy).sqrt().max(1e-12 * f.radius);
                v[0] = f.centre[0] + dx / len * f.radius;
                v[1] = f.centre[1] + dy / len * f.radius;
                v[0] = v[0].clamp(0.0, SIDE);
                v[1] = v[1].clamp(0.0, SIDE);
            }
        }
    }

    // Compact vertex numbering.
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut new_vertices = Vec::new();
    for (vi, v) in vertices.iter().enumerate() {
        if used[vi] {
            remap[vi] = new_vertices.len();
            new_vertices.push(*v);
        }
    }
    let mut new_cells: Vec<[usize; 3]> = keep
        .iter()
        .map(|c| [remap[c[0]], remap[c[1]], remap[c[2]]])
        .collect();

    // Drop cells degenerated by snapping.
    new_cells.retain(|c| {
        let a = new_vertices[c[0]];
        let b = new_vertices[c[1]];
        let d = new_vertices[c[2]];
        let area = 0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]));
        area > 0.2 * h * h
    });

    // Derive boundary facets from the kept cells and tag them: the outlet
    // arc carries the pressure condition, everything else is a flux wall.
    let mut facet_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for c in &new_cells {
        for e in 0..3 {
            let p = c[(e + 1) % 3];
            let q = c[(e + 2) % 3];
            *facet_count.entry((p.min(q), p.max(q))).or_insert(0) += 1;
        }
    }
    let mut tags = BTreeMap::new();
    for (&(a, b), &count) in &facet_count {
        if count == 1 {
            let mid = [
                0.5 * (new_vertices[a][0] + new_vertices[b][0]),
                0.5 * (new_vertices[a][1] + new_vertices[b][1]),
            ];
            // After the fillet cut, boundary facets with midpoints strictly
            // inside the outlet corner quadrant lie on the outlet arc.
            let tag = if mid[0] > SIDE - OUTLET_RADIUS && mid[1] > SIDE - OUTLET_RADIUS {
                BoundaryTag::GammaP
            } else {
                BoundaryTag::GammaU
            };
            tags.insert((a, b), tag);
        }
    }

    let mesh = Mesh::from_cells(new_vertices, new_cells, &tags).expect("valid obstacle mesh");
    let n_gp = mesh.boundary_facets(BoundaryTag::GammaP).count();
    let n_gu = mesh.boundary_facets(BoundaryTag::GammaU).count();
    println!(
        "mesh: {} vertices, {} cells, {} facets ({} Gamma_p, {} Gamma_u), h = {:.5}",
        mesh.n_vertices(),
        mesh.n_cells(),
        mesh.n_facets(),
        n_gp,
        n_gu,
        mesh.h
    );
    assert!(n_gp > 0, "outlet must be tagged");
    save_mesh(&mesh, std::path::Path::new(&out)).expect("write mesh");
    println!("written to {out}");
}
