//! Result serialisation: error/rate CSV tables, condition-number tables,
//! JSON reports and legacy-ASCII VTK field dumps.

use std::fmt::Write as _;
use std::path::Path;

use dfcore::fespace::FeFunction;
use dfcore::norms::ErrorReport;

fn fmt_rate(r: &Option<f64>) -> String {
    match r {
        Some(v) => format!("{v:.3}"),
        None => "*".to_string(),
    }
}

/// Per-level error table, errors in scientific notation with three
/// significant digits; the first rate column entry is starred.
pub fn errors_csv(report: &ErrorReport, weighted: bool) -> String {
    let mut s = String::new();
    if weighted {
        s.push_str("level,h,n_dofs,err_u,rate_u,err_p,rate_p,err_u_weighted,rate_u_weighted,err_p_weighted,rate_p_weighted,div_residual_inf,newton_iters\n");
    } else {
        s.push_str("level,h,n_dofs,err_u,rate_u,err_p,rate_p,div_residual_inf,newton_iters\n");
    }
    for (i, l) in report.levels.iter().enumerate() {
        let _ = write!(
            s,
            "{},{:.6},{},{:.2e},{},{:.2e},{}",
            i,
            l.h,
            l.n_dofs,
            l.err_u,
            fmt_rate(&report.rates_u[i]),
            l.err_p,
            fmt_rate(&report.rates_p[i]),
        );
        if weighted {
            let _ = write!(
                s,
                ",{:.2e},{},{:.2e},{}",
                l.err_u_weighted.unwrap_or(f64::NAN),
                fmt_rate(&report.rates_u_weighted[i]),
                l.err_p_weighted.unwrap_or(f64::NAN),
                fmt_rate(&report.rates_p_weighted[i]),
            );
        }
        let _ = writeln!(s, ",{:.2e},{}", l.div_residual_inf, l.newton_iters);
    }
    s
}

/// Rate table alone (one row per consecutive level pair).
pub fn rates_csv(report: &ErrorReport) -> String {
    let mut s = String::from("pair,rate_u,rate_p,rate_u_weighted,rate_p_weighted\n");
    for i in 1..report.levels.len() {
        let _ = writeln!(
            s,
            "{}-{},{},{},{},{}",
            i - 1,
            i,
            fmt_rate(&report.rates_u[i]),
            fmt_rate(&report.rates_p[i]),
            fmt_rate(&report.rates_u_weighted[i]),
            fmt_rate(&report.rates_p_weighted[i]),
        );
    }
    s
}

/// Full-precision JSON report of an error study.
pub fn report_json(report: &ErrorReport, meta: serde_json::Value) -> String {
    let levels: Vec<serde_json::Value> = report
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::json!({
                "level": i,
                "h": l.h,
                "n_dofs": l.n_dofs,
                "err_u": l.err_u,
                "err_p": l.err_p,
                "err_u_weighted": l.err_u_weighted,
                "err_p_weighted": l.err_p_weighted,
                "div_residual_inf": l.div_residual_inf,
                "newton_iters": l.newton_iters,
                "rate_u": report.rates_u[i],
                "rate_p": report.rates_p[i],
                "rate_u_weighted": report.rates_u_weighted[i],
                "rate_p_weighted": report.rates_p_weighted[i],
            })
        })
        .collect();
    let doc = serde_json::json!({ "meta": meta, "levels": levels });
    serde_json::to_string_pretty(&doc).expect("report serialises")
}

/// One cell of the ex4 condition-number grid.
#[derive(Clone, Debug)]
pub struct CondRecord {
    pub r: f64,
    pub kappa: f64,
    pub forchheimer_f: f64,
    pub h_nominal: f64,
    pub cond: Option<f64>,
    pub error: Option<String>,
}

/// Condition table in the papers' layout: one row per (r, kappa, F), one
/// column per nominal mesh size.
pub fn cond_csv(records: &[CondRecord], hs: &[f64]) -> String {
    let mut s = String::from("r,kappa,F");
    for h in hs {
        let _ = write!(s, ",cond_h={h}");
    }
    s.push('\n');
    let mut keys: Vec<(f64, f64, f64)> = records
        .iter()
        .map(|c| (c.r, c.kappa, c.forchheimer_f))
        .collect();
    keys.dedup();
    for (r, kappa, ff) in keys {
        let _ = write!(s, "{r},{kappa:e},{ff:e}");
        for h in hs {
            let rec = records.iter().find(|c| {
                c.r == r && c.kappa == kappa && c.forchheimer_f == ff && c.h_nominal == *h
            });
            match rec {
                Some(CondRecord { cond: Some(v), .. }) => {
                    let _ = write!(s, ",{v:.2}");
                }
                Some(CondRecord { error: Some(e), .. }) => {
                    let _ = write!(s, ",error:{}", e.replace(',', ";"));
                }
                _ => {
                    let _ = write!(s, ",");
                }
            }
        }
        s.push('\n');
    }
    s
}

pub fn cond_json(records: &[CondRecord], variant: &str) -> String {
    let rows: Vec<serde_json::Value> = records
        .iter()
        .map(|c| {
            serde_json::json!({
                "r": c.r,
                "kappa": c.kappa,
                "F": c.forchheimer_f,
                "h": c.h_nominal,
                "cond": c.cond,
                "error": c.error,
            })
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "variant": variant,
        "cells": rows,
    }))
    .expect("serialises")
}

/// Legacy ASCII VTK dump of cellwise velocity magnitude and pressure.
pub fn write_vtk(
    path: &Path,
    u: &FeFunction,
    p: &FeFunction,
) -> std::io::Result<()> {
    let mesh = &u.space.mesh;
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("darcy-forchheimer fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.9e} {:.9e} 0.0", v[0], v[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.n_cells(), 4 * mesh.n_cells());
    for c in &mesh.cells {
        let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_cells());
    for _ in 0..mesh.n_cells() {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {}", mesh.n_cells());
    s.push_str("SCALARS velocity_magnitude double 1\nLOOKUP_TABLE default\n");
    let centroid = [1.0 / 3.0, 1.0 / 3.0];
    for c in 0..mesh.n_cells() {
        let v = u.eval_vector(c, centroid);
        let _ = writeln!(s, "{:.9e}", (v[0] * v[0] + v[1] * v[1]).sqrt());
    }
    s.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for c in 0..mesh.n_cells() {
        let _ = writeln!(s, "{:.9e}", p.eval_scalar(c, centroid));
    }
    std::fs::write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfcore::norms::LevelRecord;

    #[test]
    fn csv_row_count_matches_levels() {
        let levels = vec![
            LevelRecord { h: 0.5, n_dofs: 10, err_u: 4.0, err_p: 2.0, ..Default::default() },
            LevelRecord { h: 0.25, n_dofs: 40, err_u: 1.0, err_p: 0.5, ..Default::default() },
        ];
        let report = ErrorReport::from_levels(levels).unwrap();
        let csv = errors_csv(&report, false);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().contains("*"));
        assert!(csv.lines().nth(2).unwrap().contains("2.000"));
    }

    #[test]
    fn json_round_trips_levels() {
        let levels = vec![
            LevelRecord { h: 0.5, n_dofs: 10, err_u: 4.0, err_p: 2.0, ..Default::default() },
            LevelRecord { h: 0.25, n_dofs: 40, err_u: 1.0, err_p: 0.5, ..Default::default() },
        ];
        let report = ErrorReport::from_levels(levels).unwrap();
        let text = report_json(&report, serde_json::json!({"experiment": "test"}));
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["levels"].as_array().unwrap().len(), 2);
        assert_eq!(doc["levels"][1]["rate_u"].as_f64().unwrap(), 2.0);
        assert_eq!(doc["levels"][0]["h"].as_f64().unwrap(), 0.5);
    }
}
