//! Gaussian quadrature on the reference triangle and the reference edge.
//!
//! Triangle rules of degree 1 and 2 are the classic centroid and three-point
//! rules; higher degrees use the conical (collapsed-coordinate) product of a
//! Gauss-Legendre rule in the first coordinate with a Gauss-Jacobi rule
//! (weight `1-eta`) in the second. All weights are strictly positive, which
//! keeps quadrature-discretised monotone terms monotone.
//!
//! Nodes and weights come from the Golub-Welsch eigenvalue method applied to
//! the Jacobi matrix of the respective orthogonal polynomial family.

use faer::Mat;

use crate::error::{Error, Result};

pub const MAX_TRIANGLE_DEGREE: usize = 10;
pub const MAX_EDGE_DEGREE: usize = 15;

/// Quadrature rule on the reference triangle {(0,0),(1,0),(0,1)}.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Quadrature rule on the reference edge [0,1].
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Gauss nodes/weights via eigendecomposition of the symmetric tridiagonal
/// Jacobi matrix. `diag`/`off` are the three-term recurrence coefficients,
/// `mu0` the total mass of the weight function.
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut j = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let evd = j
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("tridiagonal eigendecomposition cannot fail");
    let s = evd.S();
    let u = evd.U();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (s[i], mu0 * u[(0, i)] * u[(0, i)]))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

/// `n`-point Gauss-Legendre rule on [0,1]; exact for degree `2n-1`.
fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * k / (4.0 * k * k - 1.0)).sqrt()
        })
        .collect();
    let (x, w) = golub_welsch(&diag, &off, 2.0);
    (
        x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|&v| 0.5 * v).collect(),
    )
}

/// `n`-point Gauss-Jacobi rule on [0,1] with weight `(1-t)`; exact for
/// degree `2n-1` against that weight.
fn gauss_jacobi_alpha1_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Recurrence coefficients for (1-x)^1 (1+x)^0 on [-1,1].
    let diag: Vec<f64> = (0..n)
        .map(|k| {
            let k = k as f64;
            -1.0 / ((2.0 * k + 1.0) * (2.0 * k + 3.0))
        })
        .collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * (k + 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 1.0))).sqrt()
        })
        .collect();
    let (x, w) = golub_welsch(&diag, &off, 2.0);
    // Map [-1,1] -> [0,1]; the weight (1-x) picks up a factor 1/2 on top of
    // the dx factor 1/2.
    (
        x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|&v| 0.25 * v).collect(),
    )
}

/// Symmetric positive rule on the reference triangle, exact for polynomials
/// of total degree at most `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    if degree == 0 || degree > MAX_TRIANGLE_DEGREE {
        return Err(Error::invalid(format!(
            "triangle quadrature degree must be in 1..={MAX_TRIANGLE_DEGREE}, got {degree}"
        )));
    }
    match degree {
        1 => Ok(TriangleRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exact_degree: 1,
        }),
        2 => Ok(TriangleRule {
            points: vec![
                [1.0 / 6.0, 1.0 / 6.0],
                [2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0],
            ],
            weights: vec![1.0 / 6.0; 3],
            exact_degree: 2,
        }),
        d => {
            let m = (d + 1).div_ceil(2);
            let (xi, wi) = gauss_legendre_01(m);
            let (eta, vj) = gauss_jacobi_alpha1_01(m);
            let mut points = Vec::with_capacity(m * m);
            let mut weights = Vec::with_capacity(m * m);
            for j in 0..m {
                for i in 0..m {
                    points.push([xi[i] * (1.0 - eta[j]), eta[j]]);
                    weights.push(wi[i] * vj[j]);
                }
            }
            Ok(TriangleRule { points, weights, exact_degree: d })
        }
    }
}

/// Gauss-Legendre rule on the reference edge [0,1], exact for `degree`.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree == 0 || degree > MAX_EDGE_DEGREE {
        return Err(Error::invalid(format!(
            "edge quadrature degree must be in 1..={MAX_EDGE_DEGREE}, got {degree}"
        )));
    }
    let m = (degree + 2) / 2; // ceil((degree+1)/2)
    let (points, weights) = gauss_legendre_01(m);
    Ok(EdgeRule { points, weights, exact_degree: degree })
}

/// Closed-form integral of `x^a y^b` over the reference triangle.
pub fn monomial_integral_triangle(a: u32, b: u32) -> f64 {
    // a! b! / (a+b+2)!
    let mut num = 1.0f64;
    for k in 1..=a {
        num *= k as f64;
    }
    for k in 1..=b {
        num *= k as f64;
    }
    let mut den = 1.0f64;
    for k in 1..=(a + b + 2) {
        den *= k as f64;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply_triangle(rule: &TriangleRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }

    #[test]
    fn degree_one_is_centroid() {
        let r = triangle_rule(1).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!((r.points[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degree_two_three_points() {
        let r = triangle_rule(2).unwrap();
        assert_eq!(r.points.len(), 3);
        let v = apply_triangle(&r, |x, y| x * x + y * y);
        assert!((v - 1.0 / 6.0).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn degree_six_cubic_quadratic_cross_term() {
        let r = triangle_rule(6).unwrap();
        let v = apply_triangle(&r, |x, y| x.powi(3) * y.powi(2));
        let exact = monomial_integral_triangle(3, 2);
        assert!((v - exact).abs() < 1e-13, "got {v}, exact {exact}");
    }

    #[test]
    fn exactness_all_monomials_up_to_degree() {
        for d in 1..=MAX_TRIANGLE_DEGREE {
            let r = triangle_rule(d).unwrap();
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let v = apply_triangle(&r, |x, y| x.powi(a as i32) * y.powi(b as i32));
                    let exact = monomial_integral_triangle(a, b);
                    assert!(
                        (v - exact).abs() < 1e-12,
                        "degree {d}: x^{a} y^{b} -> {v}, exact {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn weights_positive_and_sum_to_area() {
        for d in 1..=MAX_TRIANGLE_DEGREE {
            let r = triangle_rule(d).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let s: f64 = r.weights.iter().sum();
            assert!((s - 0.5).abs() < 1e-14);
        }
        for d in 1..=MAX_EDGE_DEGREE {
            let r = edge_rule(d).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_rules_match_closed_forms() {
        let r1 = edge_rule(1).unwrap();
        assert_eq!(r1.points.len(), 1);
        assert!((r1.points[0] - 0.5).abs() < 1e-15);

        let r3 = edge_rule(3).unwrap();
        assert_eq!(r3.points.len(), 2);
        let v: f64 = r3.points.iter().zip(&r3.weights).map(|(t, w)| w * t.powi(3)).sum();
        assert!((v - 0.25).abs() < 1e-15);

        let r5 = edge_rule(5).unwrap();
        assert_eq!(r5.points.len(), 3);
        let v: f64 = r5.points.iter().zip(&r5.weights).map(|(t, w)| w * t.powi(5)).sum();
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn edge_exactness_to_declared_degree() {
        for d in 1..=MAX_EDGE_DEGREE {
            let r = edge_rule(d).unwrap();
            for p in 0..=d as u32 {
                let v: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(p as i32)).sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!((v - exact).abs() < 1e-13, "degree {d}: t^{p} -> {v}");
            }
        }
    }

    #[test]
    fn out_of_range_degrees_rejected() {
        assert!(triangle_rule(0).is_err());
        assert!(triangle_rule(MAX_TRIANGLE_DEGREE + 1).is_err());
        assert!(edge_rule(0).is_err());
        assert!(edge_rule(MAX_EDGE_DEGREE + 1).is_err());
    }
}
