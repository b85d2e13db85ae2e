//! Manufactured solutions and problem-data plumbing.

use std::sync::Arc;

use dfcore::forms::{Kappa, ModelParams};
use dfcore::nlsolve::ProblemData;

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// A manufactured solution with all callbacks needed to drive a solve and
/// measure errors against it.
pub struct ManufacturedSolution {
    pub u: VectorFn,
    pub div_u: ScalarFn,
    pub p: ScalarFn,
    pub f: VectorFn,
    pub g: ScalarFn,
    /// Outward flux `u . n` on the boundary of the unit square with
    /// Gamma_u on the left and bottom sides.
    pub boundary_flux: ScalarFn,
    pub provenance: &'static str,
}

/// Smooth trigonometric pair on the unit square:
/// `p = sin(pi x) cos(pi y)`, `u = (cos(pi x) sin(pi y), -sin(pi x) cos(pi y))`
/// (divergence free), with `f` consistent with the given parameters.
pub fn smooth_unit_square(params: &ModelParams) -> ManufacturedSolution {
    use std::f64::consts::PI;
    let u = |x: [f64; 2]| -> [f64; 2] {
        [
            (PI * x[0]).cos() * (PI * x[1]).sin(),
            -(PI * x[0]).sin() * (PI * x[1]).cos(),
        ]
    };
    let p = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).cos();
    let grad_p = |x: [f64; 2]| -> [f64; 2] {
        [
            PI * (PI * x[0]).cos() * (PI * x[1]).cos(),
            -PI * (PI * x[0]).sin() * (PI * x[1]).sin(),
        ]
    };
    let kappa = params.kappa.clone();
    let ff = params.forchheimer_f;
    let r = params.r;
    let f = move |x: [f64; 2]| -> [f64; 2] {
        let uv = u(x);
        let mag = (uv[0] * uv[0] + uv[1] * uv[1]).sqrt();
        let drag = ff * mag.powf(r - 2.0);
        let gp = grad_p(x);
        // kappa^{-1} u through the field to support tensor permeabilities.
        let ku = match &kappa {
            Kappa::Constant(c) => [uv[0] / c, uv[1] / c],
            Kappa::Scalar(k) => {
                let c = k(x);
                [uv[0] / c, uv[1] / c]
            }
            Kappa::Tensor(k) => {
                let m = k(x);
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                [
                    (m[1][1] * uv[0] - m[0][1] * uv[1]) / det,
                    (-m[1][0] * uv[0] + m[0][0] * uv[1]) / det,
                ]
            }
        };
        [ku[0] + drag * uv[0] + gp[0], ku[1] + drag * uv[1] + gp[1]]
    };
    let flux = move |x: [f64; 2]| -> f64 {
        let v = u(x);
        if x[0].abs() < 1e-12 {
            -v[0] // left side, n = (-1, 0)
        } else {
            -v[1] // bottom side, n = (0, -1)
        }
    };
    ManufacturedSolution {
        u: Arc::new(u),
        div_u: Arc::new(|_| 0.0),
        p: Arc::new(p),
        f: Arc::new(f),
        g: Arc::new(|_| 0.0),
        boundary_flux: Arc::new(flux),
        provenance: "trigonometric divergence-free pair on the unit square",
    }
}

impl ManufacturedSolution {
    pub fn problem_data(&self) -> ProblemData {
        ProblemData {
            f: self.f.clone(),
            g: self.g.clone(),
            boundary_flux: self.boundary_flux.clone(),
            pressure_head: self.p.clone(),
        }
    }

    /// Verify `f = kappa^{-1} u + F |u|^{r-2} u + grad p` and `g = div u` at
    /// sample points, with gradients and divergences taken by five-point
    /// finite differences (independent of the analytic formulas).
    pub fn self_check(&self, params: &ModelParams, tol: f64) -> Result<(), String> {
        let h = 1e-3;
        let d5 = |f: &dyn Fn(f64) -> f64| -> f64 {
            (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h)
        };
        // Deterministic low-discrepancy-ish sample points in (0.1, 0.9)^2.
        let mut worst = 0.0f64;
        for i in 0..40 {
            let x = [
                0.1 + 0.8 * (((i * 37) % 83) as f64 / 83.0),
                0.1 + 0.8 * (((i * 53 + 11) % 97) as f64 / 97.0),
            ];
            let p = &self.p;
            let gp = [
                d5(&|t| p([x[0] + t, x[1]])),
                d5(&|t| p([x[0], x[1] + t])),
            ];
            let u = &self.u;
            let div = d5(&|t| u([x[0] + t, x[1]])[0]) + d5(&|t| u([x[0], x[1] + t])[1]);
            let uv = u(x);
            let mag = (uv[0] * uv[0] + uv[1] * uv[1]).sqrt();
            let drag = params.forchheimer_f * mag.powf(params.r - 2.0);
            let ku = match &params.kappa {
                Kappa::Constant(c) => [uv[0] / c, uv[1] / c],
                Kappa::Scalar(k) => {
                    let c = k(x);
                    [uv[0] / c, uv[1] / c]
                }
                Kappa::Tensor(k) => {
                    let m = k(x);
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    [
                        (m[1][1] * uv[0] - m[0][1] * uv[1]) / det,
                        (-m[1][0] * uv[0] + m[0][0] * uv[1]) / det,
                    ]
                }
            };
            let fv = (self.f)(x);
            let scale = 1.0 + fv[0].abs().max(fv[1].abs());
            let res = [
                (ku[0] + drag * uv[0] + gp[0] - fv[0]).abs() / scale,
                (ku[1] + drag * uv[1] + gp[1] - fv[1]).abs() / scale,
            ];
            let gres = (div - (self.g)(x)).abs();
            worst = worst.max(res[0]).max(res[1]).max(gres);
        }
        if worst > tol {
            return Err(format!("manufactured-solution self-check residual {worst:.3e}"));
        }
        Ok(())
    }
}

/// Heterogeneous Ex.2 permeability `kappa0 (1 + exp(-[10y - 5 - sin(10x)]^2 / 2))`.
pub fn heterogeneous_kappa_ex2(kappa0: f64) -> Kappa {
    Kappa::Scalar(Arc::new(move |x: [f64; 2]| {
        kappa0 * (1.0 + (-0.5 * (10.0 * x[1] - 5.0 - (10.0 * x[0]).sin()).powi(2)).exp())
    }))
}

/// Anisotropic Ex.3 permeability: principal values `5e-10 / nu` and
/// `1e-10 / nu` with `nu = 1e-6`, rotated by 0.082 rad.
pub fn tensor_kappa_ex3() -> Kappa {
    let (k1, k2) = (5e-10 / 1e-6, 1e-10 / 1e-6);
    let theta: f64 = 0.082;
    let (c, s) = (theta.cos(), theta.sin());
    let m = [
        [c * c * k1 + s * s * k2, c * s * (k1 - k2)],
        [c * s * (k1 - k2), s * s * k1 + c * c * k2],
    ];
    Kappa::Tensor(Arc::new(move |_| m))
}

/// Largest principal permeability of the Ex.3 tensor.
pub fn kappa_max_ex3() -> f64 {
    5e-10 / 1e-6
}
