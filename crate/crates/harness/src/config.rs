//! Experiment configuration: JSON schema and defaults.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Custom,
}

/// Permeability specification: a constant, or one of the named fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KappaSpec {
    Constant(f64),
    Named(String),
}

impl KappaSpec {
    pub const HETEROGENEOUS_EX2: &'static str = "heterogeneous-ex2";
    pub const TENSOR_EX3: &'static str = "tensor-ex3";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsConfig {
    pub kappa: KappaSpec,
    #[serde(rename = "F")]
    pub forchheimer_f: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iters: usize,
    /// Backtracking factor in (0, 1]; absent means full Newton steps.
    pub damping: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol_abs: 1e-8, tol_rel: 1e-8, max_iters: 25, damping: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondVariantConfig {
    Intersection,
    Scaled,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureModeConfig {
    SumOfInverses,
    Canonical,
}

/// State around which the tangent is linearised in `ex4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearisationState {
    /// The initial Newton iterate (zero free dofs).
    Zero,
    /// The Darcy (F = 0) solve.
    Darcy,
    /// The converged Newton solution.
    Converged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecondConfig {
    pub variant: PrecondVariantConfig,
    pub pressure_mode: PressureModeConfig,
    #[serde(default = "default_state")]
    pub linearisation_state: LinearisationState,
}

fn default_state() -> LinearisationState {
    LinearisationState::Zero
}

impl Default for PrecondConfig {
    fn default() -> Self {
        PrecondConfig {
            variant: PrecondVariantConfig::Intersection,
            pressure_mode: PressureModeConfig::SumOfInverses,
            linearisation_state: LinearisationState::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "results".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub degree: usize,
    pub levels: usize,
    pub params: ParamsConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub precond: PrecondConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn default_for(experiment: ExperimentKind, degree: usize, levels: usize) -> Self {
        let params = match experiment {
            ExperimentKind::Ex1 | ExperimentKind::Custom => ParamsConfig {
                kappa: KappaSpec::Constant(1.0),
                forchheimer_f: 1.0,
                r: 3.5,
            },
            ExperimentKind::Ex2 => ParamsConfig {
                kappa: KappaSpec::Named(KappaSpec::HETEROGENEOUS_EX2.into()),
                forchheimer_f: 1e4,
                r: 3.5,
            },
            ExperimentKind::Ex3 => ParamsConfig {
                kappa: KappaSpec::Named(KappaSpec::TENSOR_EX3.into()),
                forchheimer_f: 1e3,
                r: 3.0,
            },
            ExperimentKind::Ex4 => ParamsConfig {
                kappa: KappaSpec::Constant(1.0),
                forchheimer_f: 1.0,
                r: 3.0,
            },
        };
        let solver = match experiment {
            ExperimentKind::Ex2 | ExperimentKind::Ex3 => SolverConfig {
                damping: Some(0.5),
                max_iters: 40,
                ..Default::default()
            },
            _ => SolverConfig::default(),
        };
        ExperimentConfig {
            experiment,
            degree,
            levels,
            params,
            solver,
            precond: PrecondConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        for kind in [
            ExperimentKind::Ex1,
            ExperimentKind::Ex2,
            ExperimentKind::Ex3,
            ExperimentKind::Ex4,
        ] {
            let c = ExperimentConfig::default_for(kind, 0, 5);
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(c, back);
        }
    }

    #[test]
    fn kappa_spec_parses_number_and_name() {
        let text = r#"{
            "experiment": "ex2", "degree": 0, "levels": 3,
            "params": {"kappa": "heterogeneous-ex2", "F": 1e4, "r": 3.5}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.params.kappa, KappaSpec::Named("heterogeneous-ex2".into()));
        let text = r#"{
            "experiment": "ex1", "degree": 1, "levels": 4,
            "params": {"kappa": 1e-8, "F": 1.0, "r": 3.0}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.params.kappa, KappaSpec::Constant(1e-8));
        assert_eq!(c.solver.tol_abs, 1e-8);
    }
}
