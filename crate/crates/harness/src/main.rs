//! `dfsolve`: mixed finite element solver for the Darcy-Forchheimer
//! equations with convergence and preconditioner-robustness experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dfsolve::config::{
    ExperimentConfig, ExperimentKind, LinearisationState, PrecondVariantConfig,
};
use dfsolve::experiments::{ex1, ex2, ex3, ex4};
use dfcore::mesh::SplitPattern;

#[derive(Parser)]
#[command(name = "dfsolve", about = "Darcy-Forchheimer mixed FEM experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Ex1,
    Ex2,
    Ex3,
    Ex4,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Crossed,
    Diagonal,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecondArg {
    Intersection,
    Scaled,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    Zero,
    Darcy,
    Converged,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence or application experiment.
    Run {
        #[arg(long, value_enum, default_value = "ex1")]
        experiment: ExperimentArg,
        #[arg(long, default_value_t = 0)]
        degree: usize,
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// JSON configuration file; its fields override the flags above.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Structured triangulation pattern for ex1/custom.
        #[arg(long, value_enum, default_value = "crossed")]
        pattern: PatternArg,
    },
    /// Estimate condition numbers of the preconditioned tangent over the
    /// default (r, kappa, F, h) grid.
    Cond {
        #[arg(long, value_enum, default_value = "intersection")]
        precond: PrecondArg,
        #[arg(long, default_value = "default")]
        grid: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// State around which the tangent is linearised.
        #[arg(long, value_enum, default_value = "zero")]
        state: StateArg,
        /// Also dump the preconditioned spectrum of each grid cell.
        #[arg(long, default_value_t = false)]
        spectra: bool,
    },
}

fn experiment_kind(arg: ExperimentArg) -> ExperimentKind {
    match arg {
        ExperimentArg::Ex1 => ExperimentKind::Ex1,
        ExperimentArg::Ex2 => ExperimentKind::Ex2,
        ExperimentArg::Ex3 => ExperimentKind::Ex3,
        ExperimentArg::Ex4 => ExperimentKind::Ex4,
        ExperimentArg::Custom => ExperimentKind::Custom,
    }
}

fn run() -> Result<(), String> {
    dfsolve::configure_determinism();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { experiment, degree, levels, out, config, pattern } => {
            let kind = experiment_kind(experiment);
            let mut cfg = ExperimentConfig::default_for(kind, degree, levels);
            if let Some(path) = config {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| format!("reading {}: {e}", path.display()))?;
                cfg = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;
            }
            cfg.output.dir = out.to_string_lossy().to_string();
            let out_dir = PathBuf::from(&cfg.output.dir);
            match cfg.experiment {
                ExperimentKind::Ex1 | ExperimentKind::Custom => {
                    let pat = match pattern {
                        PatternArg::Crossed => SplitPattern::Crossed,
                        PatternArg::Diagonal => SplitPattern::Diagonal,
                    };
                    let result = ex1::run_and_emit(&cfg, pat, &out_dir)
                        .map_err(|e| e.to_string())?;
                    print_error_table(&result.report);
                }
                ExperimentKind::Ex2 => {
                    let result = ex2::run_and_emit(&cfg, &out_dir).map_err(|e| e.to_string())?;
                    print_error_table(&result.report);
                }
                ExperimentKind::Ex3 => {
                    let result = ex3::run_and_emit(&cfg, &out_dir).map_err(|e| e.to_string())?;
                    println!(
                        "cells {}  dofs {}  |u|_max {:.4}  F0 {:.4}  newton {}  div residual {:.2e}",
                        result.n_cells,
                        result.n_dofs,
                        result.u_max,
                        result.forchheimer_threshold,
                        result.newton_iters,
                        result.div_residual_inf
                    );
                }
                ExperimentKind::Ex4 => {
                    let records = ex4::run_and_emit(&cfg, &out_dir).map_err(|e| e.to_string())?;
                    print_cond_summary(&records);
                }
            }
            println!("artifacts written to {}", out_dir.display());
        }
        Command::Cond { precond, grid, out, state, spectra } => {
            if grid != "default" {
                return Err(format!("unknown grid {grid:?}; only `default` is available"));
            }
            let mut cfg = ExperimentConfig::default_for(ExperimentKind::Ex4, 0, 3);
            cfg.precond.variant = match precond {
                PrecondArg::Intersection => PrecondVariantConfig::Intersection,
                PrecondArg::Scaled => PrecondVariantConfig::Scaled,
                PrecondArg::None => PrecondVariantConfig::None,
            };
            cfg.precond.linearisation_state = match state {
                StateArg::Zero => LinearisationState::Zero,
                StateArg::Darcy => LinearisationState::Darcy,
                StateArg::Converged => LinearisationState::Converged,
            };
            cfg.output.dir = out.to_string_lossy().to_string();
            let out_dir = PathBuf::from(&cfg.output.dir);
            let records = ex4::run_and_emit(&cfg, &out_dir).map_err(|e| e.to_string())?;
            if spectra {
                let spec = ex4::precond_spec_from(&cfg);
                std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
                for rec in &records {
                    if rec.cond.is_none() {
                        continue;
                    }
                    let evals = ex4::spectrum_for_cell(
                        rec.r,
                        rec.kappa,
                        rec.forchheimer_f,
                        rec.h_nominal,
                        cfg.degree,
                        spec,
                        cfg.precond.linearisation_state,
                        &cfg,
                    )
                    .map_err(|e| e.to_string())?;
                    let name = format!(
                        "spectrum_r{}_k{:e}_F{:e}_h{}.csv",
                        rec.r, rec.kappa, rec.forchheimer_f, rec.h_nominal
                    );
                    let body: String =
                        evals.iter().map(|v| format!("{v:.16e}\n")).collect();
                    std::fs::write(out_dir.join(name), body).map_err(|e| e.to_string())?;
                }
            }
            print_cond_summary(&records);
            println!("artifacts written to {}", out_dir.display());
        }
    }
    Ok(())
}

fn print_error_table(report: &dfcore::norms::ErrorReport) {
    println!("level         h     n_dofs     err_u   rate     err_p   rate    div_inf  it");
    for (i, l) in report.levels.iter().enumerate() {
        let fr = |r: &Option<f64>| r.map(|v| format!("{v:6.3}")).unwrap_or("     *".into());
        println!(
            "{:5} {:9.5} {:10} {:9.2e} {} {:9.2e} {} {:10.2e} {:3}",
            i,
            l.h,
            l.n_dofs,
            l.err_u,
            fr(&report.rates_u[i]),
            l.err_p,
            fr(&report.rates_p[i]),
            l.div_residual_inf,
            l.newton_iters
        );
    }
}

fn print_cond_summary(records: &[dfsolve::report::CondRecord]) {
    let mut ok = 0;
    let mut failed = 0;
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for r in records {
        match r.cond {
            Some(c) => {
                ok += 1;
                min = min.min(c);
                max = max.max(c);
            }
            None => failed += 1,
        }
    }
    println!("grid cells: {ok} estimated, {failed} failed; cond range [{min:.3}, {max:.3}]");
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
