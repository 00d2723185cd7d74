use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use femlab::femcore::solve_reaction_diffusion;
use femlab::majorants::{effectivity, MAJORANT_CSV_HEADER};
use femlab::{triangle_rule, Mesh};

use studylab::config::{StudyConfig, StudyError};
use studylab::problems::builtin_problem;
use studylab::report::{emit_csv, emit_summary};
use studylab::sweep::{
    evaluate_estimator, recover_flux, resolve_constants, run_calibration, run_inverse_check,
    run_sweep,
};

#[derive(Parser)]
#[command(
    name = "studylab",
    about = "Reaction-diffusion error-bound studies: sweeps, calibration, inverse checks",
    version
)]
struct Cli {
    /// Plain-text key=value study configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the primary artifact here instead of the config's `out` path
    /// (or stdout when neither is set).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run the pipeline twice and fail unless the outputs are identical.
    /// The pipeline draws no random numbers, so this should always hold.
    #[arg(long, global = true)]
    seedless_deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem on one mesh and write the solution coefficients.
    Solve {
        /// Mesh level override; defaults to the first configured level.
        #[arg(long)]
        level: Option<usize>,
        /// Reaction coefficient override; defaults to the first configured
        /// sigma entry, resolved at the chosen level.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Evaluate every configured estimator on one (level, sigma) cell.
    Estimate {
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Run the full (level, sigma, estimator) sweep and emit CSV.
    Sweep,
    /// Calibrate the duality and quasi-interpolation constants.
    Calibrate,
    /// Compare the discretization-aware bounds with projected fluxes
    /// against the true error plus source oscillation.
    InverseCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<StudyConfig, StudyError> {
    match &cli.config {
        Some(path) => StudyConfig::parse(&std::fs::read_to_string(path)?),
        None => Ok(StudyConfig::default()),
    }
}

/// Renders an artifact, optionally twice to prove determinism, then writes
/// it to the resolved output path or stdout.
fn deliver(
    cli: &Cli,
    cfg: &StudyConfig,
    render: impl Fn() -> Result<String, StudyError>,
) -> Result<(), StudyError> {
    let text = render()?;
    if cli.seedless_deterministic && render()? != text {
        return Err(StudyError::DeterminismCheckFailed);
    }
    match cli.out.as_ref().or(cfg.out.as_ref()) {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cell(cfg: &StudyConfig, level: Option<usize>, sigma: Option<f64>) -> (usize, f64, f64) {
    let n = level.unwrap_or(cfg.levels[0]);
    let h = 2f64.sqrt() / n as f64;
    let sigma = sigma.unwrap_or_else(|| cfg.sigmas[0].resolve(h));
    (n, h, sigma)
}

fn run(cli: &Cli) -> Result<(), StudyError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Solve { level, sigma } => {
            let (n, _, sigma) = cell(&cfg, level, sigma);
            deliver(cli, &cfg, || {
                let mesh = std::sync::Arc::new(Mesh::structured_unit_square(n)?);
                let problem = builtin_problem(&cfg.problem, sigma)?;
                let load_rule = triangle_rule(cfg.quad_load)?;
                let field = solve_reaction_diffusion(&problem, &mesh, &load_rule)?;
                let mut out =
                    format!("# problem={} level={} sigma={}\n", cfg.problem, n, sigma);
                for c in field.coefficients() {
                    out.push_str(&format!("{c}\n"));
                }
                Ok(out)
            })
        }
        Command::Estimate { level, sigma } => {
            let (n, _, sigma) = cell(&cfg, level, sigma);
            let mut one = cfg.clone();
            one.levels = vec![n];
            deliver(cli, &cfg, || {
                let constants = resolve_constants(&one)?;
                let mesh = std::sync::Arc::new(Mesh::structured_unit_square(n)?);
                let problem = builtin_problem(&one.problem, sigma)?;
                let load_rule = triangle_rule(one.quad_load)?;
                let norm_rule = triangle_rule(one.quad_norm)?;
                let field = solve_reaction_diffusion(&problem, &mesh, &load_rule)?;
                let flux = recover_flux(&field, &problem, one.flux)?;
                let energy_sq = field.error_energy_sq(&norm_rule, &problem)?;
                let mut out = String::from(MAJORANT_CSV_HEADER);
                out.push('\n');
                for estimator in &one.estimators {
                    match evaluate_estimator(
                        estimator, &problem, &field, &flux, &constants, &one, &norm_rule,
                    ) {
                        Ok(report) => {
                            let eff = if energy_sq > 0.0 {
                                Some(effectivity(report.total, energy_sq)?)
                            } else {
                                None
                            };
                            out.push_str(&report.csv_row(eff));
                            out.push('\n');
                        }
                        Err(err) => {
                            out.push_str(&format!("# {estimator}: {err}\n"));
                        }
                    }
                }
                Ok(out)
            })
        }
        Command::Sweep => {
            let result = run_sweep(&cfg)?;
            if cli.seedless_deterministic && run_sweep(&cfg)? != result {
                return Err(StudyError::DeterminismCheckFailed);
            }
            eprint!("{}", emit_summary(&result)?);
            let text = emit_csv(&result)?;
            match cli.out.as_ref().or(cfg.out.as_ref()) {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Calibrate => deliver(cli, &cfg, || Ok(run_calibration(&cfg)?.to_csv())),
        Command::InverseCheck => deliver(cli, &cfg, || Ok(run_inverse_check(&cfg)?.to_csv())),
    }
}
