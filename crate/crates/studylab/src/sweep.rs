//! Solve → recover → estimate pipelines over a (level, sigma) grid.
//! Cells are independent jobs executed on a worker pool; row assembly is
//! order-fixed by the config enumeration so reruns are byte-identical.

use std::f64::consts::PI;
use std::sync::Arc;

use femlab::femcore::solve_reaction_diffusion;
use femlab::fluxrec::{average_flux, l2_project_flux, numerical_flux};
use femlab::majorants::{
    self, effectivity, MajorantError, MajorantReport,
};
use femlab::quadrature::integrate_on_element;
use femlab::szproj::{
    calibrate_cdagger, calibrate_csz, default_samples, elementwise_p1_projection,
    CszCalibration, NitscheCalibration, CALIBRATION_CSV_HEADER, DEFAULT_SAFETY_FACTOR,
};
use femlab::{edge_rule, triangle_rule, FemField, FluxField, Mesh, ProblemSpec, QuadRule};
use rayon::prelude::*;

use crate::config::{required_constants, ConstantsSource, FluxChoice, StudyConfig, StudyError};
use crate::problems::builtin_problem;

/// One emitted CSV row; fields mirror the CSV columns exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub level: usize,
    pub h: f64,
    pub sigma: f64,
    pub estimator: String,
    pub total: f64,
    pub diffusion: f64,
    pub residual_mult: f64,
    pub residual_sq: f64,
    pub oscillation: f64,
    pub true_energy_sq: Option<f64>,
    pub effectivity: Option<f64>,
    /// `log2(eff_prev / eff_curr)` against the previous level of the same
    /// sigma policy; negative when the effectivity grows under refinement.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Range violations encountered while sweeping; the run continues.
    pub violations: Vec<String>,
}

/// Constants an individual sweep runs with, after calibration or explicit
/// configuration. Missing entries mean "estimators needing this refuse".
#[derive(Debug, Clone, Copy, Default)]
pub struct ResolvedConstants {
    pub c_dagger: Option<f64>,
    pub c_sz01: Option<f64>,
    pub c_sz11: Option<f64>,
}

impl ResolvedConstants {
    fn require(&self, estimator: &str) -> Result<(), StudyError> {
        for constant in required_constants(estimator) {
            let present = match *constant {
                "c_dagger" => self.c_dagger.is_some(),
                "c_sz01" => self.c_sz01.is_some(),
                "c_sz11" => self.c_sz11.is_some(),
                _ => false,
            };
            if !present {
                return Err(StudyError::UncalibratedConstant {
                    estimator: estimator.to_string(),
                    constant,
                });
            }
        }
        Ok(())
    }
}

/// Problems that drive the duality-constant calibration: both built-in
/// manufactured solutions, each with and without reaction.
fn calibration_problems() -> Result<Vec<(String, ProblemSpec)>, StudyError> {
    let mut problems = Vec::new();
    for name in ["sinsin", "polybubble"] {
        for sigma in [0.0, 1.0] {
            problems.push((format!("{name}_s{sigma}"), builtin_problem(name, sigma)?));
        }
    }
    Ok(problems)
}

fn calibration_levels(cfg: &StudyConfig) -> Vec<usize> {
    if cfg.levels.len() >= 2 {
        cfg.levels.clone()
    } else {
        let n = cfg.levels[0];
        vec![n, 2 * n]
    }
}

fn build_meshes(levels: &[usize]) -> Result<Vec<Arc<Mesh>>, StudyError> {
    levels
        .iter()
        .map(|n| Ok(Arc::new(Mesh::structured_unit_square(*n)?)))
        .collect()
}

/// Fills in the constants the configured estimators need, either from the
/// explicit config entries or by running the calibrations.
pub fn resolve_constants(cfg: &StudyConfig) -> Result<ResolvedConstants, StudyError> {
    let mut resolved = ResolvedConstants {
        c_dagger: cfg.c_dagger,
        c_sz01: cfg.c_sz01,
        c_sz11: cfg.c_sz11,
    };
    let needs = |constant: &str| {
        cfg.estimators.iter().any(|e| required_constants(e).contains(&constant))
    };
    if cfg.constants == ConstantsSource::Calibrate {
        let load_rule = triangle_rule(cfg.quad_load)?;
        let norm_rule = triangle_rule(cfg.quad_norm)?;
        let meshes = build_meshes(&calibration_levels(cfg))?;
        if needs("c_dagger") && resolved.c_dagger.is_none() {
            let nitsche = calibrate_cdagger(
                &calibration_problems()?,
                &meshes,
                &load_rule,
                &norm_rule,
                DEFAULT_SAFETY_FACTOR,
            )?;
            resolved.c_dagger = Some(nitsche.c_dagger());
        }
        if (needs("c_sz01") || needs("c_sz11"))
            && (resolved.c_sz01.is_none() || resolved.c_sz11.is_none())
        {
            let csz = calibrate_csz(
                &meshes,
                &default_samples(),
                &edge_rule(5)?,
                &norm_rule,
                DEFAULT_SAFETY_FACTOR,
            )?;
            resolved.c_sz01.get_or_insert(csz.csz01.value);
            resolved.c_sz11.get_or_insert(csz.combined.value);
        }
    }
    for estimator in &cfg.estimators {
        resolved.require(estimator)?;
    }
    Ok(resolved)
}

pub fn recover_flux(
    u: &FemField,
    problem: &ProblemSpec,
    flux: FluxChoice,
) -> Result<FluxField, StudyError> {
    let broken = numerical_flux(u, &problem.diffusion);
    let conforming = match flux {
        FluxChoice::Average => average_flux(&broken)?,
        FluxChoice::L2Project => l2_project_flux(&broken)?,
    };
    Ok(conforming)
}

/// Runs one estimator on a solved cell. Range violations surface as
/// `Err(MajorantError)` and are classified by the caller.
pub fn evaluate_estimator(
    estimator: &str,
    problem: &ProblemSpec,
    u: &FemField,
    z: &FluxField,
    constants: &ResolvedConstants,
    cfg: &StudyConfig,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    let h = u.mesh().h();
    let sigma_star = constants.c_dagger.map(|c| 1.0 / (c * h).powi(2));
    match estimator {
        "aubin" => majorants::aubin(problem, u, z, rule),
        "repin_frolov" => majorants::repin_frolov(problem, u, z, cfg.epsilon, cfg.c_omega, rule),
        "churilova" => majorants::churilova(problem, u, z, cfg.epsilon, cfg.c_omega, rule),
        "consistent" => {
            majorants::consistent_majorant(problem, u, z, sigma_star.expect("checked"), rule)
        }
        "consistent_osc_low" => majorants::consistent_osc_low(
            problem,
            u,
            z,
            sigma_star.expect("checked"),
            cfg.epsilon,
            rule,
        ),
        "consistent_osc_high" => {
            majorants::consistent_osc_high(problem, u, z, sigma_star.expect("checked"), rule)
        }
        "fem1" => majorants::fem_majorant_1(problem, u, z, constants.c_dagger.expect("checked"), rule),
        "fem1_osc" => majorants::fem_majorant_1_osc(
            problem,
            u,
            z,
            constants.c_dagger.expect("checked"),
            cfg.epsilon,
            rule,
        ),
        "fem2" => majorants::fem_majorant_2(
            problem,
            u,
            z,
            constants.c_sz01.expect("checked"),
            constants.c_sz11.expect("checked"),
            rule,
        ),
        "aive" => majorants::aive_indicator(problem, u, z, rule)
            .map(|report| report.into_majorant(problem, u.mesh())),
        _ => unreachable!("estimator names validated at config parse"),
    }
}

fn is_range_violation(err: &MajorantError) -> bool {
    matches!(
        err,
        MajorantError::SigmaZeroUndefined
            | MajorantError::SigmaOutOfRange { .. }
            | MajorantError::ZeroReactionRequired { .. }
            | MajorantError::IdentityDiffusionRequired
    )
}

struct CellOutput {
    rows: Vec<Option<SweepRow>>,
    violations: Vec<String>,
}

/// Full sweep: for every (level, sigma) cell solve the problem, recover a
/// conforming flux, and evaluate every in-range estimator. The rate column
/// compares consecutive levels of identical sigma policy.
pub fn run_sweep(cfg: &StudyConfig) -> Result<SweepResult, StudyError> {
    let constants = resolve_constants(cfg)?;
    let load_rule = triangle_rule(cfg.quad_load)?;
    let norm_rule = triangle_rule(cfg.quad_norm)?;
    let meshes = build_meshes(&cfg.levels)?;

    let cells: Vec<(usize, usize)> = (0..cfg.levels.len())
        .flat_map(|li| (0..cfg.sigmas.len()).map(move |si| (li, si)))
        .collect();

    let outputs: Vec<CellOutput> = cells
        .par_iter()
        .map(|&(li, si)| -> Result<CellOutput, StudyError> {
            let mesh = &meshes[li];
            let h = mesh.h();
            let sigma = cfg.sigmas[si].resolve(h);
            let problem = builtin_problem(&cfg.problem, sigma)?;
            let u = solve_reaction_diffusion(&problem, mesh, &load_rule)?;
            let z = recover_flux(&u, &problem, cfg.flux)?;
            let energy_sq = u.error_energy_sq(&norm_rule, &problem)?;
            let true_energy_sq = Some(energy_sq);

            let mut rows = Vec::with_capacity(cfg.estimators.len());
            let mut violations = Vec::new();
            for estimator in &cfg.estimators {
                match evaluate_estimator(estimator, &problem, &u, &z, &constants, cfg, &norm_rule)
                {
                    Ok(report) => {
                        let eff = if energy_sq > 0.0 {
                            Some(effectivity(report.total, energy_sq)?)
                        } else {
                            None
                        };
                        rows.push(Some(SweepRow {
                            level: cfg.levels[li],
                            h,
                            sigma,
                            estimator: estimator.clone(),
                            total: report.total,
                            diffusion: report.diffusion,
                            residual_mult: report.residual_mult,
                            residual_sq: report.residual_sq,
                            oscillation: report.oscillation,
                            true_energy_sq,
                            effectivity: eff,
                            rate: None,
                        }));
                    }
                    Err(err) if is_range_violation(&err) => {
                        violations.push(format!(
                            "range-violation level={} sigma={} estimator={}: {}",
                            cfg.levels[li], sigma, estimator, err
                        ));
                        rows.push(None);
                    }
                    Err(err) => return Err(err.into()),
                }
            }
            Ok(CellOutput { rows, violations })
        })
        .collect::<Result<_, _>>()?;

    // Rate pass: cells are laid out level-major, so the same (sigma,
    // estimator) slot one level up sits a fixed stride back.
    let ns = cfg.sigmas.len();
    let ne = cfg.estimators.len();
    let mut rows: Vec<Option<SweepRow>> =
        outputs.iter().flat_map(|c| c.rows.iter().cloned()).collect();
    for li in 1..cfg.levels.len() {
        if cfg.levels[li] != 2 * cfg.levels[li - 1] {
            continue;
        }
        for si in 0..ns {
            for ei in 0..ne {
                let here = (li * ns + si) * ne + ei;
                let prev = ((li - 1) * ns + si) * ne + ei;
                let prev_eff = rows[prev].as_ref().and_then(|r| r.effectivity);
                if let (Some(row), Some(pe)) = (rows[here].as_mut(), prev_eff) {
                    if let Some(eff) = row.effectivity {
                        row.rate = Some((pe / eff).log2());
                    }
                }
            }
        }
    }

    Ok(SweepResult {
        rows: rows.into_iter().flatten().collect(),
        violations: outputs.into_iter().flat_map(|c| c.violations).collect(),
    })
}

/// Both calibration families on the configured levels.
pub struct CalibrationBundle {
    pub nitsche: NitscheCalibration,
    pub csz: CszCalibration,
}

impl CalibrationBundle {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CALIBRATION_CSV_HEADER);
        out.push('\n');
        out.push_str(&self.nitsche.report.to_csv());
        out.push_str(&self.csz.csz01.to_csv());
        out.push_str(&self.csz.stability.to_csv());
        out.push_str(&self.csz.inverse.to_csv());
        out.push_str(&self.csz.combined.to_csv());
        out
    }
}

pub fn run_calibration(cfg: &StudyConfig) -> Result<CalibrationBundle, StudyError> {
    let load_rule = triangle_rule(cfg.quad_load)?;
    let norm_rule = triangle_rule(cfg.quad_norm)?;
    let meshes = build_meshes(&calibration_levels(cfg))?;
    let nitsche = calibrate_cdagger(
        &calibration_problems()?,
        &meshes,
        &load_rule,
        &norm_rule,
        DEFAULT_SAFETY_FACTOR,
    )?;
    let csz = calibrate_csz(
        &meshes,
        &default_samples(),
        &edge_rule(5)?,
        &norm_rule,
        DEFAULT_SAFETY_FACTOR,
    )?;
    Ok(CalibrationBundle { nitsche, csz })
}

/// `sum_r (h_r^2 / pi^2) || f - P1 f ||_r^2`, the source-oscillation term
/// of the inverse-side comparison.
pub fn oscillation_denominator(problem: &ProblemSpec, mesh: &Mesh, rule: &QuadRule) -> f64 {
    let projected = elementwise_p1_projection(mesh, rule, |p| problem.source_at(p));
    (0..mesh.num_triangles())
        .map(|r| {
            let nodal = projected.nodal(r);
            let err = integrate_on_element(mesh, r, rule, |p| {
                let bary = mesh.barycentric(r, p);
                let fit = nodal[0] * bary[0] + nodal[1] * bary[1] + nodal[2] * bary[2];
                let diff = problem.source_at(p) - fit;
                diff * diff
            });
            (mesh.diameter(r) / PI).powi(2) * err
        })
        .sum()
}

/// One level of the inverse-side comparison for one bound family.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseRow {
    pub level: usize,
    pub h: f64,
    pub sigma: f64,
    pub estimator: String,
    pub majorant: f64,
    pub error_energy_sq: f64,
    pub oscillation_sq: f64,
    /// `majorant / (error_energy_sq + oscillation_sq)`; bounded ratios
    /// across levels mean the bound cannot overshoot by a growing factor.
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InverseCheckResult {
    pub rows: Vec<InverseRow>,
    pub violations: Vec<String>,
}

pub const INVERSE_CSV_HEADER: &str =
    "level,h,sigma,estimator,majorant,error_energy_sq,oscillation_sq,ratio";

impl InverseCheckResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(INVERSE_CSV_HEADER);
        out.push('\n');
        for v in &self.violations {
            out.push_str("# ");
            out.push_str(v);
            out.push('\n');
        }
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.level,
                r.h,
                r.sigma,
                r.estimator,
                r.majorant,
                r.error_energy_sq,
                r.oscillation_sq,
                r.ratio
            ));
        }
        out
    }
}

/// Evaluates both discretization-aware bounds with the L2-projected flux
/// and compares them against the true error plus source oscillation.
pub fn run_inverse_check(cfg: &StudyConfig) -> Result<InverseCheckResult, StudyError> {
    if cfg.flux != FluxChoice::L2Project {
        return Err(StudyError::InverseCheckNeedsProjectedFlux {
            flux: cfg.flux.label().to_string(),
        });
    }
    let mut probe = cfg.clone();
    probe.estimators = vec!["fem1".to_string(), "fem2".to_string()];
    let constants = resolve_constants(&probe)?;
    let load_rule = triangle_rule(cfg.quad_load)?;
    let norm_rule = triangle_rule(cfg.quad_norm)?;
    let meshes = build_meshes(&cfg.levels)?;

    let cells: Vec<(usize, usize)> = (0..cfg.levels.len())
        .flat_map(|li| (0..cfg.sigmas.len()).map(move |si| (li, si)))
        .collect();
    let outputs: Vec<(Vec<InverseRow>, Vec<String>)> = cells
        .par_iter()
        .map(|&(li, si)| -> Result<_, StudyError> {
            let mesh = &meshes[li];
            let h = mesh.h();
            let sigma = cfg.sigmas[si].resolve(h);
            let problem = builtin_problem(&cfg.problem, sigma)?;
            let u = solve_reaction_diffusion(&problem, mesh, &load_rule)?;
            let z = recover_flux(&u, &problem, FluxChoice::L2Project)?;
            let energy_sq = u.error_energy_sq(&norm_rule, &problem)?;
            let osc_sq = oscillation_denominator(&problem, mesh, &norm_rule);
            let mut rows = Vec::new();
            let mut violations = Vec::new();
            for estimator in ["fem1", "fem2"] {
                match evaluate_estimator(estimator, &problem, &u, &z, &constants, cfg, &norm_rule)
                {
                    Ok(report) => {
                        let denominator = energy_sq + osc_sq;
                        rows.push(InverseRow {
                            level: cfg.levels[li],
                            h,
                            sigma,
                            estimator: estimator.to_string(),
                            majorant: report.total,
                            error_energy_sq: energy_sq,
                            oscillation_sq: osc_sq,
                            ratio: report.total / denominator,
                        });
                    }
                    Err(err) if is_range_violation(&err) => violations.push(format!(
                        "range-violation level={} sigma={} estimator={}: {}",
                        cfg.levels[li], sigma, estimator, err
                    )),
                    Err(err) => return Err(err.into()),
                }
            }
            Ok((rows, violations))
        })
        .collect::<Result<_, _>>()?;

    let mut result = InverseCheckResult::default();
    for (rows, violations) in outputs {
        result.rows.extend(rows);
        result.violations.extend(violations);
    }
    Ok(result)
}
