//! Guaranteed a posteriori bounds for the squared energy error of an
//! approximate solution, evaluated from a testing flux `z ~ -A grad u`.
//!
//! All bounds share the components
//!
//! ```text
//! diffusion  D   = int (A grad v + z) . A^{-1} (A grad v + z)
//! residual   R^2 = || g - sigma v - div z ||_0^2,   g in { f, elementwise P1 projection of f }
//! ```
//!
//! and assemble a total of the form `total = Theta * D + M * R^2 + osc`,
//! where `Theta`, `M`, and the oscillation weights depend on the bound:
//! classical weights (`aubin`, `repin_frolov`, `churilova`), reaction-aware
//! weights driven by the critical value `sigma_star` (`consistent_*`), or
//! mesh-dependent weights driven by calibrated constants (`fem_majorant_*`).
//! The flux-only indicator `aive_indicator` and the norm-level
//! `boxed_integral` bound complete the set.

use crate::femcore::{FemField, ProblemSpec};
use crate::fluxrec::FluxField;
use crate::linalg::SpdMatrix2;
use crate::mesh::{Mesh, PointLocator};
use crate::quadrature::{edge_rule, integrate_on_element_bary, QuadRule};
use crate::szproj::{elementwise_p1_projection, ElementwiseP1};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MajorantError {
    #[error("the aubin bound is undefined for sigma = 0")]
    SigmaZeroUndefined,
    #[error("free parameter epsilon must be positive, got {epsilon}")]
    NonPositiveEpsilon { epsilon: f64 },
    #[error("critical reaction value sigma_star must be positive, got {sigma_star}")]
    NonPositiveSigmaStar { sigma_star: f64 },
    #[error("Friedrichs constant must be positive, got {c_omega}")]
    NonPositiveFriedrichs { c_omega: f64 },
    #[error("{estimator} requires sigma in [{low}, {high}], got {sigma}{hint}")]
    SigmaOutOfRange {
        estimator: &'static str,
        sigma: f64,
        low: f64,
        high: f64,
        hint: &'static str,
    },
    #[error("this bound is stated for identity diffusion only")]
    IdentityDiffusionRequired,
    #[error("this bound is stated for sigma = 0 only, got {sigma}")]
    ZeroReactionRequired { sigma: f64 },
    #[error("the line-integral bound needs a structured unit-square mesh")]
    StructuredMeshRequired,
    #[error("testing flux must be conforming (vertex-based)")]
    ExpectedConformingFlux,
    #[error("field and flux live on different meshes")]
    MeshMismatch,
    #[error("effectivity is undefined for zero true error")]
    ZeroTrueError,
    #[error("weight function evaluated to a non-finite value at ({x}, {y})")]
    NonFiniteWeight { x: f64, y: f64 },
}

/// Constants that entered a bound, for reporting.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantsUsed {
    pub sigma_star: Option<f64>,
    pub c_dagger: Option<f64>,
    pub c_sz01: Option<f64>,
    pub c_sz11: Option<f64>,
    pub epsilon: Option<f64>,
    pub c_omega: Option<f64>,
    /// Weight of the residual inside the bracket, `total = Theta (D + theta R^2) + osc`.
    pub theta_small: Option<f64>,
}

/// Per-element shares of each component; they sum to the global values.
#[derive(Debug, Clone)]
pub struct ElementBreakdown {
    pub diffusion: Vec<f64>,
    pub residual_sq: Vec<f64>,
    pub oscillation: Vec<f64>,
}

/// One evaluated bound with its full component breakdown. The invariant
/// `total = theta_big * diffusion + residual_mult * residual_sq + oscillation`
/// holds by construction.
#[derive(Debug, Clone)]
pub struct MajorantReport {
    pub estimator: &'static str,
    pub sigma: f64,
    pub h: f64,
    pub total: f64,
    pub diffusion: f64,
    pub residual_sq: f64,
    pub theta_big: f64,
    pub residual_mult: f64,
    pub oscillation: f64,
    pub constants: ConstantsUsed,
    pub elements: ElementBreakdown,
}

pub const MAJORANT_CSV_HEADER: &str =
    "estimator,sigma,sigma_star,h,total,diffusion,residual_mult,residual_sq,oscillation,effectivity";

impl MajorantReport {
    /// Re-evaluates the component combination; equals `total` exactly.
    pub fn recombine(&self) -> f64 {
        self.theta_big * self.diffusion + self.residual_mult * self.residual_sq + self.oscillation
    }

    pub fn csv_row(&self, effectivity: Option<f64>) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.estimator,
            self.sigma,
            opt(self.constants.sigma_star),
            self.h,
            self.total,
            self.diffusion,
            self.residual_mult,
            self.residual_sq,
            self.oscillation,
            opt(effectivity),
        )
    }
}

fn validate_pair(v: &FemField, z: &FluxField) -> Result<(), MajorantError> {
    if !z.is_conforming() {
        return Err(MajorantError::ExpectedConformingFlux);
    }
    if !Arc::ptr_eq(v.mesh(), z.mesh()) {
        return Err(MajorantError::MeshMismatch);
    }
    Ok(())
}

/// `int_tau p . A^{-1} q` for P1 vector fields given by their nodal values:
/// exact local mass weighting `area/12 (1 + delta_ij)`.
fn p1_pair_integral(area: f64, a: &SpdMatrix2, p: &[[f64; 2]; 3], q: &[[f64; 2]; 3]) -> f64 {
    let qi: [[f64; 2]; 3] = [a.inv_apply(q[0]), a.inv_apply(q[1]), a.inv_apply(q[2])];
    let mut sum = 0.0;
    let mut diag = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let term = p[i][0] * qi[j][0] + p[i][1] * qi[j][1];
            sum += term;
            if i == j {
                diag += term;
            }
        }
    }
    area / 12.0 * (sum + diag)
}

fn diffusion_elements(
    v: &FemField,
    z: &FluxField,
    a: &SpdMatrix2,
) -> Result<Vec<f64>, MajorantError> {
    validate_pair(v, z)?;
    let mesh = v.mesh();
    let zv = z.vertex_values().expect("conformity checked above");
    let mut out = Vec::with_capacity(mesh.num_triangles());
    for r in 0..mesh.num_triangles() {
        let agrad = a.apply(v.element_gradient(r));
        let tri = mesh.triangle(r);
        let w: [[f64; 2]; 3] = [
            [agrad[0] + zv[tri[0]][0], agrad[1] + zv[tri[0]][1]],
            [agrad[0] + zv[tri[1]][0], agrad[1] + zv[tri[1]][1]],
            [agrad[0] + zv[tri[2]][0], agrad[1] + zv[tri[2]][1]],
        ];
        out.push(p1_pair_integral(mesh.area(r), a, &w, &w).max(0.0));
    }
    Ok(out)
}

/// `]| A grad v + z |[^2 = int (A grad v + z) . A^{-1} (A grad v + z)`,
/// elementwise exact since the integrand is quadratic per element.
pub fn diffusion_term(
    v: &FemField,
    z: &FluxField,
    a: &SpdMatrix2,
) -> Result<f64, MajorantError> {
    Ok(diffusion_elements(v, z, a)?.iter().sum())
}

fn residual_sq_elements(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    rule: &QuadRule,
    projected: Option<&ElementwiseP1>,
) -> Result<Vec<f64>, MajorantError> {
    validate_pair(v, z)?;
    let mesh = v.mesh();
    let sigma = problem.sigma;
    let mut out = Vec::with_capacity(mesh.num_triangles());
    for r in 0..mesh.num_triangles() {
        let div = z.divergence(r).expect("conformity checked above");
        let sq = integrate_on_element_bary(mesh, r, rule, |p, bary| {
            let g = match projected {
                Some(proj) => proj.eval(r, bary),
                None => problem.source_at(p),
            };
            let res = g - sigma * v.value(r, bary) - div;
            res * res
        });
        out.push(sq.max(0.0));
    }
    Ok(out)
}

/// `|| g - sigma v - div z ||_0` with `g = f`, or the elementwise P1
/// projection of `f` when `use_fhat` is set.
pub fn residual_norm(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    rule: &QuadRule,
    use_fhat: bool,
) -> Result<f64, MajorantError> {
    let projected = use_fhat.then(|| {
        elementwise_p1_projection(v.mesh(), rule, |p| problem.source_at(p))
    });
    let sq: f64 = residual_sq_elements(problem, v, z, rule, projected.as_ref())?
        .iter()
        .sum();
    Ok(sq.sqrt())
}

/// `|| f - P1 f ||_{0,tau}^2` per element, unweighted.
fn oscillation_sq_elements(
    problem: &ProblemSpec,
    mesh: &Mesh,
    rule: &QuadRule,
    projected: &ElementwiseP1,
) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|r| {
            integrate_on_element_bary(mesh, r, rule, |p, bary| {
                let d = problem.source_at(p) - projected.eval(r, bary);
                d * d
            })
            .max(0.0)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    estimator: &'static str,
    problem: &ProblemSpec,
    mesh: &Mesh,
    theta_big: f64,
    residual_mult: f64,
    diffusion_parts: Vec<f64>,
    residual_parts: Vec<f64>,
    oscillation_parts: Vec<f64>,
    constants: ConstantsUsed,
) -> MajorantReport {
    let diffusion: f64 = diffusion_parts.iter().sum();
    let residual_sq: f64 = residual_parts.iter().sum();
    let oscillation: f64 = oscillation_parts.iter().sum();
    MajorantReport {
        estimator,
        sigma: problem.sigma,
        h: mesh.h(),
        total: theta_big * diffusion + residual_mult * residual_sq + oscillation,
        diffusion,
        residual_sq,
        theta_big,
        residual_mult,
        oscillation,
        constants,
        elements: ElementBreakdown {
            diffusion: diffusion_parts,
            residual_sq: residual_parts,
            oscillation: oscillation_parts,
        },
    }
}

/// Classical bound `D + (1/sigma) R^2`; sharp for large reaction, loses
/// precision as `sigma -> 0` and is undefined at zero.
pub fn aubin(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    if problem.sigma <= 0.0 {
        return Err(MajorantError::SigmaZeroUndefined);
    }
    let d = diffusion_elements(v, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, v, z, rule, None)?;
    let osc = vec![0.0; d.len()];
    Ok(assemble(
        "aubin",
        problem,
        v.mesh(),
        1.0,
        1.0 / problem.sigma,
        d,
        r,
        osc,
        ConstantsUsed { theta_small: Some(1.0 / problem.sigma), ..Default::default() },
    ))
}

/// Pure-diffusion bound `(1+eps) D + c_Omega (1+1/eps) R^2`, stated for
/// `A = I`, `sigma = 0`.
pub fn repin_frolov(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    epsilon: f64,
    c_omega: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    if problem.sigma != 0.0 {
        return Err(MajorantError::ZeroReactionRequired { sigma: problem.sigma });
    }
    if !problem.diffusion.is_identity() {
        return Err(MajorantError::IdentityDiffusionRequired);
    }
    if !(epsilon > 0.0) {
        return Err(MajorantError::NonPositiveEpsilon { epsilon });
    }
    if !(c_omega > 0.0) {
        return Err(MajorantError::NonPositiveFriedrichs { c_omega });
    }
    let d = diffusion_elements(v, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, v, z, rule, None)?;
    let osc = vec![0.0; d.len()];
    Ok(assemble(
        "repin_frolov",
        problem,
        v.mesh(),
        1.0 + epsilon,
        c_omega * (1.0 + 1.0 / epsilon),
        d,
        r,
        osc,
        ConstantsUsed {
            epsilon: Some(epsilon),
            c_omega: Some(c_omega),
            ..Default::default()
        },
    ))
}

/// Closed-form minimizer of the `repin_frolov` bound over `eps`:
/// `eps* = sqrt(c_Omega) R / sqrt(D)`, giving `(sqrt(D) + sqrt(c_Omega) R)^2`.
pub fn repin_frolov_optimal(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    c_omega: f64,
    rule: &QuadRule,
) -> Result<(f64, MajorantReport), MajorantError> {
    let d = diffusion_term(v, z, &problem.diffusion)?;
    let r_sq: f64 = residual_sq_elements(problem, v, z, rule, None)?.iter().sum();
    let eps = if d > 0.0 {
        (c_omega * r_sq / d).sqrt().clamp(1e-9, 1e9)
    } else {
        1e9
    };
    let report = repin_frolov(problem, v, z, eps, c_omega, rule)?;
    Ok((eps, report))
}

/// Interpolates between the pure-diffusion and the reaction-dominated
/// regimes: `(1+eps) D + [sigma + eps/(c_Omega(1+eps))]^{-1} R^2`.
pub fn churilova(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    epsilon: f64,
    c_omega: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    if !(epsilon > 0.0) {
        return Err(MajorantError::NonPositiveEpsilon { epsilon });
    }
    if !(c_omega > 0.0) {
        return Err(MajorantError::NonPositiveFriedrichs { c_omega });
    }
    let d = diffusion_elements(v, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, v, z, rule, None)?;
    let osc = vec![0.0; d.len()];
    let mult = 1.0 / (problem.sigma + epsilon / (c_omega * (1.0 + epsilon)));
    Ok(assemble(
        "churilova",
        problem,
        v.mesh(),
        1.0 + epsilon,
        mult,
        d,
        r,
        osc,
        ConstantsUsed {
            epsilon: Some(epsilon),
            c_omega: Some(c_omega),
            ..Default::default()
        },
    ))
}

/// Reaction-aware weights: for `sigma` at or below the critical value
/// `Theta = 2/(1+kappa)` and `theta = 1/sigma_star` with
/// `kappa = sigma/sigma_star`; above it the classical `(1, 1/sigma)`.
/// Continuous at the junction.
pub fn theta_factors(sigma: f64, sigma_star: f64) -> Result<(f64, f64), MajorantError> {
    if !(sigma_star > 0.0) {
        return Err(MajorantError::NonPositiveSigmaStar { sigma_star });
    }
    let kappa = sigma / sigma_star;
    if sigma <= sigma_star {
        Ok((2.0 / (1.0 + kappa), 1.0 / sigma_star))
    } else {
        Ok((1.0, 1.0 / sigma))
    }
}

/// `Theta (D + theta R^2)` with the reaction-aware weights; coincides with
/// `aubin` for `sigma >= sigma_star`.
pub fn consistent_majorant(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    sigma_star: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    let (theta_big, theta_small) = theta_factors(problem.sigma, sigma_star)?;
    let d = diffusion_elements(v, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, v, z, rule, None)?;
    let osc = vec![0.0; d.len()];
    Ok(assemble(
        "consistent",
        problem,
        v.mesh(),
        theta_big,
        theta_big * theta_small,
        d,
        r,
        osc,
        ConstantsUsed {
            sigma_star: Some(sigma_star),
            theta_small: Some(theta_small),
            ..Default::default()
        },
    ))
}

/// Low-reaction branch with source projection: the residual uses the
/// elementwise P1 projection of `f` and the projection error returns as
/// `sum_r h_r^2/(eps pi^2) || f - P1 f ||_r^2`.
pub fn consistent_osc_low(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    sigma_star: f64,
    epsilon: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    if !(epsilon > 0.0) {
        return Err(MajorantError::NonPositiveEpsilon { epsilon });
    }
    let (_, theta_small) = theta_factors(problem.sigma, sigma_star)?;
    if problem.sigma > sigma_star {
        return Err(MajorantError::SigmaOutOfRange {
            estimator: "consistent_osc_low",
            sigma: problem.sigma,
            low: 0.0,
            high: sigma_star,
            hint: "; use consistent_osc_high above the critical value",
        });
    }
    // Theta_1 replaces Theta in front of the same bracket.
    let theta_one = if problem.sigma <= sigma_star / (1.0 + epsilon) {
        (2.0 + epsilon) / (1.0 + problem.sigma / sigma_star)
    } else {
        1.0 + epsilon
    };
    let mesh = v.mesh();
    let projected = elementwise_p1_projection(mesh, rule, |p| problem.source_at(p));
    let d = diffusion_elements(v, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, v, z, rule, Some(&projected))?;
    let raw_osc = oscillation_sq_elements(problem, mesh, rule, &projected);
    let osc: Vec<f64> = raw_osc
        .iter()
        .enumerate()
        .map(|(i, o)| mesh.diameter(i).powi(2) / (epsilon * PI * PI) * o)
        .collect();
    Ok(assemble(
        "consistent_osc_low",
        problem,
        mesh,
        theta_one,
        theta_one * theta_small,
        d,
        r,
        osc,
        ConstantsUsed {
            sigma_star: Some(sigma_star),
            epsilon: Some(epsilon),
            theta_small: Some(theta_small),
            ..Default::default()
        },
    ))
}

/// High-reaction branch with source projection:
/// `Theta_2 M(fhat) + sum_r (1/sigma) || f - P1 f ||_r^2`,
/// `Theta_2 = 1 + 1/(1 + kappa^{-1})`.
pub fn consistent_osc_high(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    sigma_star: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    if !(sigma_star > 0.0) {
        return Err(MajorantError::NonPositiveSigmaStar { sigma_star });
    }
    if problem.sigma < sigma_star {
        return Err(MajorantError::SigmaOutOfRange {
            estimator: "consistent_osc_high",
            sigma: problem.sigma,
            low: sigma_star,
            high: f64::INFINITY,
            hint: "; use consistent_osc_low below the critical value",
        });
    }
    let (_, theta_small) = theta_factors(problem.sigma, sigma_star)?;
    let kappa = problem.sigma / sigma_star;
    // Theta_2 replaces Theta in front of the same bracket.
    let theta_two = 1.0 + 1.0 / (1.0 + 1.0 / kappa);
    let mesh = v.mesh();
    let projected = elementwise_p1_projection(mesh, rule, |p| problem.source_at(p));
    let d = diffusion_elements(v, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, v, z, rule, Some(&projected))?;
    let raw_osc = oscillation_sq_elements(problem, mesh, rule, &projected);
    let osc: Vec<f64> = raw_osc.iter().map(|o| o / problem.sigma).collect();
    Ok(assemble(
        "consistent_osc_high",
        problem,
        mesh,
        theta_two,
        theta_two * theta_small,
        d,
        r,
        osc,
        ConstantsUsed {
            sigma_star: Some(sigma_star),
            theta_small: Some(theta_small),
            ..Default::default()
        },
    ))
}

/// Mesh-dependent bound for Galerkin solutions:
/// `[2/(1 + cdag^2 h^2 sigma)] [D + (cdag h)^2 R^2]`, valid for
/// `sigma <= 1/(cdag h)^2`.
pub fn fem_majorant_1(
    problem: &ProblemSpec,
    u_fem: &FemField,
    z: &FluxField,
    c_dagger: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    let h = u_fem.mesh().h();
    let chsq = (c_dagger * h).powi(2);
    let limit = 1.0 / chsq;
    if problem.sigma > limit {
        return Err(MajorantError::SigmaOutOfRange {
            estimator: "fem1",
            sigma: problem.sigma,
            low: 0.0,
            high: limit,
            hint: "; use the aubin bound in this regime",
        });
    }
    let prefactor = 2.0 / (1.0 + chsq * problem.sigma);
    let d = diffusion_elements(u_fem, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, u_fem, z, rule, None)?;
    let osc = vec![0.0; d.len()];
    Ok(assemble(
        "fem1",
        problem,
        u_fem.mesh(),
        prefactor,
        prefactor * chsq,
        d,
        r,
        osc,
        ConstantsUsed {
            sigma_star: Some(limit),
            c_dagger: Some(c_dagger),
            theta_small: Some(chsq),
            ..Default::default()
        },
    ))
}

/// Oscillation-split variant of `fem_majorant_1`, valid for
/// `sigma <= sigma_star/(1+eps)`:
/// `[(2+eps)/(1 + cdag^2 h^2 sigma)] [D + (cdag h)^2 Rhat^2] + osc`.
pub fn fem_majorant_1_osc(
    problem: &ProblemSpec,
    u_fem: &FemField,
    z: &FluxField,
    c_dagger: f64,
    epsilon: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    if !(epsilon > 0.0) {
        return Err(MajorantError::NonPositiveEpsilon { epsilon });
    }
    let mesh = u_fem.mesh();
    let h = mesh.h();
    let chsq = (c_dagger * h).powi(2);
    let limit = 1.0 / chsq / (1.0 + epsilon);
    if problem.sigma > limit {
        return Err(MajorantError::SigmaOutOfRange {
            estimator: "fem1_osc",
            sigma: problem.sigma,
            low: 0.0,
            high: limit,
            hint: "; use the aubin bound in this regime",
        });
    }
    let prefactor = (2.0 + epsilon) / (1.0 + chsq * problem.sigma);
    let projected = elementwise_p1_projection(mesh, rule, |p| problem.source_at(p));
    let d = diffusion_elements(u_fem, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, u_fem, z, rule, Some(&projected))?;
    let raw_osc = oscillation_sq_elements(problem, mesh, rule, &projected);
    let osc: Vec<f64> = raw_osc
        .iter()
        .enumerate()
        .map(|(i, o)| mesh.diameter(i).powi(2) / (epsilon * PI * PI) * o)
        .collect();
    Ok(assemble(
        "fem1_osc",
        problem,
        mesh,
        prefactor,
        prefactor * chsq,
        d,
        r,
        osc,
        ConstantsUsed {
            sigma_star: Some(1.0 / chsq),
            c_dagger: Some(c_dagger),
            epsilon: Some(epsilon),
            theta_small: Some(chsq),
            ..Default::default()
        },
    ))
}

/// Quasi-interpolation route:
/// `Theta_sz [D + theta_sz R^2]` with `theta_sz = (c_sz01 h)^2` and
/// `Theta_sz = (1 + c_sz11^2)/(1 + c_sz01^2 h^2 sigma)`, valid for
/// `sigma <= 1/(c_sz01 h)^2`.
pub fn fem_majorant_2(
    problem: &ProblemSpec,
    u_fem: &FemField,
    z: &FluxField,
    c_sz01: f64,
    c_sz11: f64,
    rule: &QuadRule,
) -> Result<MajorantReport, MajorantError> {
    let h = u_fem.mesh().h();
    let theta_sz = (c_sz01 * h).powi(2);
    let limit = 1.0 / theta_sz;
    if problem.sigma > limit {
        return Err(MajorantError::SigmaOutOfRange {
            estimator: "fem2",
            sigma: problem.sigma,
            low: 0.0,
            high: limit,
            hint: "; use the aubin bound in this regime",
        });
    }
    let prefactor = (1.0 + c_sz11 * c_sz11) / (1.0 + theta_sz * problem.sigma);
    let d = diffusion_elements(u_fem, z, &problem.diffusion)?;
    let r = residual_sq_elements(problem, u_fem, z, rule, None)?;
    let osc = vec![0.0; d.len()];
    Ok(assemble(
        "fem2",
        problem,
        u_fem.mesh(),
        prefactor,
        prefactor * theta_sz,
        d,
        r,
        osc,
        ConstantsUsed {
            sigma_star: Some(limit),
            c_sz01: Some(c_sz01),
            c_sz11: Some(c_sz11),
            theta_small: Some(theta_sz),
            ..Default::default()
        },
    ))
}

/// Flux-difference indicator with elementwise oscillation, stated for
/// identity diffusion. Elements with `sqrt(sigma) h_r < 1` use the flux
/// difference alone; the rest add the scaled residual with the projected
/// source. `bound` is `sum_r (eta_r + osc_r)^2`.
#[derive(Debug, Clone)]
pub struct AiveReport {
    pub per_element_sq: Vec<f64>,
    pub indicator_sq: f64,
    pub oscillation: Vec<f64>,
    pub oscillation_sq: f64,
    pub bound: f64,
    /// Marks elements that carry the residual term (outside the
    /// small-reaction set).
    pub residual_elements: Vec<bool>,
}

impl AiveReport {
    /// Repackages the indicator in the common report layout: the flux part
    /// plays the diffusion role and the remainder of the bound is filed
    /// under oscillation.
    pub fn into_majorant(self, problem: &ProblemSpec, mesh: &Mesh) -> MajorantReport {
        let nt = self.per_element_sq.len();
        let osc_parts: Vec<f64> = (0..nt)
            .map(|r| {
                let eta = self.per_element_sq[r].sqrt();
                (eta + self.oscillation[r]).powi(2) - self.per_element_sq[r]
            })
            .collect();
        MajorantReport {
            estimator: "aive",
            sigma: problem.sigma,
            h: mesh.h(),
            total: self.indicator_sq + osc_parts.iter().sum::<f64>(),
            diffusion: self.indicator_sq,
            residual_sq: 0.0,
            theta_big: 1.0,
            residual_mult: 0.0,
            oscillation: osc_parts.iter().sum(),
            constants: ConstantsUsed::default(),
            elements: ElementBreakdown {
                diffusion: self.per_element_sq,
                residual_sq: vec![0.0; nt],
                oscillation: osc_parts,
            },
        }
    }
}

pub fn aive_indicator(
    problem: &ProblemSpec,
    u_fem: &FemField,
    z: &FluxField,
    rule: &QuadRule,
) -> Result<AiveReport, MajorantError> {
    if !problem.diffusion.is_identity() {
        return Err(MajorantError::IdentityDiffusionRequired);
    }
    validate_pair(u_fem, z)?;
    let mesh = u_fem.mesh();
    let sigma = problem.sigma;
    let identity = SpdMatrix2::identity();
    let zv = z.vertex_values().expect("conformity checked above");
    let projected = elementwise_p1_projection(mesh, rule, |p| problem.source_at(p));
    let raw_osc = oscillation_sq_elements(problem, mesh, rule, &projected);
    let nt = mesh.num_triangles();
    let mut per_element_sq = Vec::with_capacity(nt);
    let mut oscillation = Vec::with_capacity(nt);
    let mut residual_elements = Vec::with_capacity(nt);
    let mut bound = 0.0;
    for r in 0..nt {
        let grad = u_fem.element_gradient(r);
        let tri = mesh.triangle(r);
        let w: [[f64; 2]; 3] = [
            [grad[0] + zv[tri[0]][0], grad[1] + zv[tri[0]][1]],
            [grad[0] + zv[tri[1]][0], grad[1] + zv[tri[1]][1]],
            [grad[0] + zv[tri[2]][0], grad[1] + zv[tri[2]][1]],
        ];
        let mut eta_sq = p1_pair_integral(mesh.area(r), &identity, &w, &w).max(0.0);
        let h_r = mesh.diameter(r);
        let needs_residual = !(sigma.sqrt() * h_r < 1.0);
        if needs_residual {
            let div = z.divergence(r).expect("conformity checked above");
            let tri_nodes = projected.nodal(r);
            let res: [[f64; 2]; 3] = [
                [tri_nodes[0] - sigma * u_fem.coefficients()[tri[0]] - div, 0.0],
                [tri_nodes[1] - sigma * u_fem.coefficients()[tri[1]] - div, 0.0],
                [tri_nodes[2] - sigma * u_fem.coefficients()[tri[2]] - div, 0.0],
            ];
            eta_sq += p1_pair_integral(mesh.area(r), &identity, &res, &res).max(0.0) / sigma;
        }
        let weight = (h_r / PI).min(1.0 / sigma.sqrt());
        let osc_r = weight * raw_osc[r].sqrt();
        bound += (eta_sq.sqrt() + osc_r).powi(2);
        per_element_sq.push(eta_sq);
        oscillation.push(osc_r);
        residual_elements.push(needs_residual);
    }
    Ok(AiveReport {
        indicator_sq: per_element_sq.iter().sum(),
        per_element_sq,
        oscillation_sq: oscillation.iter().map(|o| o * o).sum(),
        oscillation,
        bound,
        residual_elements,
    })
}

/// Norm-level bound on the unit square built from line integrals of the
/// residual: `||grad v + z|| + sum_k || int_0^{x_k} beta_k (f - div z) ||`.
#[derive(Debug, Clone)]
pub struct BoxedReport {
    pub total: f64,
    pub flux_norm: f64,
    pub line_norms: [f64; 2],
}

/// Composite Gauss quadrature of `g` along one axis from 0 to `upper`,
/// split at grid columns and at the in-cell diagonal crossing.
fn line_integral(
    n: usize,
    fixed: f64,
    upper: f64,
    axis: usize,
    rule: &crate::quadrature::EdgeRule,
    g: &mut impl FnMut([f64; 2]) -> f64,
) -> f64 {
    let step = 1.0 / n as f64;
    let row = ((fixed * n as f64).floor() as usize).min(n - 1);
    let mut acc = 0.0;
    let mut cell = 0usize;
    while (cell as f64) * step < upper {
        let lo = cell as f64 * step;
        let hi = (lo + step).min(upper);
        // Diagonal of cell (cell, row) runs from its lower-left corner.
        let crossing = cell as f64 * step + (fixed - row as f64 * step);
        let mut cuts = vec![lo];
        if crossing > lo && crossing < hi {
            cuts.push(crossing);
        }
        cuts.push(hi);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for (bary, w) in rule.points().iter().zip(rule.weights()) {
                let t = a + bary[1] * (b - a);
                let p = if axis == 0 { [t, fixed] } else { [fixed, t] };
                acc += w * (b - a) * g(p);
            }
        }
        cell += 1;
    }
    acc
}

/// Evaluates the line-integral bound with a free weight `beta1` (the
/// second direction uses `1 - beta1`). Requires a structured unit-square
/// mesh, identity diffusion, and zero reaction.
pub fn boxed_integral(
    problem: &ProblemSpec,
    v: &FemField,
    z: &FluxField,
    beta1: impl Fn([f64; 2]) -> f64,
) -> Result<BoxedReport, MajorantError> {
    if problem.sigma != 0.0 {
        return Err(MajorantError::ZeroReactionRequired { sigma: problem.sigma });
    }
    if !problem.diffusion.is_identity() {
        return Err(MajorantError::IdentityDiffusionRequired);
    }
    validate_pair(v, z)?;
    let mesh = v.mesh();
    let n = infer_structured(mesh)?;
    let locator = PointLocator::new(mesh);
    let flux_norm = diffusion_term(v, z, &problem.diffusion)?.max(0.0).sqrt();

    let rule = edge_rule(5).expect("supported degree");
    let mut line_norms = [0.0f64; 2];
    for axis in 0..2 {
        let mut residual_weighted = |p: [f64; 2]| {
            let b1 = beta1(p);
            if !b1.is_finite() {
                return f64::NAN;
            }
            let beta = if axis == 0 { b1 } else { 1.0 - b1 };
            let (r, _) = locator
                .locate(p)
                .expect("point inside the unit square");
            let div = z.divergence(r).expect("conformity checked above");
            beta * (problem.source_at(p) - div)
        };
        let mut norm_sq = 0.0;
        let step = 1.0 / n as f64;
        for ci in 0..n {
            for cj in 0..n {
                for (bi, wi) in rule.points().iter().zip(rule.weights()) {
                    for (bj, wj) in rule.points().iter().zip(rule.weights()) {
                        let x = (ci as f64 + bi[1]) * step;
                        let y = (cj as f64 + bj[1]) * step;
                        let (fixed, upper) = if axis == 0 { (y, x) } else { (x, y) };
                        let val =
                            line_integral(n, fixed, upper, axis, &rule, &mut residual_weighted);
                        if !val.is_finite() {
                            return Err(MajorantError::NonFiniteWeight { x, y });
                        }
                        norm_sq += wi * wj * step * step * val * val;
                    }
                }
            }
        }
        line_norms[axis] = norm_sq.max(0.0).sqrt();
    }
    Ok(BoxedReport {
        total: flux_norm + line_norms[0] + line_norms[1],
        flux_norm,
        line_norms,
    })
}

fn infer_structured(mesh: &Mesh) -> Result<usize, MajorantError> {
    let nt = mesh.num_triangles();
    let n = ((nt as f64 / 2.0).sqrt().round()) as usize;
    if n == 0 || 2 * n * n != nt || (n + 1) * (n + 1) != mesh.num_vertices() {
        return Err(MajorantError::StructuredMeshRequired);
    }
    let nf = n as f64;
    for p in mesh.vertices() {
        for c in [p[0], p[1]] {
            if (c * nf - (c * nf).round()).abs() > 1e-9 || !(0.0..=1.0 + 1e-12).contains(&c) {
                return Err(MajorantError::StructuredMeshRequired);
            }
        }
    }
    Ok(n)
}

/// `sqrt(majorant)/|||e|||`; at least 1 for guaranteed bounds up to
/// quadrature slack.
pub fn effectivity(majorant_total: f64, error_energy_sq: f64) -> Result<f64, MajorantError> {
    if !(error_energy_sq > 0.0) {
        return Err(MajorantError::ZeroTrueError);
    }
    Ok((majorant_total.max(0.0) / error_energy_sq).sqrt())
}

/// Golden-section search for the minimum of a unimodal function on `[a, b]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..400 {
        if hi - lo <= tol * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femcore::FemField;
    use crate::fluxrec::{average_flux, numerical_flux, FluxField};
    use crate::mesh::Mesh;
    use crate::quadrature::triangle_rule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_mesh(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::structured_unit_square(n).unwrap())
    }

    fn zero_field(mesh: &Arc<Mesh>) -> FemField {
        FemField::new(Arc::clone(mesh), vec![0.0; mesh.num_vertices()], true).unwrap()
    }

    fn const_flux(mesh: &Arc<Mesh>, z: [f64; 2]) -> FluxField {
        FluxField::from_vertex_values(Arc::clone(mesh), vec![z; mesh.num_vertices()]).unwrap()
    }

    fn constant_problem(sigma: f64, f: f64) -> ProblemSpec {
        ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], sigma, move |_| f).unwrap()
    }

    #[test]
    fn diffusion_term_weights_by_inverse_diffusion() {
        let mesh = unit_mesh(2);
        // A = diag(4, 1), grad v = (0.5, 0): A grad v + 0 = (2, 0) and the
        // weighted integrand is 2 * (1/4) * 2 = 1 on the unit-area mesh.
        let a = SpdMatrix2::new([[4.0, 0.0], [0.0, 1.0]]).unwrap();
        let v = FemField::interpolate(Arc::clone(&mesh), |p| 0.5 * p[0]);
        let z = const_flux(&mesh, [0.0, 0.0]);
        assert_relative_eq!(diffusion_term(&v, &z, &a).unwrap(), 1.0, epsilon = 1e-12);

        let identity = SpdMatrix2::identity();
        let v = FemField::interpolate(Arc::clone(&mesh), |p| p[0]);
        assert_relative_eq!(diffusion_term(&v, &z, &identity).unwrap(), 1.0, epsilon = 1e-12);

        // z = -A grad v exactly cancels.
        let cancel = const_flux(&mesh, [-2.0, 0.0]);
        let v = FemField::interpolate(Arc::clone(&mesh), |p| 0.5 * p[0]);
        assert_relative_eq!(diffusion_term(&v, &cancel, &a).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn diffusion_term_rejects_broken_flux() {
        let mesh = unit_mesh(2);
        let v = zero_field(&mesh);
        let broken = numerical_flux(&v, &SpdMatrix2::identity());
        assert!(matches!(
            diffusion_term(&v, &broken, &SpdMatrix2::identity()),
            Err(MajorantError::ExpectedConformingFlux)
        ));
    }

    #[test]
    fn residual_norm_of_constant_data() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let problem = constant_problem(3.0, 1.0);
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.0, 0.0]);
        assert_relative_eq!(
            residual_norm(&problem, &v, &z, &rule, false).unwrap(),
            1.0,
            epsilon = 1e-13
        );
        // Linear f: projected source coincides with f.
        let linear = ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 0.0, |p| 2.0 * p[0] - p[1]).unwrap();
        let with_f = residual_norm(&linear, &v, &z, &rule, false).unwrap();
        let with_fhat = residual_norm(&linear, &v, &z, &rule, true).unwrap();
        assert_relative_eq!(with_f, with_fhat, epsilon = 1e-12);
    }

    #[test]
    fn aubin_sums_diffusion_and_scaled_residual() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        // D = |z|^2 = 0.04 on unit area, R = f = 0.3 so R^2 = 0.09.
        let problem = constant_problem(1.0, 0.3);
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.2, 0.0]);
        let report = aubin(&problem, &v, &z, &rule).unwrap();
        assert_relative_eq!(report.total, 0.13, epsilon = 1e-12);
        assert_relative_eq!(report.diffusion, 0.04, epsilon = 1e-13);
        assert_relative_eq!(report.residual_sq, 0.09, epsilon = 1e-13);
        assert_eq!(report.total, report.recombine());

        let zero_sigma = constant_problem(0.0, 0.3);
        assert!(matches!(
            aubin(&zero_sigma, &v, &z, &rule),
            Err(MajorantError::SigmaZeroUndefined)
        ));
    }

    #[test]
    fn repin_frolov_matches_arithmetic_oracle() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let problem = constant_problem(0.0, 1.0);
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        let c_omega = 1.0 / (2.0 * PI * PI);
        let report = repin_frolov(&problem, &v, &z, 1.0, c_omega, &rule).unwrap();
        assert_relative_eq!(report.total, 0.02 + 1.0 / (PI * PI), epsilon = 1e-12);
        assert!(matches!(
            repin_frolov(&problem, &v, &z, 0.0, c_omega, &rule),
            Err(MajorantError::NonPositiveEpsilon { .. })
        ));
        let with_sigma = constant_problem(1.0, 1.0);
        assert!(matches!(
            repin_frolov(&with_sigma, &v, &z, 1.0, c_omega, &rule),
            Err(MajorantError::ZeroReactionRequired { .. })
        ));
    }

    #[test]
    fn repin_frolov_epsilon_minimum_matches_closed_form_and_search() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let problem = constant_problem(0.0, 1.0);
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        let c_omega = 1.0 / (2.0 * PI * PI);
        let (eps_star, report) = repin_frolov_optimal(&problem, &v, &z, c_omega, &rule).unwrap();
        let d = report.diffusion;
        let r = report.residual_sq.sqrt();
        assert_relative_eq!(eps_star, (c_omega.sqrt() * r) / d.sqrt(), epsilon = 1e-10);
        let closed_form = (d.sqrt() + c_omega.sqrt() * r).powi(2);
        assert_relative_eq!(report.total, closed_form, epsilon = 1e-10);
        let (eps_gs, total_gs) = golden_section_min(
            |eps| {
                repin_frolov(&problem, &v, &z, eps, c_omega, &rule)
                    .unwrap()
                    .total
            },
            1e-4,
            1e4,
            1e-12,
        );
        assert_relative_eq!(total_gs, closed_form, epsilon = 1e-8);
        assert_relative_eq!(eps_gs, eps_star, epsilon = 1e-4);
    }

    #[test]
    fn churilova_interpolates_between_classical_bounds() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        let c_omega = 1.0 / (2.0 * PI * PI);
        // sigma = 0 reduces to the pure-diffusion coefficients.
        let diffusion_only = constant_problem(0.0, 1.0);
        let chur = churilova(&diffusion_only, &v, &z, 1.0, c_omega, &rule).unwrap();
        let repin = repin_frolov(&diffusion_only, &v, &z, 1.0, c_omega, &rule).unwrap();
        assert_relative_eq!(chur.total, repin.total, epsilon = 1e-14);
        // Large sigma approaches the aubin multiplier 1/sigma within 1%.
        let stiff = constant_problem(1e8, 1.0);
        let chur = churilova(&stiff, &v, &z, 1.0, c_omega, &rule).unwrap();
        assert_relative_eq!(chur.residual_mult, 1e-8, max_relative = 1e-2);
    }

    #[test]
    fn theta_factors_cover_both_branches_and_are_continuous() {
        let sigma_star = 7.0;
        let (big, small) = theta_factors(0.0, sigma_star).unwrap();
        assert_relative_eq!(big, 2.0, epsilon = 1e-15);
        assert_relative_eq!(small, 1.0 / sigma_star, epsilon = 1e-15);
        let below = theta_factors(sigma_star, sigma_star).unwrap();
        let above = theta_factors(sigma_star * (1.0 + 1e-15), sigma_star).unwrap();
        assert_relative_eq!(below.0, 1.0, epsilon = 1e-14);
        assert_relative_eq!(below.0, above.0, epsilon = 1e-14);
        assert_relative_eq!(below.1, above.1, epsilon = 1e-14);
        let (big, small) = theta_factors(4.0 * sigma_star, sigma_star).unwrap();
        assert_relative_eq!(big, 1.0, epsilon = 1e-15);
        assert_relative_eq!(small, 1.0 / (4.0 * sigma_star), epsilon = 1e-15);
        assert!(theta_factors(1.0, 0.0).is_err());
    }

    #[test]
    fn consistent_majorant_arithmetic_and_aubin_coincidence() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        // sigma = 0, sigma_star = 100: 2 (0.01 + 1/100) = 0.04.
        let problem = constant_problem(0.0, 1.0);
        let report = consistent_majorant(&problem, &v, &z, 100.0, &rule).unwrap();
        assert_relative_eq!(report.total, 0.04, epsilon = 1e-13);
        // Above the critical value the weights collapse to aubin.
        let sigma_star = 50.0;
        let stiff = constant_problem(2.0 * sigma_star, 1.0);
        let consistent = consistent_majorant(&stiff, &v, &z, sigma_star, &rule).unwrap();
        let classical = aubin(&stiff, &v, &z, &rule).unwrap();
        assert_eq!(consistent.total, classical.total);
        assert_eq!(consistent.theta_big, 1.0);
        assert_eq!(consistent.residual_mult, classical.residual_mult);
    }

    #[test]
    fn oscillation_branch_low_theta_values_and_linear_source_exactness() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.05, -0.02]);
        let sigma_star = 10.0;
        let linear =
            ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 0.0, |p| 1.0 + p[0] - 0.5 * p[1]).unwrap();
        let report = consistent_osc_low(&linear, &v, &z, sigma_star, 1.0, &rule).unwrap();
        // Theta_1 = (2+eps)/(1+kappa) = 3 at sigma = 0, eps = 1.
        assert_relative_eq!(report.theta_big, 3.0, epsilon = 1e-13);
        assert!(report.oscillation < 1e-13);
        // For linear f the value is Theta_1 times the bare bracket.
        let plain = consistent_majorant(&linear, &v, &z, sigma_star, &rule).unwrap();
        let bracket = plain.total / plain.theta_big;
        assert_relative_eq!(report.total, 3.0 * bracket, epsilon = 1e-12);

        let at_star =
            ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], sigma_star, |p| 1.0 + p[0]).unwrap();
        let report = consistent_osc_high(&at_star, &v, &z, sigma_star, &rule).unwrap();
        // Theta_2 = 1.5 at the junction; oscillation vanishes for linear f.
        assert_relative_eq!(report.theta_big, 1.5, epsilon = 1e-13);
        assert!(report.oscillation < 1e-13);
    }

    #[test]
    fn oscillation_branches_reject_the_wrong_regime() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.0, 0.0]);
        let problem = constant_problem(5.0, 1.0);
        assert!(matches!(
            consistent_osc_low(&problem, &v, &z, 1.0, 1.0, &rule),
            Err(MajorantError::SigmaOutOfRange { .. })
        ));
        assert!(matches!(
            consistent_osc_high(&problem, &v, &z, 50.0, &rule),
            Err(MajorantError::SigmaOutOfRange { .. })
        ));
        // Theta_1 switches to 1 + eps between sigma_star/(1+eps) and sigma_star.
        let mid = constant_problem(0.8, 1.0);
        let report = consistent_osc_low(&mid, &v, &z, 1.0, 1.0, &rule).unwrap();
        assert_relative_eq!(report.theta_big, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn fem_bound_prefactor_at_zero_sigma_and_junction_with_aubin() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        let c_dagger = 0.5;
        let problem = constant_problem(0.0, 1.0);
        let report = fem_majorant_1(&problem, &v, &z, c_dagger, &rule).unwrap();
        let chsq = (c_dagger * mesh.h()).powi(2);
        assert_relative_eq!(
            report.total,
            2.0 * (report.diffusion + chsq * report.residual_sq),
            epsilon = 1e-13
        );
        // At sigma = 1/(c h)^2 the prefactor is 1 and theta = 1/sigma.
        let sigma = 1.0 / chsq;
        let junction = constant_problem(sigma, 1.0);
        let report = fem_majorant_1(&junction, &v, &z, c_dagger, &rule).unwrap();
        let classical = aubin(&junction, &v, &z, &rule).unwrap();
        assert_relative_eq!(report.theta_big, 1.0, epsilon = 1e-14);
        assert_relative_eq!(report.total, classical.total, max_relative = 1e-12);
        // Above the critical value the bound refuses and points to aubin.
        let too_stiff = constant_problem(sigma * 1.01, 1.0);
        let err = fem_majorant_1(&too_stiff, &v, &z, c_dagger, &rule).unwrap_err();
        assert!(err.to_string().contains("aubin"));
    }

    #[test]
    fn fem_bound_oscillation_variant_scales_fem1_for_linear_sources() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        let c_dagger = 0.5;
        let linear =
            ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 0.0, |p| 1.0 - 0.3 * p[1]).unwrap();
        let eps = 1.0;
        let with_osc = fem_majorant_1_osc(&linear, &v, &z, c_dagger, eps, &rule).unwrap();
        let plain = fem_majorant_1(&linear, &v, &z, c_dagger, &rule).unwrap();
        assert!(with_osc.oscillation < 1e-13);
        assert_relative_eq!(
            with_osc.total,
            (2.0 + eps) / 2.0 * plain.total,
            epsilon = 1e-12
        );
    }

    #[test]
    fn fem_bound_oscillation_term_matches_brute_force_projection() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.0, 0.0]);
        let quadratic = ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 0.0, |p| p[0] * p[0]).unwrap();
        let eps = 1.0;
        let report = fem_majorant_1_osc(&quadratic, &v, &z, 0.5, eps, &rule).unwrap();
        // Brute force: solve each local Gram system with a dense solver.
        let f = |p: [f64; 2]| p[0] * p[0];
        let mut expected = 0.0;
        for r in 0..mesh.num_triangles() {
            let jac = 2.0 * mesh.area(r);
            let [p0, p1, p2] = mesh.triangle_vertices(r);
            let mut moments = nalgebra::Vector3::zeros();
            for (bary, w) in rule.points().iter().zip(rule.weights()) {
                let p = [
                    bary[0] * p0[0] + bary[1] * p1[0] + bary[2] * p2[0],
                    bary[0] * p0[1] + bary[1] * p1[1] + bary[2] * p2[1],
                ];
                for i in 0..3 {
                    moments[i] += jac * w * f(p) * bary[i];
                }
            }
            let a = mesh.area(r) / 12.0;
            let gram = nalgebra::Matrix3::new(
                2.0 * a, a, a, a, 2.0 * a, a, a, a, 2.0 * a,
            );
            let nodal = gram.lu().solve(&moments).unwrap();
            let err_sq = integrate_on_element_bary(&mesh, r, &rule, |p, bary| {
                let d = f(p) - (bary[0] * nodal[0] + bary[1] * nodal[1] + bary[2] * nodal[2]);
                d * d
            });
            expected += mesh.diameter(r).powi(2) / (eps * PI * PI) * err_sq;
        }
        assert_relative_eq!(report.oscillation, expected, epsilon = 1e-14);
    }

    #[test]
    fn quasi_interpolation_bound_prefactor_and_range() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.1, 0.0]);
        let (c01, c11) = (0.4, 1.8);
        let problem = constant_problem(0.0, 1.0);
        let report = fem_majorant_2(&problem, &v, &z, c01, c11, &rule).unwrap();
        assert_relative_eq!(report.theta_big, 1.0 + c11 * c11, epsilon = 1e-13);
        let limit = 1.0 / (c01 * mesh.h()).powi(2);
        let too_stiff = constant_problem(limit * 1.01, 1.0);
        assert!(fem_majorant_2(&too_stiff, &v, &z, c01, c11, &rule).is_err());
    }

    #[test]
    fn flux_indicator_reduces_to_flux_misfit_for_zero_reaction() {
        let mesh = unit_mesh(4);
        let rule = triangle_rule(4).unwrap();
        let problem =
            ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 0.0, |p| 1.0 + p[0] - p[1]).unwrap();
        let v = FemField::interpolate(Arc::clone(&mesh), |p| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
        });
        let z = average_flux(&numerical_flux(&v, &problem.diffusion)).unwrap();
        let report = aive_indicator(&problem, &v, &z, &rule).unwrap();
        assert!(report.residual_elements.iter().all(|&r| !r));
        let misfit = diffusion_term(&v, &z, &SpdMatrix2::identity()).unwrap();
        assert_relative_eq!(report.indicator_sq, misfit, epsilon = 1e-13);
        // Linear source: oscillation vanishes, bound collapses to the misfit.
        assert!(report.oscillation_sq < 1e-26);
        assert_relative_eq!(report.bound, misfit, epsilon = 1e-12);
    }

    #[test]
    fn flux_indicator_adds_residual_terms_under_strong_reaction() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let problem = constant_problem(1e6, 1.0);
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.0, 0.0]);
        let report = aive_indicator(&problem, &v, &z, &rule).unwrap();
        assert!(report.residual_elements.iter().all(|&r| r));
        // Residual = f = 1, weight 1/sigma: indicator = 1/sigma per unit area.
        assert_relative_eq!(report.indicator_sq, 1e-6, epsilon = 1e-16);
        let anisotropic = ProblemSpec::new([[2.0, 0.0], [0.0, 1.0]], 1e6, |_| 1.0).unwrap();
        assert!(matches!(
            aive_indicator(&anisotropic, &v, &z, &rule),
            Err(MajorantError::IdentityDiffusionRequired)
        ));
    }

    #[test]
    fn flux_indicator_repackages_into_the_common_report_layout() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let problem = ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 2.0, |p| {
            (PI * p[0]).sin() * p[1]
        })
        .unwrap();
        let v = FemField::interpolate(Arc::clone(&mesh), |p| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
        });
        let z = average_flux(&numerical_flux(&v, &problem.diffusion)).unwrap();
        let indicator = aive_indicator(&problem, &v, &z, &rule).unwrap();
        let bound = indicator.bound;
        let report = indicator.into_majorant(&problem, &mesh);
        assert_relative_eq!(report.total, bound, epsilon = 1e-14);
        assert_eq!(report.total, report.recombine());
        let sums: f64 = report.elements.diffusion.iter().sum();
        assert_relative_eq!(sums, report.diffusion, epsilon = 1e-13);
    }

    #[test]
    fn line_integral_bound_matches_analytic_unit_residual() {
        let mesh = unit_mesh(4);
        let problem = constant_problem(0.0, 1.0);
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.0, 0.0]);
        // beta1 = 1: only the x-direction term, || x ||_0 = 1/sqrt(3).
        let report = boxed_integral(&problem, &v, &z, |_| 1.0).unwrap();
        assert_relative_eq!(report.line_norms[0], 1.0 / 3.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(report.line_norms[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(report.total, 1.0 / 3.0f64.sqrt(), epsilon = 1e-12);
        // Symmetric split: each direction carries half.
        let report = boxed_integral(&problem, &v, &z, |_| 0.5).unwrap();
        assert_relative_eq!(report.line_norms[0], 0.5 / 3.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(report.line_norms[1], 0.5 / 3.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn line_integral_bound_reduces_to_flux_norm_without_residual() {
        let mesh = unit_mesh(3);
        let problem = constant_problem(0.0, 0.0);
        let v = FemField::interpolate(Arc::clone(&mesh), |p| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
        });
        let z = const_flux(&mesh, [0.0, 0.0]);
        let report = boxed_integral(&problem, &v, &z, |_| 0.5).unwrap();
        let flux_sq = diffusion_term(&v, &z, &SpdMatrix2::identity()).unwrap();
        assert_relative_eq!(report.total, flux_sq.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn line_integral_bound_requires_the_structured_square() {
        let text = "vertices 3\n0 0 1\n1 0 1\n0 1 1\ntriangles 1\n0 1 2\n";
        let mesh = Arc::new(Mesh::parse(text).unwrap());
        let problem = constant_problem(0.0, 1.0);
        let v = FemField::new(Arc::clone(&mesh), vec![0.0; 3], true).unwrap();
        let z = const_flux(&mesh, [0.0, 0.0]);
        assert!(matches!(
            boxed_integral(&problem, &v, &z, |_| 0.5),
            Err(MajorantError::StructuredMeshRequired)
        ));
    }

    #[test]
    fn every_bound_vanishes_on_the_zero_problem() {
        let mesh = unit_mesh(2);
        let rule = triangle_rule(4).unwrap();
        let v = zero_field(&mesh);
        let z = const_flux(&mesh, [0.0, 0.0]);
        let zero_sigma = constant_problem(0.0, 0.0);
        let with_sigma = constant_problem(1.0, 0.0);
        assert_eq!(aubin(&with_sigma, &v, &z, &rule).unwrap().total, 0.0);
        assert_eq!(
            repin_frolov(&zero_sigma, &v, &z, 1.0, 0.05, &rule).unwrap().total,
            0.0
        );
        assert_eq!(churilova(&with_sigma, &v, &z, 1.0, 0.05, &rule).unwrap().total, 0.0);
        assert_eq!(
            consistent_majorant(&with_sigma, &v, &z, 10.0, &rule).unwrap().total,
            0.0
        );
        assert_eq!(
            fem_majorant_1(&zero_sigma, &v, &z, 0.5, &rule).unwrap().total,
            0.0
        );
        assert_eq!(
            fem_majorant_2(&zero_sigma, &v, &z, 0.4, 1.8, &rule).unwrap().total,
            0.0
        );
        assert_eq!(aive_indicator(&zero_sigma, &v, &z, &rule).unwrap().bound, 0.0);
        assert_eq!(boxed_integral(&zero_sigma, &v, &z, |_| 0.5).unwrap().total, 0.0);
    }

    #[test]
    fn effectivity_is_the_root_ratio_and_rejects_zero_error() {
        assert_relative_eq!(effectivity(0.25, 0.25).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(effectivity(1.0, 0.25).unwrap(), 2.0, epsilon = 1e-15);
        assert!(matches!(effectivity(1.0, 0.0), Err(MajorantError::ZeroTrueError)));
    }

    proptest! {
        // With the diffusion part fixed, every bound is nondecreasing in
        // the residual: scale a constant source up and compare totals.
        #[test]
        fn totals_are_monotone_in_the_residual(
            f_small in 0.0f64..2.0,
            extra in 0.0f64..2.0,
            sigma in 0.1f64..5.0,
            eps in 0.05f64..5.0,
        ) {
            let mesh = unit_mesh(2);
            let rule = triangle_rule(4).unwrap();
            let v = zero_field(&mesh);
            let z = const_flux(&mesh, [0.1, 0.0]);
            let c_omega = 1.0 / (2.0 * PI * PI);
            let small = constant_problem(sigma, f_small);
            let large = constant_problem(sigma, f_small + extra);
            let pairs = [
                (aubin(&small, &v, &z, &rule).unwrap(), aubin(&large, &v, &z, &rule).unwrap()),
                (
                    churilova(&small, &v, &z, eps, c_omega, &rule).unwrap(),
                    churilova(&large, &v, &z, eps, c_omega, &rule).unwrap(),
                ),
                (
                    consistent_majorant(&small, &v, &z, 10.0, &rule).unwrap(),
                    consistent_majorant(&large, &v, &z, 10.0, &rule).unwrap(),
                ),
            ];
            for (lo, hi) in pairs {
                prop_assert!(hi.total >= lo.total - 1e-12);
                prop_assert!(lo.theta_big >= 0.0 && lo.residual_mult >= 0.0);
            }
            let zero_small = constant_problem(0.0, f_small);
            let zero_large = constant_problem(0.0, f_small + extra);
            let lo = repin_frolov(&zero_small, &v, &z, eps, c_omega, &rule).unwrap();
            let hi = repin_frolov(&zero_large, &v, &z, eps, c_omega, &rule).unwrap();
            prop_assert!(hi.total >= lo.total - 1e-12);
        }
    }

    #[test]
    fn element_contributions_sum_to_global_components() {
        let mesh = unit_mesh(4);
        let rule = triangle_rule(4).unwrap();
        let problem = ProblemSpec::new([[1.0, 0.0], [0.0, 1.0]], 0.5, |p| {
            (PI * p[0]).sin() * (2.0 * PI * p[1]).cos()
        })
        .unwrap();
        let v = FemField::interpolate(Arc::clone(&mesh), |p| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
        });
        let z = average_flux(&numerical_flux(&v, &problem.diffusion)).unwrap();
        let report = consistent_osc_low(&problem, &v, &z, 5.0, 1.0, &rule).unwrap();
        let d: f64 = report.elements.diffusion.iter().sum();
        let r: f64 = report.elements.residual_sq.iter().sum();
        let o: f64 = report.elements.oscillation.iter().sum();
        assert_relative_eq!(d, report.diffusion, max_relative = 1e-12);
        assert_relative_eq!(r, report.residual_sq, max_relative = 1e-12);
        assert_relative_eq!(o, report.oscillation, max_relative = 1e-12);
        assert_eq!(report.total, report.recombine());
    }
}
