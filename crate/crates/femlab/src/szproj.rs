//! Quasi-interpolation onto the P1 space and empirical calibration of the
//! interpolation, stability, and inverse-inequality constants used by the
//! mesh-dependent error bounds.
//!
//! Each vertex is assigned one incident mesh edge (boundary vertices get a
//! boundary edge). The interpolant weights the trace of `v` on that edge
//! against a dual function `theta = a lambda_1 + b lambda_2` chosen so that
//! `int theta lambda_1 = 1` and `int theta lambda_2 = 0`; this reproduces
//! P1 fields and preserves piecewise linear boundary traces.

use crate::femcore::{
    assemble_load, assemble_mass, assemble_stiffness, solve_cg, FemError, FemField, GradientFn,
    ProblemSpec, ScalarFn, solve_reaction_diffusion,
};
use crate::linalg::{solve2, solve3, SpdMatrix2};
use crate::mesh::Mesh;
use crate::quadrature::{EdgeRule, QuadRule};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SzError {
    #[error("edge length must be positive, got {length}")]
    ZeroLengthEdge { length: f64 },
    #[error("calibration needs at least two mesh levels, got {levels}")]
    TooFewLevels { levels: usize },
    #[error("calibration sample set is empty")]
    NoSamples,
    #[error("calibration problem {index} has (numerically) zero energy error; its exact solution lies in the FE space")]
    ZeroEnergyError { index: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Dual function on an assigned edge, `theta = a lambda_1 + b lambda_2`.
#[derive(Debug, Clone, Copy)]
pub struct DualEdgeFunction {
    pub a: f64,
    pub b: f64,
}

impl DualEdgeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * (1.0 - t) + self.b * t
    }
}

/// Solves the 2x2 edge Gram system `[[L/3, L/6], [L/6, L/3]]` for the
/// biorthogonal weights; the result is `(4/L, -2/L)`.
pub fn dual_edge_function(length: f64) -> Result<DualEdgeFunction, SzError> {
    if !(length > 0.0) {
        return Err(SzError::ZeroLengthEdge { length });
    }
    let gram = [[length / 3.0, length / 6.0], [length / 6.0, length / 3.0]];
    let [a, b] = solve2(gram, [1.0, 0.0]).expect("edge Gram matrix is nonsingular");
    Ok(DualEdgeFunction { a, b })
}

/// Per-vertex edge choice: vertex `i` integrates over the edge from `i`
/// to `far(i)`.
#[derive(Debug, Clone)]
pub struct FaceAssignment {
    far: Vec<usize>,
}

impl FaceAssignment {
    pub fn far(&self, vertex: usize) -> usize {
        self.far[vertex]
    }
}

/// Chooses one incident mesh edge per vertex. Boundary vertices must
/// receive a boundary edge so that boundary traces are preserved; ties are
/// broken towards the smallest far-endpoint index.
pub fn assign_faces(mesh: &Mesh) -> FaceAssignment {
    let nv = mesh.num_vertices();
    let mut far = vec![usize::MAX; nv];
    // Interior vertices: smallest neighbour over all mesh edges.
    for tri in mesh.triangles() {
        for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            if !mesh.is_boundary_vertex(a) && b < far[a] {
                far[a] = b;
            }
            if !mesh.is_boundary_vertex(b) && a < far[b] {
                far[b] = a;
            }
        }
    }
    // Boundary vertices: smallest neighbour along the boundary loop.
    for &(a, b) in mesh.boundary_edges() {
        if b < far[a] {
            far[a] = b;
        }
        if a < far[b] {
            far[b] = a;
        }
    }
    debug_assert!(far.iter().all(|&f| f != usize::MAX));
    FaceAssignment { far }
}

fn field_with_detected_trace(mesh: Arc<Mesh>, coeffs: Vec<f64>) -> FemField {
    let zero_trace = mesh.boundary_vertices().all(|v| coeffs[v] == 0.0);
    FemField::new(mesh, coeffs, zero_trace).expect("coefficient count matches by construction")
}

/// Quasi-interpolant of a pointwise evaluable function.
pub fn scott_zhang(
    mesh: &Arc<Mesh>,
    assignment: &FaceAssignment,
    rule: &EdgeRule,
    v: impl Fn([f64; 2]) -> f64,
) -> Result<FemField, SzError> {
    let mut coeffs = Vec::with_capacity(mesh.num_vertices());
    for i in 0..mesh.num_vertices() {
        let far = assignment.far(i);
        let pi = mesh.vertex(i);
        let pf = mesh.vertex(far);
        let length = ((pf[0] - pi[0]).powi(2) + (pf[1] - pi[1]).powi(2)).sqrt();
        let dual = dual_edge_function(length)?;
        let mut acc = 0.0;
        for (bary, w) in rule.points().iter().zip(rule.weights()) {
            let t = bary[1];
            let p = [
                bary[0] * pi[0] + t * pf[0],
                bary[0] * pi[1] + t * pf[1],
            ];
            acc += w * dual.eval(t) * v(p);
        }
        coeffs.push(length * acc);
    }
    Ok(field_with_detected_trace(Arc::clone(mesh), coeffs))
}

/// Quasi-interpolant of a P1 field, using the exact linear trace on each
/// assigned edge. Reproduces the input coefficients.
pub fn scott_zhang_field(
    field: &FemField,
    assignment: &FaceAssignment,
    rule: &EdgeRule,
) -> Result<FemField, SzError> {
    let mesh = field.mesh();
    let mut coeffs = Vec::with_capacity(mesh.num_vertices());
    for i in 0..mesh.num_vertices() {
        let far = assignment.far(i);
        let pi = mesh.vertex(i);
        let pf = mesh.vertex(far);
        let length = ((pf[0] - pi[0]).powi(2) + (pf[1] - pi[1]).powi(2)).sqrt();
        let dual = dual_edge_function(length)?;
        let (ci, cf) = (field.coefficients()[i], field.coefficients()[far]);
        let mut acc = 0.0;
        for (bary, w) in rule.points().iter().zip(rule.weights()) {
            let t = bary[1];
            acc += w * dual.eval(t) * (bary[0] * ci + t * cf);
        }
        coeffs.push(length * acc);
    }
    Ok(field_with_detected_trace(Arc::clone(mesh), coeffs))
}

/// Global L2 projection onto the conforming P1 space.
pub fn l2_project_scalar(
    mesh: &Arc<Mesh>,
    rule: &QuadRule,
    v: impl FnMut([f64; 2]) -> f64,
) -> Result<FemField, FemError> {
    let mass = assemble_mass(mesh);
    let rhs = assemble_load(mesh, rule, v);
    let (coeffs, _) = solve_cg(&mass, &rhs, 1e-12, 10 * mass.dim().max(100))?;
    Ok(field_with_detected_trace(Arc::clone(mesh), coeffs))
}

/// Discontinuous elementwise linear L2 projection, stored as nodal values
/// on each element.
#[derive(Debug, Clone)]
pub struct ElementwiseP1 {
    nodal: Vec<[f64; 3]>,
}

impl ElementwiseP1 {
    pub fn eval(&self, r: usize, bary: [f64; 3]) -> f64 {
        let n = self.nodal[r];
        bary[0] * n[0] + bary[1] * n[1] + bary[2] * n[2]
    }

    pub fn nodal(&self, r: usize) -> [f64; 3] {
        self.nodal[r]
    }
}

/// Projects `f` onto linears element by element: solves the 3x3 local
/// mass system `area/12 (1 + delta_ij)` against quadrature moments.
pub fn elementwise_p1_projection(
    mesh: &Mesh,
    rule: &QuadRule,
    mut f: impl FnMut([f64; 2]) -> f64,
) -> ElementwiseP1 {
    let mut nodal = Vec::with_capacity(mesh.num_triangles());
    for r in 0..mesh.num_triangles() {
        let [v0, v1, v2] = mesh.triangle_vertices(r);
        let jac = 2.0 * mesh.area(r);
        let mut moments = [0.0f64; 3];
        for (bary, w) in rule.points().iter().zip(rule.weights()) {
            let p = [
                bary[0] * v0[0] + bary[1] * v1[0] + bary[2] * v2[0],
                bary[0] * v0[1] + bary[1] * v1[1] + bary[2] * v2[1],
            ];
            let fv = jac * w * f(p);
            for i in 0..3 {
                moments[i] += fv * bary[i];
            }
        }
        let w = mesh.area(r) / 12.0;
        let local = [
            [2.0 * w, w, w],
            [w, 2.0 * w, w],
            [w, w, 2.0 * w],
        ];
        let coeffs = solve3(local, moments).expect("local mass matrix is SPD");
        nodal.push(coeffs);
    }
    ElementwiseP1 { nodal }
}

/// Smooth calibration sample with an analytic H1 seminorm.
#[derive(Clone)]
pub struct Sample {
    pub name: String,
    pub value: ScalarFn,
    pub gradient: GradientFn,
    pub h1_semi_sq: f64,
}

/// Nine separable sine modes plus two polynomial bumps on the unit square.
pub fn default_samples() -> Vec<Sample> {
    let mut samples = Vec::new();
    for k in 1..=3u32 {
        for l in 1..=3u32 {
            let (kf, lf) = (f64::from(k), f64::from(l));
            samples.push(Sample {
                name: format!("sin{k}{l}"),
                value: Arc::new(move |p: [f64; 2]| {
                    (kf * PI * p[0]).sin() * (lf * PI * p[1]).sin()
                }),
                gradient: Arc::new(move |p: [f64; 2]| {
                    [
                        kf * PI * (kf * PI * p[0]).cos() * (lf * PI * p[1]).sin(),
                        lf * PI * (kf * PI * p[0]).sin() * (lf * PI * p[1]).cos(),
                    ]
                }),
                h1_semi_sq: (kf * kf + lf * lf) * PI * PI / 4.0,
            });
        }
    }
    samples.push(Sample {
        name: "bubble".into(),
        value: Arc::new(|p: [f64; 2]| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])),
        gradient: Arc::new(|p: [f64; 2]| {
            [
                (1.0 - 2.0 * p[0]) * p[1] * (1.0 - p[1]),
                p[0] * (1.0 - p[0]) * (1.0 - 2.0 * p[1]),
            ]
        }),
        h1_semi_sq: 1.0 / 45.0,
    });
    samples.push(Sample {
        name: "bubble_sq".into(),
        value: Arc::new(|p: [f64; 2]| {
            let b = p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
            b * b
        }),
        gradient: Arc::new(|p: [f64; 2]| {
            let bx = p[0] * (1.0 - p[0]);
            let by = p[1] * (1.0 - p[1]);
            [
                2.0 * bx * by * by * (1.0 - 2.0 * p[0]),
                2.0 * bx * bx * by * (1.0 - 2.0 * p[1]),
            ]
        }),
        h1_semi_sq: 2.0 / 33075.0,
    });
    samples
}

#[derive(Debug, Clone)]
pub struct CalibrationLevel {
    pub level: usize,
    pub h: f64,
    pub ratio: f64,
}

/// Empirically measured constant: per-level ratios, their supremum, and
/// the safety-adjusted value used by the estimators.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub constant: String,
    pub levels: Vec<CalibrationLevel>,
    pub supremum: f64,
    pub safety_factor: f64,
    pub value: f64,
    pub samples: Vec<String>,
}

pub const CALIBRATION_CSV_HEADER: &str = "constant,level,h,ratio,supremum";

impl CalibrationReport {
    fn from_levels(
        constant: &str,
        levels: Vec<CalibrationLevel>,
        safety_factor: f64,
        samples: Vec<String>,
    ) -> Self {
        let supremum = levels.iter().map(|l| l.ratio).fold(f64::NEG_INFINITY, f64::max);
        Self {
            constant: constant.to_string(),
            levels,
            supremum,
            safety_factor,
            value: safety_factor * supremum,
            samples,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for level in &self.levels {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.constant, level.level, level.h, level.ratio, self.supremum
            );
        }
        out
    }
}

/// The three primitive quasi-interpolation constants and their assembled
/// combination:
/// - `csz01`: `||v - I_h v||_0 <= csz01 h |v|_1`,
/// - `stability`: `|I_h v|_1 <= stability |v|_1`,
/// - `inverse`: `|w|_1 <= inverse h^{-1} ||w||_0` for P1 fields `w`,
/// - `combined`: `stability + 2 inverse csz01`, the H1-stability constant
///   of the difference between the quasi-interpolant and the L2 projection.
#[derive(Debug, Clone)]
pub struct CszCalibration {
    pub csz01: CalibrationReport,
    pub stability: CalibrationReport,
    pub inverse: CalibrationReport,
    pub combined: CalibrationReport,
}

impl CszCalibration {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CALIBRATION_CSV_HEADER);
        out.push('\n');
        out.push_str(&self.csz01.to_csv());
        out.push_str(&self.stability.to_csv());
        out.push_str(&self.inverse.to_csv());
        out.push_str(&self.combined.to_csv());
        out
    }
}

pub const DEFAULT_SAFETY_FACTOR: f64 = 1.25;

/// Measures the quasi-interpolation constants on a mesh sequence.
pub fn calibrate_csz(
    meshes: &[Arc<Mesh>],
    samples: &[Sample],
    edge_rule: &EdgeRule,
    norm_rule: &QuadRule,
    safety_factor: f64,
) -> Result<CszCalibration, SzError> {
    if meshes.len() < 2 {
        return Err(SzError::TooFewLevels { levels: meshes.len() });
    }
    if samples.is_empty() {
        return Err(SzError::NoSamples);
    }
    let sample_names: Vec<String> = samples.iter().map(|s| s.name.clone()).collect();
    let mut lv_csz01 = Vec::new();
    let mut lv_stability = Vec::new();
    let mut lv_inverse = Vec::new();
    for (idx, mesh) in meshes.iter().enumerate() {
        let assignment = assign_faces(mesh);
        let h = mesh.h();
        let mut worst01 = 0.0f64;
        let mut worst_stab = 0.0f64;
        for sample in samples {
            let interp = scott_zhang(mesh, &assignment, edge_rule, |p| (sample.value)(p))?;
            let mut err_sq = 0.0;
            let mut grad_sq = 0.0;
            for r in 0..mesh.num_triangles() {
                err_sq += crate::quadrature::integrate_on_element_bary(
                    mesh,
                    r,
                    norm_rule,
                    |p, bary| {
                        let d = (sample.value)(p) - interp.value(r, bary);
                        d * d
                    },
                );
                let g = interp.element_gradient(r);
                grad_sq += mesh.area(r) * (g[0] * g[0] + g[1] * g[1]);
            }
            let semi = sample.h1_semi_sq.sqrt();
            worst01 = worst01.max(err_sq.max(0.0).sqrt() / (h * semi));
            worst_stab = worst_stab.max(grad_sq.max(0.0).sqrt() / semi);
        }
        lv_csz01.push(CalibrationLevel { level: idx, h, ratio: worst01 });
        lv_stability.push(CalibrationLevel { level: idx, h, ratio: worst_stab });
        let lambda_max = max_generalized_eigenvalue(mesh)?;
        lv_inverse.push(CalibrationLevel { level: idx, h, ratio: h * lambda_max.sqrt() });
    }
    let csz01 =
        CalibrationReport::from_levels("c_sz01", lv_csz01, safety_factor, sample_names.clone());
    let stability =
        CalibrationReport::from_levels("c_breve", lv_stability, safety_factor, sample_names);
    let inverse = CalibrationReport::from_levels(
        "c_inverse",
        lv_inverse,
        safety_factor,
        vec!["p1-rayleigh".into()],
    );

    let combined_levels: Vec<CalibrationLevel> = csz01
        .levels
        .iter()
        .zip(&stability.levels)
        .zip(&inverse.levels)
        .map(|((c01, stab), inv)| CalibrationLevel {
            level: c01.level,
            h: c01.h,
            ratio: stab.ratio + 2.0 * inv.ratio * c01.ratio,
        })
        .collect();
    let supremum = combined_levels
        .iter()
        .map(|l| l.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let combined = CalibrationReport {
        constant: "c_sz11".to_string(),
        levels: combined_levels,
        supremum,
        safety_factor: 1.0,
        value: stability.value + 2.0 * inverse.value * csz01.value,
        samples: vec!["assembled".into()],
    };
    Ok(CszCalibration { csz01, stability, inverse, combined })
}

/// Largest eigenvalue of the stiffness-mass pencil over the full P1 space
/// (identity diffusion), by power iteration with a mass solve per step.
fn max_generalized_eigenvalue(mesh: &Arc<Mesh>) -> Result<f64, FemError> {
    let stiffness = assemble_stiffness(mesh, &SpdMatrix2::identity());
    let mass = assemble_mass(mesh);
    let n = stiffness.dim();
    let mut x: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin() + 0.01).collect();
    let mut rho_prev = 0.0f64;
    for _ in 0..500 {
        let kx = stiffness.apply(&x);
        let mx = mass.apply(&x);
        let num: f64 = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(&mx).map(|(a, b)| a * b).sum();
        let rho = num / den;
        if (rho - rho_prev).abs() <= 1e-10 * rho.abs() {
            return Ok(rho);
        }
        rho_prev = rho;
        let (y, _) = solve_cg(&mass, &kx, 1e-12, 10 * n.max(100))?;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
    }
    Ok(rho_prev)
}

/// Calibration of the discrete duality constant in
/// `||e||_0 <= c h ||e||_A`: ratios measured from Galerkin solves of
/// manufactured problems.
#[derive(Debug, Clone)]
pub struct NitscheCalibration {
    pub report: CalibrationReport,
}

impl NitscheCalibration {
    pub fn c_dagger(&self) -> f64 {
        self.report.value
    }

    /// Critical reaction threshold `1 / (c h)^2`.
    pub fn sigma_star(&self, h: f64) -> f64 {
        1.0 / (self.c_dagger() * h).powi(2)
    }
}

pub fn calibrate_cdagger(
    problems: &[(String, ProblemSpec)],
    meshes: &[Arc<Mesh>],
    load_rule: &QuadRule,
    norm_rule: &QuadRule,
    safety_factor: f64,
) -> Result<NitscheCalibration, SzError> {
    if meshes.len() < 2 {
        return Err(SzError::TooFewLevels { levels: meshes.len() });
    }
    if problems.is_empty() {
        return Err(SzError::NoSamples);
    }
    let mut levels = Vec::new();
    for (idx, mesh) in meshes.iter().enumerate() {
        let h = mesh.h();
        let mut worst = 0.0f64;
        for (pindex, (_, problem)) in problems.iter().enumerate() {
            let exact = problem.exact().ok_or(FemError::MissingExactSolution)?;
            let field = solve_reaction_diffusion(problem, mesh, load_rule)?;
            let err_l2 = field.error_l2(norm_rule, |p| (exact.value)(p));
            let err_a = field.error_a(norm_rule, &problem.diffusion, |p| (exact.gradient)(p));
            if err_a <= 1e-14 {
                return Err(SzError::ZeroEnergyError { index: pindex });
            }
            worst = worst.max(err_l2 / (h * err_a));
        }
        levels.push(CalibrationLevel { level: idx, h, ratio: worst });
    }
    let names = problems.iter().map(|(n, _)| n.clone()).collect();
    Ok(NitscheCalibration {
        report: CalibrationReport::from_levels("c_dagger", levels, safety_factor, names),
    })
}
