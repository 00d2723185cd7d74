//! P1 finite elements for the reaction-diffusion model problem
//! `-div(A grad u) + sigma u = f` with a homogeneous Dirichlet condition.

use crate::linalg::{LinalgError, SpdMatrix2};
use crate::mesh::{Mesh, PointLocator};
use crate::quadrature::{integrate_on_element_bary, QuadRule};
use std::sync::Arc;
use thiserror::Error;

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("reaction coefficient must be nonnegative, got {sigma}")]
    NegativeSigma { sigma: f64 },
    #[error("manufactured data is inconsistent at ({x}, {y}): residual {residual:e} exceeds tolerance")]
    InconsistentExactData { x: f64, y: f64, residual: f64 },
    #[error("field has {coeffs} coefficients but the mesh has {vertices} vertices")]
    CoefficientCountMismatch { coeffs: usize, vertices: usize },
    #[error("zero-trace field has nonzero coefficient {value:e} at boundary vertex {vertex}")]
    NonzeroTraceCoefficient { vertex: usize, value: f64 },
    #[error("fields live on different meshes")]
    MeshMismatch,
    #[error("no interior vertices: every vertex carries the Dirichlet condition")]
    EmptyInterior,
    #[error("rhs length {rhs} does not match system dimension {dim}")]
    RhsDimensionMismatch { rhs: usize, dim: usize },
    #[error("conjugate gradients stalled: matrix is not positive definite")]
    IndefiniteSystem,
    #[error("conjugate gradients did not converge: relative residual {achieved:e} after {iterations} iterations (target {target:e})")]
    CgDidNotConverge { achieved: f64, target: f64, iterations: usize },
    #[error("discrete residual {residual:e} violates the Galerkin orthogonality audit (allowed {allowed:e})")]
    GalerkinAuditFailed { residual: f64, allowed: f64 },
    #[error("problem has no exact solution attached")]
    MissingExactSolution,
}

/// Relative CG tolerance used by [`solve_reaction_diffusion`].
pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Exact solution attached to a manufactured problem.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarFn,
    pub gradient: GradientFn,
}

/// Constant-coefficient reaction-diffusion problem on a polygon with a
/// homogeneous Dirichlet condition.
#[derive(Clone)]
pub struct ProblemSpec {
    pub diffusion: SpdMatrix2,
    pub sigma: f64,
    source: ScalarFn,
    exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn new(
        diffusion: [[f64; 2]; 2],
        sigma: f64,
        source: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, FemError> {
        if !(sigma >= 0.0) {
            return Err(FemError::NegativeSigma { sigma });
        }
        Ok(Self {
            diffusion: SpdMatrix2::new(diffusion)?,
            sigma,
            source: Arc::new(source),
            exact: None,
        })
    }

    /// Attaches a manufactured solution and verifies
    /// `-div(A grad u) + sigma u = f` on a sample lattice, with the
    /// divergence taken by central differences of the supplied gradient.
    pub fn with_exact(
        mut self,
        value: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Result<Self, FemError> {
        let exact = ExactSolution {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        };
        let fd = 1e-5;
        // Low-discrepancy lattice keeps the check deterministic.
        let (a1, a2) = (0.754_877_666_246_692_7_f64, 0.569_840_290_998_053_2_f64);
        for i in 0..100u32 {
            let p = [
                (0.5 + a1 * f64::from(i + 1)).fract(),
                (0.5 + a2 * f64::from(i + 1)).fract(),
            ];
            let flux = |q: [f64; 2]| self.diffusion.apply((exact.gradient)(q));
            let div = (flux([p[0] + fd, p[1]])[0] - flux([p[0] - fd, p[1]])[0]) / (2.0 * fd)
                + (flux([p[0], p[1] + fd])[1] - flux([p[0], p[1] - fd])[1]) / (2.0 * fd);
            let f = (self.source)(p);
            let residual = -div + self.sigma * (exact.value)(p) - f;
            if residual.abs() > 1e-8 * (1.0 + f.abs()) {
                return Err(FemError::InconsistentExactData { x: p[0], y: p[1], residual });
            }
        }
        self.exact = Some(exact);
        Ok(self)
    }

    pub fn source_at(&self, p: [f64; 2]) -> f64 {
        (self.source)(p)
    }

    pub fn source(&self) -> ScalarFn {
        Arc::clone(&self.source)
    }

    pub fn exact(&self) -> Option<&ExactSolution> {
        self.exact.as_ref()
    }
}

/// Conforming P1 field: one coefficient per mesh vertex.
#[derive(Clone)]
pub struct FemField {
    mesh: Arc<Mesh>,
    coeffs: Vec<f64>,
    zero_trace: bool,
}

impl FemField {
    pub fn new(mesh: Arc<Mesh>, coeffs: Vec<f64>, zero_trace: bool) -> Result<Self, FemError> {
        if coeffs.len() != mesh.num_vertices() {
            return Err(FemError::CoefficientCountMismatch {
                coeffs: coeffs.len(),
                vertices: mesh.num_vertices(),
            });
        }
        if zero_trace {
            for v in mesh.boundary_vertices() {
                if coeffs[v] != 0.0 {
                    return Err(FemError::NonzeroTraceCoefficient { vertex: v, value: coeffs[v] });
                }
            }
        }
        Ok(Self { mesh, coeffs, zero_trace })
    }

    /// Vertex interpolant of `f`; the zero-trace flag is set when every
    /// boundary coefficient vanishes exactly.
    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let coeffs: Vec<f64> = mesh.vertices().iter().map(|&p| f(p)).collect();
        let zero_trace = mesh.boundary_vertices().all(|v| coeffs[v] == 0.0);
        Self { mesh, coeffs, zero_trace }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn zero_trace(&self) -> bool {
        self.zero_trace
    }

    pub fn value(&self, r: usize, bary: [f64; 3]) -> f64 {
        let [a, b, c] = self.mesh.triangle(r);
        bary[0] * self.coeffs[a] + bary[1] * self.coeffs[b] + bary[2] * self.coeffs[c]
    }

    /// Constant gradient on element `r`.
    pub fn element_gradient(&self, r: usize) -> [f64; 2] {
        let [a, b, c] = self.mesh.triangle(r);
        let g = self.mesh.gradients(r);
        [
            self.coeffs[a] * g[0][0] + self.coeffs[b] * g[1][0] + self.coeffs[c] * g[2][0],
            self.coeffs[a] * g[0][1] + self.coeffs[b] * g[1][1] + self.coeffs[c] * g[2][1],
        ]
    }

    pub fn eval(&self, locator: &PointLocator, p: [f64; 2]) -> Option<f64> {
        locator.locate(p).map(|(r, bary)| self.value(r, bary))
    }
}

/// Per-element constant gradients of a P1 field.
pub fn broken_gradient(field: &FemField) -> Vec<[f64; 2]> {
    (0..field.mesh().num_triangles())
        .map(|r| field.element_gradient(r))
        .collect()
}

/// Sparse symmetric matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSystem {
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.cols[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.cols[k] == j {
                return self.vals[k];
            }
        }
        0.0
    }

    /// Entrywise `self + scale * other`.
    pub fn add_scaled(&self, other: &SparseSystem, scale: f64) -> SparseSystem {
        let mut triplets = Vec::with_capacity(self.vals.len() + other.vals.len());
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                triplets.push((i, self.cols[k], self.vals[k]));
            }
        }
        for i in 0..other.dim {
            for k in other.row_ptr[i]..other.row_ptr[i + 1] {
                triplets.push((i, other.cols[k], scale * other.vals[k]));
            }
        }
        SparseSystem::from_triplets(self.dim.max(other.dim), triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.dim]; self.dim];
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                dense[i][self.cols[k]] = self.vals[k];
            }
        }
        dense
    }
}

/// Stiffness matrix `int grad phi_i . A grad phi_j`.
pub fn assemble_stiffness(mesh: &Mesh, a: &SpdMatrix2) -> SparseSystem {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for r in 0..mesh.num_triangles() {
        let tri = mesh.triangle(r);
        let g = mesh.gradients(r);
        let area = mesh.area(r);
        for i in 0..3 {
            let agi = a.apply(g[i]);
            for j in 0..3 {
                let val = area * (agi[0] * g[j][0] + agi[1] * g[j][1]);
                triplets.push((tri[i], tri[j], val));
            }
        }
    }
    SparseSystem::from_triplets(mesh.num_vertices(), triplets)
}

/// Mass matrix `int phi_i phi_j`, exact local block `area/12 * (1 + delta_ij)`.
pub fn assemble_mass(mesh: &Mesh) -> SparseSystem {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for r in 0..mesh.num_triangles() {
        let tri = mesh.triangle(r);
        let w = mesh.area(r) / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let val = if i == j { 2.0 * w } else { w };
                triplets.push((tri[i], tri[j], val));
            }
        }
    }
    SparseSystem::from_triplets(mesh.num_vertices(), triplets)
}

/// Load vector `int f phi_i` by elementwise quadrature.
pub fn assemble_load(
    mesh: &Mesh,
    rule: &QuadRule,
    mut f: impl FnMut([f64; 2]) -> f64,
) -> Vec<f64> {
    let mut load = vec![0.0; mesh.num_vertices()];
    for r in 0..mesh.num_triangles() {
        let tri = mesh.triangle(r);
        let [v0, v1, v2] = mesh.triangle_vertices(r);
        let jac = 2.0 * mesh.area(r);
        for (bary, w) in rule.points().iter().zip(rule.weights()) {
            let p = [
                bary[0] * v0[0] + bary[1] * v1[0] + bary[2] * v2[0],
                bary[0] * v0[1] + bary[1] * v1[1] + bary[2] * v2[1],
            ];
            let fv = jac * w * f(p);
            for i in 0..3 {
                load[tri[i]] += fv * bary[i];
            }
        }
    }
    load
}

/// Dirichlet-reduced system: interior rows and columns only, plus the
/// interior-to-global vertex map.
pub struct ReducedSystem {
    pub matrix: SparseSystem,
    pub rhs: Vec<f64>,
    pub interior: Vec<usize>,
    pub full_dim: usize,
}

impl ReducedSystem {
    /// Scatters interior coefficients into a full vector with zero trace.
    pub fn extend(&self, interior_coeffs: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_dim];
        for (k, &v) in self.interior.iter().enumerate() {
            full[v] = interior_coeffs[k];
        }
        full
    }
}

/// Removes Dirichlet rows and columns for the homogeneous condition.
pub fn apply_homogeneous_dirichlet(
    system: &SparseSystem,
    rhs: &[f64],
    mesh: &Mesh,
) -> Result<ReducedSystem, FemError> {
    if rhs.len() != system.dim() {
        return Err(FemError::RhsDimensionMismatch { rhs: rhs.len(), dim: system.dim() });
    }
    let mut to_interior = vec![usize::MAX; mesh.num_vertices()];
    let mut interior = Vec::new();
    for v in 0..mesh.num_vertices() {
        if !mesh.is_boundary_vertex(v) {
            to_interior[v] = interior.len();
            interior.push(v);
        }
    }
    if interior.is_empty() {
        return Err(FemError::EmptyInterior);
    }
    let mut triplets = Vec::new();
    for (row_red, &row) in interior.iter().enumerate() {
        for k in system.row_ptr[row]..system.row_ptr[row + 1] {
            let col = system.cols[k];
            if to_interior[col] != usize::MAX {
                triplets.push((row_red, to_interior[col], system.vals[k]));
            }
        }
    }
    let reduced_rhs = interior.iter().map(|&v| rhs[v]).collect();
    Ok(ReducedSystem {
        matrix: SparseSystem::from_triplets(interior.len(), triplets),
        rhs: reduced_rhs,
        interior,
        full_dim: mesh.num_vertices(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients. Convergence is declared on
/// the true residual: `||b - A x|| <= rel_tol ||b||`.
pub fn solve_cg(
    system: &SparseSystem,
    rhs: &[f64],
    rel_tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, CgReport), FemError> {
    let n = system.dim();
    if rhs.len() != n {
        return Err(FemError::RhsDimensionMismatch { rhs: rhs.len(), dim: n });
    }
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        return Ok((vec![0.0; n], CgReport { iterations: 0, relative_residual: 0.0 }));
    }
    let diag = system.diagonal();
    let precond = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        z.extend(r.iter().zip(&diag).map(|(ri, di)| if *di != 0.0 { ri / di } else { *ri }));
    };

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = Vec::with_capacity(n);
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    for iteration in 1..=max_iterations {
        system.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(FemError::IndefiniteSystem);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let norm_r = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_r <= rel_tol * norm_b {
            return Ok((
                x,
                CgReport { iterations: iteration, relative_residual: norm_r / norm_b },
            ));
        }
        precond(&r, &mut z);
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let norm_r = {
        system.matvec(&x, &mut ap);
        rhs.iter()
            .zip(&ap)
            .map(|(b, axi)| (b - axi) * (b - axi))
            .sum::<f64>()
            .sqrt()
    };
    Err(FemError::CgDidNotConverge {
        achieved: norm_r / norm_b,
        target: rel_tol,
        iterations: max_iterations,
    })
}

/// Galerkin solution of the reaction-diffusion problem. After the CG
/// solve the assembled interior residual is audited against ten times the
/// solver tolerance.
pub fn solve_reaction_diffusion(
    problem: &ProblemSpec,
    mesh: &Arc<Mesh>,
    load_rule: &QuadRule,
) -> Result<FemField, FemError> {
    let stiffness = assemble_stiffness(mesh, &problem.diffusion);
    let system = if problem.sigma == 0.0 {
        stiffness
    } else {
        stiffness.add_scaled(&assemble_mass(mesh), problem.sigma)
    };
    let load = assemble_load(mesh, load_rule, |p| problem.source_at(p));
    let reduced = apply_homogeneous_dirichlet(&system, &load, mesh)?;
    let max_iterations = 10 * reduced.matrix.dim();
    let (coeffs, _) = solve_cg(&reduced.matrix, &reduced.rhs, DEFAULT_CG_TOL, max_iterations)?;

    let residual = discrete_residual(&reduced.matrix, &reduced.rhs, &coeffs);
    let allowed = 10.0 * DEFAULT_CG_TOL;
    if residual > allowed {
        return Err(FemError::GalerkinAuditFailed { residual, allowed });
    }
    FemField::new(Arc::clone(mesh), reduced.extend(&coeffs), true)
}

/// Relative norm of the assembled residual `b - A x`.
pub fn discrete_residual(matrix: &SparseSystem, rhs: &[f64], x: &[f64]) -> f64 {
    let ax = matrix.apply(x);
    let num = rhs
        .iter()
        .zip(&ax)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let den = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// `||f||_0` of a pointwise evaluable function.
pub fn norm_l2(mesh: &Mesh, rule: &QuadRule, mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
    let sq: f64 = (0..mesh.num_triangles())
        .map(|r| {
            integrate_on_element_bary(mesh, r, rule, |p, _| {
                let v = f(p);
                v * v
            })
        })
        .sum();
    sq.max(0.0).sqrt()
}

/// `|g|_1`-style seminorm of a pointwise evaluable gradient field.
pub fn seminorm_h1(mesh: &Mesh, rule: &QuadRule, mut grad: impl FnMut([f64; 2]) -> [f64; 2]) -> f64 {
    let sq: f64 = (0..mesh.num_triangles())
        .map(|r| {
            integrate_on_element_bary(mesh, r, rule, |p, _| {
                let g = grad(p);
                g[0] * g[0] + g[1] * g[1]
            })
        })
        .sum();
    sq.max(0.0).sqrt()
}

/// Squared energy norm from its parts:
/// `|||v|||^2 = ||v||_A^2 + sigma ||v||_0^2`.
pub fn energy_combine(a_norm_sq: f64, l2_norm_sq: f64, sigma: f64) -> f64 {
    a_norm_sq + sigma * l2_norm_sq
}

impl FemField {
    /// `||v_h - u||_0` against an exact value function.
    pub fn error_l2(&self, rule: &QuadRule, exact: impl Fn([f64; 2]) -> f64) -> f64 {
        let sq: f64 = (0..self.mesh.num_triangles())
            .map(|r| {
                integrate_on_element_bary(&self.mesh, r, rule, |p, bary| {
                    let d = self.value(r, bary) - exact(p);
                    d * d
                })
            })
            .sum();
        sq.max(0.0).sqrt()
    }

    /// `||v_h - u||_A`, the diffusion part of the energy error.
    pub fn error_a(
        &self,
        rule: &QuadRule,
        a: &SpdMatrix2,
        exact_grad: impl Fn([f64; 2]) -> [f64; 2],
    ) -> f64 {
        let sq: f64 = (0..self.mesh.num_triangles())
            .map(|r| {
                let gh = self.element_gradient(r);
                integrate_on_element_bary(&self.mesh, r, rule, |p, _| {
                    let ge = exact_grad(p);
                    let d = [gh[0] - ge[0], gh[1] - ge[1]];
                    a.bilinear(d, d)
                })
            })
            .sum();
        sq.max(0.0).sqrt()
    }

    /// Squared energy error `|||v_h - u|||^2` for a manufactured problem.
    pub fn error_energy_sq(&self, rule: &QuadRule, problem: &ProblemSpec) -> Result<f64, FemError> {
        let exact = problem.exact().ok_or(FemError::MissingExactSolution)?;
        let a_part = self.error_a(rule, &problem.diffusion, |p| (exact.gradient)(p));
        let l2_part = self.error_l2(rule, |p| (exact.value)(p));
        Ok(energy_combine(a_part * a_part, l2_part * l2_part, problem.sigma))
    }
}

#[derive(Debug, Clone)]
pub struct AprioriRow {
    pub dofs: usize,
    pub h: f64,
    pub err_l2: f64,
    pub err_a: f64,
    pub err_energy: f64,
}

/// Convergence table with observed inter-level rates
/// `log2(value_h / value_{h/2})`.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub rows: Vec<AprioriRow>,
    pub rates_l2: Vec<f64>,
    pub rates_a: Vec<f64>,
    pub rates_energy: Vec<f64>,
}

/// Solves the same manufactured problem on a mesh sequence.
pub fn a_priori_report(
    problem: &ProblemSpec,
    meshes: &[Arc<Mesh>],
    load_rule: &QuadRule,
    norm_rule: &QuadRule,
) -> Result<AprioriReport, FemError> {
    let cells: Vec<(ProblemSpec, Arc<Mesh>)> = meshes
        .iter()
        .map(|m| (problem.clone(), Arc::clone(m)))
        .collect();
    a_priori_report_cells(&cells, load_rule, norm_rule)
}

/// Convergence table where the problem may change with the level, e.g.
/// for reaction coefficients tied to the mesh size.
pub fn a_priori_report_cells(
    cells: &[(ProblemSpec, Arc<Mesh>)],
    load_rule: &QuadRule,
    norm_rule: &QuadRule,
) -> Result<AprioriReport, FemError> {
    let mut rows = Vec::with_capacity(cells.len());
    for (problem, mesh) in cells {
        let exact = problem.exact().ok_or(FemError::MissingExactSolution)?;
        let field = solve_reaction_diffusion(problem, mesh, load_rule)?;
        let err_l2 = field.error_l2(norm_rule, |p| (exact.value)(p));
        let err_a = field.error_a(norm_rule, &problem.diffusion, |p| (exact.gradient)(p));
        let energy_sq = energy_combine(err_a * err_a, err_l2 * err_l2, problem.sigma);
        rows.push(AprioriRow {
            dofs: mesh.num_vertices() - mesh.boundary_vertices().count(),
            h: mesh.h(),
            err_l2,
            err_a,
            err_energy: energy_sq.sqrt(),
        });
    }
    let rate = |pick: fn(&AprioriRow) -> f64| -> Vec<f64> {
        rows.windows(2)
            .map(|w| (pick(&w[0]) / pick(&w[1])).log2() / (w[0].h / w[1].h).log2())
            .collect()
    };
    Ok(AprioriReport {
        rates_l2: rate(|r| r.err_l2),
        rates_a: rate(|r| r.err_a),
        rates_energy: rate(|r| r.err_energy),
        rows,
    })
}
