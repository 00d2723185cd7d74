//! Flux recovery: the broken numerical flux `-A grad v` of a P1 field and
//! its conforming (vertexwise P1) reconstructions.

use crate::femcore::{assemble_mass, solve_cg, FemError, FemField};
use crate::linalg::SpdMatrix2;
use crate::mesh::Mesh;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("operation requires a broken (elementwise) flux")]
    ExpectedBrokenFlux,
    #[error("operation requires a conforming (vertexwise) flux")]
    ExpectedConformingFlux,
    #[error("flux and field live on different meshes")]
    MeshMismatch,
    #[error(transparent)]
    Solver(#[from] FemError),
}

#[derive(Debug, Clone)]
enum FluxData {
    /// One constant vector per element.
    Broken(Vec<[f64; 2]>),
    /// One vector per vertex, interpolated linearly on elements.
    Conforming(Vec<[f64; 2]>),
}

/// Approximation of the exact flux `-A grad u`.
#[derive(Clone)]
pub struct FluxField {
    mesh: Arc<Mesh>,
    data: FluxData,
}

impl FluxField {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn is_conforming(&self) -> bool {
        matches!(self.data, FluxData::Conforming(_))
    }

    pub fn from_vertex_values(mesh: Arc<Mesh>, values: Vec<[f64; 2]>) -> Result<Self, FluxError> {
        if values.len() != mesh.num_vertices() {
            return Err(FluxError::MeshMismatch);
        }
        Ok(Self { mesh, data: FluxData::Conforming(values) })
    }

    pub fn from_element_values(mesh: Arc<Mesh>, values: Vec<[f64; 2]>) -> Result<Self, FluxError> {
        if values.len() != mesh.num_triangles() {
            return Err(FluxError::MeshMismatch);
        }
        Ok(Self { mesh, data: FluxData::Broken(values) })
    }

    pub fn value(&self, r: usize, bary: [f64; 3]) -> [f64; 2] {
        match &self.data {
            FluxData::Broken(v) => v[r],
            FluxData::Conforming(v) => {
                let [a, b, c] = self.mesh.triangle(r);
                [
                    bary[0] * v[a][0] + bary[1] * v[b][0] + bary[2] * v[c][0],
                    bary[0] * v[a][1] + bary[1] * v[b][1] + bary[2] * v[c][1],
                ]
            }
        }
    }

    pub fn vertex_values(&self) -> Result<&[[f64; 2]], FluxError> {
        match &self.data {
            FluxData::Conforming(v) => Ok(v),
            FluxData::Broken(_) => Err(FluxError::ExpectedConformingFlux),
        }
    }

    /// Constant divergence of a conforming flux on element `r`. Broken
    /// fluxes carry no distributional divergence and are rejected.
    pub fn divergence(&self, r: usize) -> Result<f64, FluxError> {
        match &self.data {
            FluxData::Broken(_) => Err(FluxError::ExpectedConformingFlux),
            FluxData::Conforming(v) => {
                let tri = self.mesh.triangle(r);
                let g = self.mesh.gradients(r);
                Ok((0..3)
                    .map(|i| v[tri[i]][0] * g[i][0] + v[tri[i]][1] * g[i][1])
                    .sum())
            }
        }
    }
}

/// Broken numerical flux `-A grad v`, constant per element.
pub fn numerical_flux(field: &FemField, a: &SpdMatrix2) -> FluxField {
    let values = (0..field.mesh().num_triangles())
        .map(|r| {
            let g = field.element_gradient(r);
            let ag = a.apply(g);
            [-ag[0], -ag[1]]
        })
        .collect();
    FluxField { mesh: Arc::clone(field.mesh()), data: FluxData::Broken(values) }
}

fn average_into(mesh: &Mesh, broken: &[[f64; 2]], visits: &mut usize) -> Vec<[f64; 2]> {
    let mut acc = vec![[0.0f64; 2]; mesh.num_vertices()];
    let mut weight = vec![0.0f64; mesh.num_vertices()];
    for (r, z) in broken.iter().enumerate() {
        let area = mesh.area(r);
        for v in mesh.triangle(r) {
            acc[v][0] += area * z[0];
            acc[v][1] += area * z[1];
            weight[v] += area;
            *visits += 1;
        }
    }
    for (a, w) in acc.iter_mut().zip(&weight) {
        a[0] /= w;
        a[1] /= w;
    }
    acc
}

/// Area-weighted vertex averaging of a broken flux. One pass over the
/// elements, so the cost is three visits per triangle.
pub fn average_flux(broken: &FluxField) -> Result<FluxField, FluxError> {
    let values = match &broken.data {
        FluxData::Broken(v) => v,
        FluxData::Conforming(_) => return Err(FluxError::ExpectedBrokenFlux),
    };
    let mut visits = 0usize;
    let averaged = average_into(&broken.mesh, values, &mut visits);
    debug_assert_eq!(visits, 3 * broken.mesh.num_triangles());
    Ok(FluxField { mesh: Arc::clone(&broken.mesh), data: FluxData::Conforming(averaged) })
}

/// Componentwise L2 projection of a broken flux onto the conforming P1
/// space: solves the consistent mass system. The load integrals are exact
/// because the broken flux is constant per element.
pub fn l2_project_flux(broken: &FluxField) -> Result<FluxField, FluxError> {
    let values = match &broken.data {
        FluxData::Broken(v) => v,
        FluxData::Conforming(_) => return Err(FluxError::ExpectedBrokenFlux),
    };
    let mesh = &broken.mesh;
    let mass = assemble_mass(mesh);
    let mut rhs = [vec![0.0; mesh.num_vertices()], vec![0.0; mesh.num_vertices()]];
    for (r, z) in values.iter().enumerate() {
        let third = mesh.area(r) / 3.0;
        for v in mesh.triangle(r) {
            rhs[0][v] += third * z[0];
            rhs[1][v] += third * z[1];
        }
    }
    let max_iterations = 10 * mass.dim().max(100);
    let (cx, _) = solve_cg(&mass, &rhs[0], 1e-12, max_iterations)?;
    let (cy, _) = solve_cg(&mass, &rhs[1], 1e-12, max_iterations)?;
    let values = cx.into_iter().zip(cy).map(|(x, y)| [x, y]).collect();
    Ok(FluxField { mesh: Arc::clone(mesh), data: FluxData::Conforming(values) })
}
