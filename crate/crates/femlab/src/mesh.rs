//! Conforming triangulations of planar polygons.
//!
//! Meshes are immutable after construction. Every constructor runs a full
//! audit: vertex indices in range, strictly positive signed areas
//! (counter-clockwise orientation), interior edges shared by exactly two
//! triangles with opposite orientation, no hanging vertices, and triangle
//! areas tiling the polygon area recovered from the boundary loop.
//! Boundary markers are inferred geometrically for generated meshes and
//! read explicitly from files; both are cross-checked against the edge
//! topology.
//!
//! The plain-text file format is
//!
//! ```text
//! # comment
//! vertices N
//! x y boundary_flag        (N lines, flag 0 or 1)
//! triangles M
//! i j k                    (M lines, 0-based, counter-clockwise)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("subdivision count must be at least 1")]
    InvalidSubdivision,
    #[error("triangle {triangle} references vertex {index}, mesh has {num_vertices} vertices")]
    VertexIndexOutOfRange { triangle: usize, index: usize, num_vertices: usize },
    #[error("triangle {triangle} has non-positive signed area {area:e}; vertices must be counter-clockwise")]
    NonPositiveArea { triangle: usize, area: f64 },
    #[error("non-conforming mesh: directed edge ({a}, {b}) appears in two triangles with the same orientation")]
    RepeatedDirectedEdge { a: usize, b: usize },
    #[error("non-conforming mesh: edge ({a}, {b}) is shared by more than two triangles")]
    EdgeUsedByMoreThanTwo { a: usize, b: usize },
    #[error("non-conforming mesh: vertex {vertex} hangs on edge ({a}, {b})")]
    HangingVertex { vertex: usize, a: usize, b: usize },
    #[error("vertex {vertex} is not referenced by any triangle")]
    IsolatedVertex { vertex: usize },
    #[error("boundary flag of vertex {vertex} disagrees with the edge topology")]
    BoundaryFlagMismatch { vertex: usize },
    #[error("triangle areas sum to {tiled} but the boundary loop encloses {polygon}")]
    AreaMismatch { tiled: f64, polygon: f64 },
    #[error("mesh file, line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh file I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-element geometry: area, diameter, inscribed-circle proxy
/// `rho = 2 area / perimeter`, and the constant gradients of the three
/// barycentric coordinate functions.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub diameter: f64,
    pub inscribed_radius: f64,
    pub grads: [[f64; 2]; 3],
}

/// Shape statistics of a mesh.
#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    /// Largest element diameter.
    pub h: f64,
    /// Smallest `rho_r / h_r` over all elements.
    pub min_rho_over_diam: f64,
    /// Smallest `h_r / h` over all elements.
    pub min_diam_over_h: f64,
}

/// Elements whose closures touch the closure of a center element.
#[derive(Debug, Clone)]
pub struct Patch {
    pub center: usize,
    pub members: Vec<usize>,
}

#[derive(Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    /// Boundary edges oriented as traversed by their owning triangle.
    boundary_edges: Vec<(usize, usize)>,
    areas: Vec<f64>,
    diameters: Vec<f64>,
    inscribed: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
    vertex_tri_offsets: Vec<usize>,
    vertex_tris: Vec<usize>,
}

impl Mesh {
    /// Structured mesh of the unit square: `n` subdivisions per side, each
    /// cell split by the diagonal from lower-left to upper-right, giving
    /// `(n+1)^2` vertices and `2 n^2` triangles with `h = sqrt(2)/n`.
    pub fn structured_unit_square(n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::InvalidSubdivision);
        }
        let step = 1.0 / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        let mut flags = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { 1.0 } else { i as f64 * step };
                let y = if j == n { 1.0 } else { j as f64 * step };
                vertices.push([x, y]);
                flags.push(x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0);
            }
        }
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v01 = idx(i, j + 1);
                let v11 = idx(i + 1, j + 1);
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::from_parts(vertices, triangles, Some(flags))
    }

    /// Splits every triangle into four similar children through the edge
    /// midpoints. Halves every diameter and preserves shape ratios.
    pub fn refine_uniform(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut flags: Vec<bool> = self.boundary_vertex.clone();
        let boundary_set: std::collections::BTreeSet<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for tri in &self.triangles {
            let mut mid = [0usize; 3];
            for (slot, (a, b)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                .into_iter()
                .enumerate()
            {
                let key = (a.min(b), a.max(b));
                let index = *midpoints.entry(key).or_insert_with(|| {
                    let pa = vertices[a];
                    let pb = vertices[b];
                    vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                    flags.push(boundary_set.contains(&key));
                    vertices.len() - 1
                });
                mid[slot] = index;
            }
            let [a, b, c] = *tri;
            let [mab, mbc, mca] = mid;
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
        }
        Self::from_parts(vertices, triangles, Some(flags))
            .expect("uniform refinement of an audited mesh stays conforming")
    }

    /// Builds a mesh from raw arrays and runs the conformity audit.
    /// When `boundary` is `None` the markers are derived from the edge
    /// topology; explicit markers are validated against it.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Option<Vec<bool>>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        for (r, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::VertexIndexOutOfRange {
                        triangle: r,
                        index: v,
                        num_vertices: nv,
                    });
                }
            }
        }

        let mut areas = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        let mut inscribed = Vec::with_capacity(triangles.len());
        let mut grads = Vec::with_capacity(triangles.len());
        for (r, tri) in triangles.iter().enumerate() {
            let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * twice_area;
            if !(area > 0.0) {
                return Err(MeshError::NonPositiveArea { triangle: r, area });
            }
            let e01 = dist(p[0], p[1]);
            let e12 = dist(p[1], p[2]);
            let e20 = dist(p[2], p[0]);
            areas.push(area);
            diameters.push(e01.max(e12).max(e20));
            inscribed.push(2.0 * area / (e01 + e12 + e20));
            grads.push([
                [(p[1][1] - p[2][1]) / twice_area, (p[2][0] - p[1][0]) / twice_area],
                [(p[2][1] - p[0][1]) / twice_area, (p[0][0] - p[2][0]) / twice_area],
                [(p[0][1] - p[1][1]) / twice_area, (p[1][0] - p[0][0]) / twice_area],
            ]);
        }

        // Edge bookkeeping: count directed and undirected uses.
        let mut undirected: BTreeMap<(usize, usize), (usize, Option<(usize, usize)>)> =
            BTreeMap::new();
        for tri in &triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = (a.min(b), a.max(b));
                let entry = undirected.entry(key).or_insert((0, None));
                entry.0 += 1;
                match entry.1 {
                    None => entry.1 = Some((a, b)),
                    Some(first) => {
                        if first == (a, b) {
                            return Err(MeshError::RepeatedDirectedEdge { a, b });
                        }
                    }
                }
            }
        }
        let mut boundary_edges = Vec::new();
        for (&(lo, hi), &(count, oriented)) in &undirected {
            match count {
                1 => boundary_edges.push(oriented.unwrap()),
                2 => {}
                _ => return Err(MeshError::EdgeUsedByMoreThanTwo { a: lo, b: hi }),
            }
        }

        // A vertex sitting strictly inside a single-use edge is a hanging
        // vertex: the neighbouring triangles split the edge, this one does
        // not.
        for &(a, b) in &boundary_edges {
            let pa = vertices[a];
            let pb = vertices[b];
            let len_sq = dist(pa, pb).powi(2);
            for (v, pv) in vertices.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let cross = (pb[0] - pa[0]) * (pv[1] - pa[1]) - (pb[1] - pa[1]) * (pv[0] - pa[0]);
                let dot = (pb[0] - pa[0]) * (pv[0] - pa[0]) + (pb[1] - pa[1]) * (pv[1] - pa[1]);
                if cross.abs() <= 1e-12 * len_sq && dot > 1e-12 * len_sq && dot < (1.0 - 1e-12) * len_sq
                {
                    return Err(MeshError::HangingVertex { vertex: v, a, b });
                }
            }
        }

        // Triangle areas must tile the polygon enclosed by the boundary loop.
        let tiled: f64 = areas.iter().sum();
        let polygon: f64 = boundary_edges
            .iter()
            .map(|&(a, b)| {
                let pa = vertices[a];
                let pb = vertices[b];
                0.5 * (pa[0] * pb[1] - pb[0] * pa[1])
            })
            .sum();
        if (tiled - polygon).abs() > 1e-12 * tiled.max(1.0) {
            return Err(MeshError::AreaMismatch { tiled, polygon });
        }

        let mut derived = vec![false; nv];
        for &(a, b) in &boundary_edges {
            derived[a] = true;
            derived[b] = true;
        }
        let boundary_vertex = match boundary {
            None => derived,
            Some(flags) => {
                for v in 0..nv {
                    if flags[v] != derived[v] {
                        return Err(MeshError::BoundaryFlagMismatch { vertex: v });
                    }
                }
                flags
            }
        };

        let mut counts = vec![0usize; nv];
        for tri in &triangles {
            for &v in tri {
                counts[v] += 1;
            }
        }
        if let Some(v) = counts.iter().position(|&c| c == 0) {
            return Err(MeshError::IsolatedVertex { vertex: v });
        }
        let mut vertex_tri_offsets = vec![0usize; nv + 1];
        for v in 0..nv {
            vertex_tri_offsets[v + 1] = vertex_tri_offsets[v] + counts[v];
        }
        let mut cursor = vertex_tri_offsets.clone();
        let mut vertex_tris = vec![0usize; vertex_tri_offsets[nv]];
        for (r, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tris[cursor[v]] = r;
                cursor[v] += 1;
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_vertex,
            boundary_edges,
            areas,
            diameters,
            inscribed,
            grads,
            vertex_tri_offsets,
            vertex_tris,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, r: usize) -> [usize; 3] {
        self.triangles[r]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_vertices(&self, r: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[r];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, r: usize) -> f64 {
        self.areas[r]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn diameter(&self, r: usize) -> f64 {
        self.diameters[r]
    }

    /// Global mesh size: largest element diameter.
    pub fn h(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    pub fn inscribed_radius(&self, r: usize) -> f64 {
        self.inscribed[r]
    }

    /// Gradients of the barycentric coordinate functions on element `r`.
    pub fn gradients(&self, r: usize) -> [[f64; 2]; 3] {
        self.grads[r]
    }

    pub fn element_geometry(&self, r: usize) -> ElementGeometry {
        ElementGeometry {
            area: self.areas[r],
            diameter: self.diameters[r],
            inscribed_radius: self.inscribed[r],
            grads: self.grads[r],
        }
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_vertices()).filter(move |&v| self.boundary_vertex[v])
    }

    /// Boundary edges oriented as traversed by their owning triangles,
    /// i.e. counter-clockwise around the domain.
    pub fn boundary_edges(&self) -> &[(usize, usize)] {
        &self.boundary_edges
    }

    /// Elements incident to vertex `v`, ascending.
    pub fn vertex_patch(&self, v: usize) -> &[usize] {
        &self.vertex_tris[self.vertex_tri_offsets[v]..self.vertex_tri_offsets[v + 1]]
    }

    /// Elements whose closure intersects the closure of element `r`
    /// (shares at least a vertex), `r` included.
    pub fn element_patch(&self, r: usize) -> Patch {
        let mut members: Vec<usize> = self.triangles[r]
            .iter()
            .flat_map(|&v| self.vertex_patch(v).iter().copied())
            .collect();
        members.sort_unstable();
        members.dedup();
        Patch { center: r, members }
    }

    pub fn quality_report(&self) -> QualityReport {
        let h = self.h();
        let min_rho_over_diam = self
            .inscribed
            .iter()
            .zip(&self.diameters)
            .map(|(rho, d)| rho / d)
            .fold(f64::INFINITY, f64::min);
        let min_diam_over_h = self
            .diameters
            .iter()
            .map(|d| d / h)
            .fold(f64::INFINITY, f64::min);
        QualityReport { h, min_rho_over_diam, min_diam_over_h }
    }

    /// Parses the plain-text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, MeshError> {
        let mut tokens = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            for tok in line.split_whitespace() {
                tokens.push((lineno + 1, tok));
            }
        }
        let mut pos = 0usize;
        let mut next = |what: &str| -> Result<(usize, &str), MeshError> {
            let item = tokens.get(pos).copied().ok_or_else(|| MeshError::Parse {
                line: text.lines().count(),
                message: format!("unexpected end of file, expected {what}"),
            })?;
            pos += 1;
            Ok(item)
        };

        let (line, kw) = next("the keyword 'vertices'")?;
        if kw != "vertices" {
            return Err(MeshError::Parse {
                line,
                message: format!("expected the keyword 'vertices', found '{kw}'"),
            });
        }
        let (line, count) = next("the vertex count")?;
        let nv: usize = count.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("invalid vertex count '{count}'"),
        })?;
        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, xs) = next("a vertex x coordinate")?;
            let x: f64 = xs.parse().map_err(|_| MeshError::Parse {
                line,
                message: format!("invalid coordinate '{xs}'"),
            })?;
            let (line, ys) = next("a vertex y coordinate")?;
            let y: f64 = ys.parse().map_err(|_| MeshError::Parse {
                line,
                message: format!("invalid coordinate '{ys}'"),
            })?;
            let (line, fs) = next("a boundary flag")?;
            let flag = match fs {
                "0" => false,
                "1" => true,
                other => {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("boundary flag must be 0 or 1, found '{other}'"),
                    })
                }
            };
            vertices.push([x, y]);
            flags.push(flag);
        }

        let (line, kw) = next("the keyword 'triangles'")?;
        if kw != "triangles" {
            return Err(MeshError::Parse {
                line,
                message: format!("expected the keyword 'triangles', found '{kw}'"),
            });
        }
        let (line, count) = next("the triangle count")?;
        let nt: usize = count.parse().map_err(|_| MeshError::Parse {
            line,
            message: format!("invalid triangle count '{count}'"),
        })?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let mut tri = [0usize; 3];
            for slot in &mut tri {
                let (line, ts) = next("a vertex index")?;
                *slot = ts.parse().map_err(|_| MeshError::Parse {
                    line,
                    message: format!("invalid vertex index '{ts}'"),
                })?;
            }
            triangles.push(tri);
        }
        if let Some(&(line, tok)) = tokens.get(pos) {
            return Err(MeshError::Parse {
                line,
                message: format!("trailing content '{tok}' after the triangle list"),
            });
        }
        Self::from_parts(vertices, triangles, Some(flags))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {}", self.num_vertices());
        for (v, p) in self.vertices.iter().enumerate() {
            let flag = if self.boundary_vertex[v] { 1 } else { 0 };
            let _ = writeln!(out, "{} {} {}", p[0], p[1], flag);
        }
        let _ = writeln!(out, "triangles {}", self.num_triangles());
        for tri in &self.triangles {
            let _ = writeln!(out, "{} {} {}", tri[0], tri[1], tri[2]);
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.serialize())?;
        Ok(())
    }

    /// Barycentric coordinates of `p` with respect to element `r`.
    pub fn barycentric(&self, r: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangle_vertices(r);
        let twice_area = 2.0 * self.areas[r];
        let l0 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / twice_area;
        let l1 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / twice_area;
        [l0, l1, 1.0 - l0 - l1]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform-grid point locator over a mesh.
pub struct PointLocator<'m> {
    mesh: &'m Mesh,
    nx: usize,
    ny: usize,
    min: [f64; 2],
    inv_cell: [f64; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'m> PointLocator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let nt = mesh.num_triangles();
        let side = ((nt as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.vertices() {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let extent = [
            (max[0] - min[0]).max(f64::MIN_POSITIVE),
            (max[1] - min[1]).max(f64::MIN_POSITIVE),
        ];
        let inv_cell = [side as f64 / extent[0], side as f64 / extent[1]];
        let mut buckets = vec![Vec::new(); side * side];
        for r in 0..nt {
            let [a, b, c] = mesh.triangle_vertices(r);
            let lo = [
                a[0].min(b[0]).min(c[0]),
                a[1].min(b[1]).min(c[1]),
            ];
            let hi = [
                a[0].max(b[0]).max(c[0]),
                a[1].max(b[1]).max(c[1]),
            ];
            let i0 = clamp_cell((lo[0] - min[0]) * inv_cell[0], side);
            let i1 = clamp_cell((hi[0] - min[0]) * inv_cell[0], side);
            let j0 = clamp_cell((lo[1] - min[1]) * inv_cell[1], side);
            let j1 = clamp_cell((hi[1] - min[1]) * inv_cell[1], side);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * side + i].push(r);
                }
            }
        }
        Self { mesh, nx: side, ny: side, min, inv_cell, buckets }
    }

    /// Element containing `p` together with clamped barycentric
    /// coordinates, or `None` when `p` lies outside the mesh.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let i = clamp_cell((p[0] - self.min[0]) * self.inv_cell[0], self.nx);
        let j = clamp_cell((p[1] - self.min[1]) * self.inv_cell[1], self.ny);
        for &r in &self.buckets[j * self.nx + i] {
            if let Some(bary) = self.test(r, p) {
                return Some((r, bary));
            }
        }
        // Boundary-of-bucket round-off: fall back to a full scan.
        for r in 0..self.mesh.num_triangles() {
            if let Some(bary) = self.test(r, p) {
                return Some((r, bary));
            }
        }
        None
    }

    fn test(&self, r: usize, p: [f64; 2]) -> Option<[f64; 3]> {
        let bary = self.mesh.barycentric(r, p);
        if bary.iter().all(|&l| l >= -1e-12) {
            let mut clamped = bary.map(|l| l.max(0.0));
            let sum: f64 = clamped.iter().sum();
            for l in &mut clamped {
                *l /= sum;
            }
            Some(clamped)
        } else {
            None
        }
    }
}

fn clamp_cell(x: f64, n: usize) -> usize {
    if x.is_nan() || x < 0.0 {
        0
    } else {
        (x as usize).min(n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn structured_mesh_counts_and_h() {
        let mesh = Mesh::structured_unit_square(2).unwrap();
        assert_eq!(mesh.num_vertices(), 9);
        assert_eq!(mesh.num_triangles(), 8);
        assert_relative_eq!(mesh.h(), std::f64::consts::SQRT_2 / 2.0, max_relative = 1e-15);
        assert_relative_eq!(mesh.total_area(), 1.0, max_relative = 1e-15);
        assert_eq!(mesh.boundary_vertices().count(), 8);
    }

    #[test]
    fn structured_rejects_zero_subdivisions() {
        assert!(matches!(
            Mesh::structured_unit_square(0),
            Err(MeshError::InvalidSubdivision)
        ));
    }

    #[test]
    fn unit_right_triangle_geometry() {
        let mesh = Mesh::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap();
        let geo = mesh.element_geometry(0);
        assert_relative_eq!(geo.area, 0.5);
        assert_relative_eq!(geo.diameter, std::f64::consts::SQRT_2);
        assert_relative_eq!(geo.inscribed_radius, 1.0 / (2.0 + std::f64::consts::SQRT_2), max_relative = 1e-15);
        assert_relative_eq!(geo.grads[0][0], -1.0);
        assert_relative_eq!(geo.grads[0][1], -1.0);
        assert_relative_eq!(geo.grads[1][0], 1.0);
        assert_relative_eq!(geo.grads[1][1], 0.0);
        assert_relative_eq!(geo.grads[2][0], 0.0);
        assert_relative_eq!(geo.grads[2][1], 1.0);
    }

    #[test]
    fn refinement_preserves_area_and_quality() {
        let mesh = Mesh::structured_unit_square(3).unwrap();
        let fine = mesh.refine_uniform();
        assert_eq!(fine.num_triangles(), 4 * mesh.num_triangles());
        assert_relative_eq!(fine.total_area(), mesh.total_area(), max_relative = 1e-14);
        assert_relative_eq!(fine.h(), 0.5 * mesh.h(), max_relative = 1e-14);
        let q0 = mesh.quality_report();
        let q1 = fine.quality_report();
        assert_relative_eq!(q0.min_rho_over_diam, q1.min_rho_over_diam, max_relative = 1e-14);
        assert_relative_eq!(q0.min_diam_over_h, q1.min_diam_over_h, max_relative = 1e-14);
    }

    /// Canonical form: vertices keyed by grid position, triangles rotated
    /// to put the smallest key first, then sorted.
    fn canonical(mesh: &Mesh, denom: usize) -> Vec<[(i64, i64); 3]> {
        let key = |p: [f64; 2]| {
            (
                (p[0] * denom as f64).round() as i64,
                (p[1] * denom as f64).round() as i64,
            )
        };
        let mut tris: Vec<[(i64, i64); 3]> = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut k = [
                    key(mesh.vertex(tri[0])),
                    key(mesh.vertex(tri[1])),
                    key(mesh.vertex(tri[2])),
                ];
                let rot = (0..3).min_by_key(|&i| k[i]).unwrap();
                k.rotate_left(rot);
                k
            })
            .collect();
        tris.sort();
        tris
    }

    #[test]
    fn refining_structured_matches_finer_structured_mesh() {
        for n in [1usize, 2, 3] {
            let refined = Mesh::structured_unit_square(n).unwrap().refine_uniform();
            let direct = Mesh::structured_unit_square(2 * n).unwrap();
            assert_eq!(canonical(&refined, 2 * n), canonical(&direct, 2 * n));
        }
    }

    #[test]
    fn patches_on_structured_mesh() {
        let mesh = Mesh::structured_unit_square(2).unwrap();
        // Center vertex 4 touches six triangles.
        assert_eq!(mesh.vertex_patch(4).len(), 6);
        for r in 0..mesh.num_triangles() {
            let patch = mesh.element_patch(r);
            assert!(patch.members.contains(&r));
            assert!(patch.members.windows(2).all(|w| w[0] < w[1]));
            // Every member really shares a vertex with the center.
            for &m in &patch.members {
                let shares = mesh
                    .triangle(m)
                    .iter()
                    .any(|v| mesh.triangle(r).contains(v));
                assert!(shares);
            }
        }
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let mesh = Mesh::structured_unit_square(3).unwrap();
        let text = mesh.serialize();
        let reloaded = Mesh::parse(&text).unwrap();
        assert_eq!(mesh.vertices(), reloaded.vertices());
        assert_eq!(mesh.triangles(), reloaded.triangles());
        assert_eq!(text, reloaded.serialize());
    }

    #[test]
    fn parse_accepts_comments_and_reports_line_numbers() {
        let good = "# unit triangle\nvertices 3\n0 0 1\n1 0 1\n0 1 1\ntriangles 1\n0 1 2\n";
        assert!(Mesh::parse(good).is_ok());
        let bad = "vertices 3\n0 0 1\n1 0 x\n0 1 1\ntriangles 1\n0 1 2\n";
        match Mesh::parse(bad) {
            Err(MeshError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn inverted_triangle_is_named_in_the_error() {
        let text = "vertices 3\n0 0 1\n1 0 1\n0 1 1\ntriangles 1\n0 2 1\n";
        match Mesh::parse(text) {
            Err(MeshError::NonPositiveArea { triangle, .. }) => assert_eq!(triangle, 0),
            other => panic!("expected an orientation error, got {other:?}"),
        }
    }

    #[test]
    fn hanging_vertex_is_detected() {
        // Lower-right triangle split through the diagonal midpoint, upper
        // triangle left unsplit.
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let triangles = vec![[0, 1, 4], [1, 2, 4], [0, 2, 3]];
        match Mesh::from_parts(vertices, triangles, None) {
            Err(MeshError::HangingVertex { vertex, .. }) => assert_eq!(vertex, 4),
            other => panic!("expected a hanging vertex error, got {other:?}"),
        }
    }

    #[test]
    fn repeated_orientation_is_rejected() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        // Second triangle repeats the directed edge (0, 1).
        let triangles = vec![[0, 1, 2], [0, 1, 3]];
        assert!(matches!(
            Mesh::from_parts(vertices, triangles, None),
            Err(MeshError::RepeatedDirectedEdge { .. }) | Err(MeshError::NonPositiveArea { .. })
        ));
    }

    #[test]
    fn boundary_flag_mismatch_is_rejected() {
        let text = "vertices 3\n0 0 1\n1 0 1\n0 1 0\ntriangles 1\n0 1 2\n";
        assert!(matches!(
            Mesh::parse(text),
            Err(MeshError::BoundaryFlagMismatch { vertex: 2 })
        ));
    }

    #[test]
    fn locator_finds_points_with_consistent_barycentrics() {
        let mesh = Mesh::structured_unit_square(4).unwrap();
        let locator = PointLocator::new(&mesh);
        for &p in &[[0.05, 0.9], [0.5, 0.5], [0.999, 0.001], [0.0, 0.0]] {
            let (r, bary) = locator.locate(p).unwrap();
            let [a, b, c] = mesh.triangle_vertices(r);
            let x = bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0];
            let y = bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1];
            assert_relative_eq!(x, p[0], epsilon = 1e-12);
            assert_relative_eq!(y, p[1], epsilon = 1e-12);
        }
        assert!(locator.locate([1.5, 0.5]).is_none());
    }

    #[test]
    fn boundary_loop_is_counter_clockwise() {
        let mesh = Mesh::structured_unit_square(2).unwrap();
        let polygon: f64 = mesh
            .boundary_edges()
            .iter()
            .map(|&(a, b)| {
                let pa = mesh.vertex(a);
                let pb = mesh.vertex(b);
                0.5 * (pa[0] * pb[1] - pb[0] * pa[1])
            })
            .sum();
        assert_relative_eq!(polygon, 1.0, max_relative = 1e-14);
    }
}
