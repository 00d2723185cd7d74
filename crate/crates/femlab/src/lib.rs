//! Two-dimensional P1 finite element laboratory.
//!
//! The crate solves the reaction-diffusion model problem
//!
//! ```text
//!     -div(A grad u) + sigma u = f   in Omega,
//!                            u = 0   on the boundary,
//! ```
//!
//! with constant SPD diffusion `A` and constant reaction `sigma >= 0`,
//! and evaluates guaranteed a posteriori bounds for the energy error
//! `|||v - u|||^2 = ||v - u||_A^2 + sigma ||v - u||_0^2` of any conforming
//! P1 field `v`. Besides the classical bounds it implements a family of
//! estimators whose effectivity stays bounded as the mesh is refined, at
//! the price of mesh-dependent weights calibrated from interpolation and
//! inverse-inequality constants.
//!
//! Module map:
//! - [`mesh`]: conforming triangulations, structured unit-square grids,
//!   uniform refinement, patches, plain-text mesh files.
//! - [`quadrature`]: positive-weight triangle rules (degree 1..6) and
//!   Gauss rules on edges (degree 1..5).
//! - [`femcore`]: problem data, assembly, CG solver, norms, a priori
//!   convergence tables.
//! - [`fluxrec`]: broken numerical flux and its vertex-averaged or
//!   L2-projected conforming recovery.
//! - [`szproj`]: Scott-Zhang quasi-interpolation, local and global L2
//!   projections, empirical constant calibration.
//! - [`majorants`]: the error bounds themselves plus effectivity
//!   bookkeeping.

pub mod femcore;
pub mod fluxrec;
pub mod linalg;
pub mod majorants;
pub mod mesh;
pub mod quadrature;
pub mod szproj;

pub use femcore::{FemField, ProblemSpec};
pub use fluxrec::FluxField;
pub use mesh::Mesh;
pub use quadrature::{edge_rule, triangle_rule, EdgeRule, QuadRule};
