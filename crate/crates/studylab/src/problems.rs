//! Built-in manufactured problems on the unit square with identity
//! diffusion. The reaction coefficient is folded into the source term so
//! one name yields a whole sigma-family of problems.

use std::f64::consts::PI;

use femlab::ProblemSpec;

use crate::config::StudyError;

pub const BUILTIN_NAMES: [&str; 3] = ["sinsin", "polybubble", "zero"];

/// Instantiates a built-in problem for the given reaction coefficient.
/// Every returned problem carries its exact solution, so true errors are
/// always available downstream.
pub fn builtin_problem(name: &str, sigma: f64) -> Result<ProblemSpec, StudyError> {
    let identity = [[1.0, 0.0], [0.0, 1.0]];
    match name {
        "sinsin" => Ok(ProblemSpec::new(identity, sigma, move |p| {
            (2.0 * PI * PI + sigma) * (PI * p[0]).sin() * (PI * p[1]).sin()
        })?
        .with_exact(
            |p| (PI * p[0]).sin() * (PI * p[1]).sin(),
            |p| {
                [
                    PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
                    PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
                ]
            },
        )?),
        "polybubble" => Ok(ProblemSpec::new(identity, sigma, move |p| {
            let bubble = p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
            2.0 * (p[0] * (1.0 - p[0]) + p[1] * (1.0 - p[1])) + sigma * bubble
        })?
        .with_exact(
            |p| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]),
            |p| {
                [
                    (1.0 - 2.0 * p[0]) * p[1] * (1.0 - p[1]),
                    p[0] * (1.0 - p[0]) * (1.0 - 2.0 * p[1]),
                ]
            },
        )?),
        "zero" => Ok(ProblemSpec::new(identity, sigma, |_| 0.0)?
            .with_exact(|_| 0.0, |_| [0.0, 0.0])?),
        _ => Err(StudyError::UnknownProblem { name: name.to_string() }),
    }
}
