//! Plain-text study configuration: `key=value` lines, `#` comments,
//! comma-separated lists, and symbolic reaction entries (`h^-1`, `h^-2`)
//! that resolve against the mesh width of each level.

use std::f64::consts::PI;
use std::path::PathBuf;

use femlab::femcore::FemError;
use femlab::fluxrec::FluxError;
use femlab::majorants::MajorantError;
use femlab::mesh::MeshError;
use femlab::quadrature::{QuadratureError, MAX_TRIANGLE_DEGREE};
use femlab::szproj::SzError;
use thiserror::Error;

use crate::problems::BUILTIN_NAMES;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("unknown problem '{name}', built-ins are sinsin, polybubble, zero")]
    UnknownProblem { name: String },
    #[error("unknown estimator '{name}'")]
    UnknownEstimator { name: String },
    #[error("unknown configuration key '{key}' on line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("line {line} is not a key=value pair: '{text}'")]
    NotKeyValue { line: usize, text: String },
    #[error("bad value '{value}' for key '{key}': {reason}")]
    BadValue { key: &'static str, value: String, reason: String },
    #[error("configuration list '{key}' must be nonempty")]
    EmptyList { key: &'static str },
    #[error("estimator '{estimator}' needs the calibrated constant {constant}; run a calibration or supply it explicitly")]
    UncalibratedConstant { estimator: String, constant: &'static str },
    #[error("inverse check requires flux=l2project, configured flux is '{flux}'")]
    InverseCheckNeedsProjectedFlux { flux: String },
    #[error("emitted output changed between identical runs; report this as a determinism bug")]
    DeterminismCheckFailed,
    #[error("nothing to report: the result has no rows")]
    EmptyResult,
    #[error("CSV parse error on line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Majorant(#[from] MajorantError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Sz(#[from] SzError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reaction coefficient policy for one sweep column: either a fixed value
/// or a mesh-coupled symbolic entry resolved per level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    Value(f64),
    /// `h^-power`, resolved to `h^-power` for the level's mesh width.
    InverseH { power: u32 },
}

impl SigmaSpec {
    pub fn parse(token: &str) -> Result<Self, StudyError> {
        let bad = |reason: &str| StudyError::BadValue {
            key: "sigmas",
            value: token.to_string(),
            reason: reason.to_string(),
        };
        match token {
            "h^-1" => Ok(SigmaSpec::InverseH { power: 1 }),
            "h^-2" => Ok(SigmaSpec::InverseH { power: 2 }),
            _ => {
                let value: f64 =
                    token.parse().map_err(|_| bad("expected a number, h^-1, or h^-2"))?;
                if !(value >= 0.0) {
                    return Err(bad("reaction coefficient must be nonnegative"));
                }
                Ok(SigmaSpec::Value(value))
            }
        }
    }

    pub fn resolve(&self, h: f64) -> f64 {
        match *self {
            SigmaSpec::Value(v) => v,
            SigmaSpec::InverseH { power } => h.powi(-(power as i32)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SigmaSpec::Value(v) => v.to_string(),
            SigmaSpec::InverseH { power } => format!("h^-{power}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluxChoice {
    Average,
    L2Project,
}

impl FluxChoice {
    pub fn label(&self) -> &'static str {
        match self {
            FluxChoice::Average => "average",
            FluxChoice::L2Project => "l2project",
        }
    }
}

/// Where the mesh-dependent constants come from: a calibration run over
/// the configured levels, or explicit `c_dagger=...` style entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantsSource {
    Calibrate,
    Explicit,
}

pub const KNOWN_ESTIMATORS: [&str; 10] = [
    "aubin",
    "repin_frolov",
    "churilova",
    "consistent",
    "consistent_osc_low",
    "consistent_osc_high",
    "fem1",
    "fem1_osc",
    "fem2",
    "aive",
];

/// Calibrated constants an estimator cannot run without.
pub fn required_constants(estimator: &str) -> &'static [&'static str] {
    match estimator {
        "consistent" | "consistent_osc_low" | "consistent_osc_high" | "fem1" | "fem1_osc" => {
            &["c_dagger"]
        }
        "fem2" => &["c_sz01", "c_sz11"],
        _ => &[],
    }
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub problem: String,
    pub levels: Vec<usize>,
    pub sigmas: Vec<SigmaSpec>,
    pub estimators: Vec<String>,
    pub flux: FluxChoice,
    pub constants: ConstantsSource,
    pub c_dagger: Option<f64>,
    pub c_sz01: Option<f64>,
    pub c_sz11: Option<f64>,
    /// Free parameter of the eps-weighted bounds.
    pub epsilon: f64,
    /// Friedrichs constant of the unit square in `||w||^2 <= c ||grad w||^2`.
    pub c_omega: f64,
    pub quad_load: u32,
    pub quad_norm: u32,
    pub out: Option<PathBuf>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            problem: "sinsin".to_string(),
            levels: vec![8, 16, 32, 64],
            sigmas: vec![SigmaSpec::Value(0.0)],
            estimators: vec!["consistent".to_string()],
            flux: FluxChoice::Average,
            constants: ConstantsSource::Calibrate,
            c_dagger: None,
            c_sz01: None,
            c_sz11: None,
            epsilon: 1.0,
            c_omega: 1.0 / (2.0 * PI * PI),
            quad_load: 4,
            quad_norm: 6,
            out: None,
        }
    }
}

impl StudyConfig {
    pub fn parse(text: &str) -> Result<Self, StudyError> {
        let mut cfg = StudyConfig::default();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                StudyError::NotKeyValue { line, text: trimmed.to_string() }
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => cfg.problem = value.to_string(),
                "levels" => cfg.levels = parse_list(value, "levels")?,
                "sigmas" => {
                    cfg.sigmas = split_list(value, "sigmas")?
                        .iter()
                        .map(|t| SigmaSpec::parse(t))
                        .collect::<Result<_, _>>()?;
                }
                "estimators" => {
                    cfg.estimators =
                        split_list(value, "estimators")?.iter().map(|s| s.to_string()).collect();
                }
                "flux" => {
                    cfg.flux = match value {
                        "average" => FluxChoice::Average,
                        "l2project" => FluxChoice::L2Project,
                        _ => {
                            return Err(StudyError::BadValue {
                                key: "flux",
                                value: value.to_string(),
                                reason: "expected average or l2project".to_string(),
                            })
                        }
                    };
                }
                "constants" => {
                    cfg.constants = match value {
                        "calibrate" => ConstantsSource::Calibrate,
                        "explicit" => ConstantsSource::Explicit,
                        _ => {
                            return Err(StudyError::BadValue {
                                key: "constants",
                                value: value.to_string(),
                                reason: "expected calibrate or explicit".to_string(),
                            })
                        }
                    };
                }
                "c_dagger" => cfg.c_dagger = Some(parse_positive(value, "c_dagger")?),
                "c_sz01" => cfg.c_sz01 = Some(parse_positive(value, "c_sz01")?),
                "c_sz11" => cfg.c_sz11 = Some(parse_positive(value, "c_sz11")?),
                "epsilon" => cfg.epsilon = parse_positive(value, "epsilon")?,
                "c_omega" => cfg.c_omega = parse_positive(value, "c_omega")?,
                "quad_load" => cfg.quad_load = parse_degree(value, "quad_load")?,
                "quad_norm" => cfg.quad_norm = parse_degree(value, "quad_norm")?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                _ => return Err(StudyError::UnknownKey { key: key.to_string(), line }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), StudyError> {
        if !BUILTIN_NAMES.contains(&self.problem.as_str()) {
            return Err(StudyError::UnknownProblem { name: self.problem.clone() });
        }
        if self.levels.is_empty() {
            return Err(StudyError::EmptyList { key: "levels" });
        }
        if self.sigmas.is_empty() {
            return Err(StudyError::EmptyList { key: "sigmas" });
        }
        if self.estimators.is_empty() {
            return Err(StudyError::EmptyList { key: "estimators" });
        }
        for level in &self.levels {
            if *level < 2 {
                return Err(StudyError::BadValue {
                    key: "levels",
                    value: level.to_string(),
                    reason: "mesh level must be at least 2".to_string(),
                });
            }
        }
        for estimator in &self.estimators {
            if !KNOWN_ESTIMATORS.contains(&estimator.as_str()) {
                return Err(StudyError::UnknownEstimator { name: estimator.clone() });
            }
        }
        Ok(())
    }
}

fn split_list<'v>(value: &'v str, key: &'static str) -> Result<Vec<&'v str>, StudyError> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(StudyError::EmptyList { key });
    }
    Ok(items)
}

fn parse_list(value: &str, key: &'static str) -> Result<Vec<usize>, StudyError> {
    split_list(value, key)?
        .iter()
        .map(|t| {
            t.parse().map_err(|_| StudyError::BadValue {
                key,
                value: (*t).to_string(),
                reason: "expected an unsigned integer".to_string(),
            })
        })
        .collect()
}

fn parse_positive(value: &str, key: &'static str) -> Result<f64, StudyError> {
    let parsed: f64 = value.parse().map_err(|_| StudyError::BadValue {
        key,
        value: value.to_string(),
        reason: "expected a number".to_string(),
    })?;
    if !(parsed > 0.0) {
        return Err(StudyError::BadValue {
            key,
            value: value.to_string(),
            reason: "must be positive".to_string(),
        });
    }
    Ok(parsed)
}

fn parse_degree(value: &str, key: &'static str) -> Result<u32, StudyError> {
    let parsed: u32 = value.parse().map_err(|_| StudyError::BadValue {
        key,
        value: value.to_string(),
        reason: "expected an integer degree".to_string(),
    })?;
    if parsed == 0 || parsed > MAX_TRIANGLE_DEGREE {
        return Err(StudyError::BadValue {
            key,
            value: value.to_string(),
            reason: format!("supported degrees are 1..={MAX_TRIANGLE_DEGREE}"),
        });
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_round_trips_every_key() {
        let text = "\
# study over two levels
problem = polybubble
levels = 4, 8
sigmas = 0, 1, h^-2
estimators = consistent, aubin
flux = l2project
constants = explicit
c_dagger = 0.35
epsilon = 0.5
c_omega = 0.05
quad_load = 3
quad_norm = 5
out = rows.csv
";
        let cfg = StudyConfig::parse(text).unwrap();
        assert_eq!(cfg.problem, "polybubble");
        assert_eq!(cfg.levels, vec![4, 8]);
        assert_eq!(
            cfg.sigmas,
            vec![SigmaSpec::Value(0.0), SigmaSpec::Value(1.0), SigmaSpec::InverseH { power: 2 }]
        );
        assert_eq!(cfg.estimators, vec!["consistent", "aubin"]);
        assert_eq!(cfg.flux, FluxChoice::L2Project);
        assert_eq!(cfg.constants, ConstantsSource::Explicit);
        assert_eq!(cfg.c_dagger, Some(0.35));
        assert_eq!(cfg.epsilon, 0.5);
        assert_eq!(cfg.quad_load, 3);
        assert_eq!(cfg.out, Some(PathBuf::from("rows.csv")));
    }

    #[test]
    fn defaults_cover_an_empty_config() {
        let cfg = StudyConfig::parse("").unwrap();
        assert_eq!(cfg.problem, "sinsin");
        assert_eq!(cfg.levels, vec![8, 16, 32, 64]);
        assert_eq!(cfg.estimators, vec!["consistent"]);
        assert_eq!(cfg.flux, FluxChoice::Average);
        assert_eq!(cfg.constants, ConstantsSource::Calibrate);
    }

    #[test]
    fn symbolic_sigma_resolves_against_the_mesh_width() {
        let spec = SigmaSpec::parse("h^-2").unwrap();
        assert_eq!(spec.resolve(0.5), 4.0);
        assert_eq!(SigmaSpec::parse("h^-1").unwrap().resolve(0.25), 4.0);
        assert_eq!(SigmaSpec::parse("7.5").unwrap().resolve(0.1), 7.5);
    }

    #[test]
    fn unknown_keys_and_estimators_are_rejected_with_position() {
        let err = StudyConfig::parse("palette = blue\n").unwrap_err();
        assert!(err.to_string().contains("palette") && err.to_string().contains("line 1"));
        let err = StudyConfig::parse("estimators = consistent, zz_patch\n").unwrap_err();
        assert!(err.to_string().contains("zz_patch"));
    }

    #[test]
    fn negative_sigma_and_zero_epsilon_are_rejected() {
        assert!(SigmaSpec::parse("-1").is_err());
        assert!(StudyConfig::parse("epsilon = 0\n").is_err());
    }

    #[test]
    fn estimator_constant_requirements_are_declared() {
        assert_eq!(required_constants("fem2"), &["c_sz01", "c_sz11"]);
        assert_eq!(required_constants("consistent"), &["c_dagger"]);
        assert!(required_constants("aubin").is_empty());
        assert!(required_constants("aive").is_empty());
    }
}
