//! CSV emission and parsing for sweep results, plus a human-readable
//! summary of observed orders. All numbers print through `{}` so a
//! re-parsed file reproduces the in-memory rows bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::StudyError;
use crate::sweep::{SweepResult, SweepRow};

pub const SWEEP_CSV_HEADER: &str = "level,h,sigma,estimator,total,diffusion,residual_mult,residual_sq,oscillation,true_energy_sq,effectivity,rate";

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn emit_csv(result: &SweepResult) -> Result<String, StudyError> {
    if result.rows.is_empty() && result.violations.is_empty() {
        return Err(StudyError::EmptyResult);
    }
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for violation in &result.violations {
        let _ = writeln!(out, "# {violation}");
    }
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            r.h,
            r.sigma,
            r.estimator,
            r.total,
            r.diffusion,
            r.residual_mult,
            r.residual_sq,
            r.oscillation,
            opt(r.true_energy_sq),
            opt(r.effectivity),
            opt(r.rate),
        );
    }
    Ok(out)
}

pub fn write_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<(), StudyError> {
    std::fs::write(path, emit_csv(result)?)?;
    Ok(())
}

/// Inverse of `emit_csv`; used by the round-trip tests and by downstream
/// tooling that reprocesses emitted studies.
pub fn parse_csv(text: &str) -> Result<SweepResult, StudyError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SWEEP_CSV_HEADER => {}
        _ => {
            return Err(StudyError::CsvParse {
                line: 1,
                reason: "missing or unexpected header".to_string(),
            })
        }
    }
    let mut result = SweepResult::default();
    for (index, raw) in lines {
        let line = index + 1;
        if raw.is_empty() {
            continue;
        }
        if let Some(stripped) = raw.strip_prefix("# ") {
            result.violations.push(stripped.to_string());
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 12 {
            return Err(StudyError::CsvParse {
                line,
                reason: format!("expected 12 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64, StudyError> {
            fields[i].parse().map_err(|_| StudyError::CsvParse {
                line,
                reason: format!("field {} is not a number: '{}'", i + 1, fields[i]),
            })
        };
        let optional = |i: usize| -> Result<Option<f64>, StudyError> {
            if fields[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        result.rows.push(SweepRow {
            level: fields[0].parse().map_err(|_| StudyError::CsvParse {
                line,
                reason: format!("bad level '{}'", fields[0]),
            })?,
            h: num(1)?,
            sigma: num(2)?,
            estimator: fields[3].to_string(),
            total: num(4)?,
            diffusion: num(5)?,
            residual_mult: num(6)?,
            residual_sq: num(7)?,
            oscillation: num(8)?,
            true_energy_sq: optional(9)?,
            effectivity: optional(10)?,
            rate: optional(11)?,
        });
    }
    Ok(result)
}

/// Rate table grouped by (sigma, estimator), with the observed energy
/// error order printed beside its theoretical value of one.
pub fn emit_summary(result: &SweepResult) -> Result<String, StudyError> {
    if result.rows.is_empty() {
        return Err(StudyError::EmptyResult);
    }
    let mut out = String::new();
    let mut groups: Vec<(f64, &str)> = Vec::new();
    for row in &result.rows {
        if !groups.iter().any(|(s, e)| *s == row.sigma && *e == row.estimator) {
            groups.push((row.sigma, &row.estimator));
        }
    }
    for (sigma, estimator) in groups {
        let _ = writeln!(out, "estimator {estimator}, sigma {sigma}");
        for row in result.rows.iter().filter(|r| r.sigma == sigma && r.estimator == estimator) {
            let _ = writeln!(
                out,
                "  level {:>4}  h {:.6}  total {:.6e}  effectivity {}  rate {}",
                row.level,
                row.h,
                row.total,
                row.effectivity.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into()),
                row.rate.map(|r| format!("{r:+.3}")).unwrap_or_else(|| "-".into()),
            );
        }
    }

    // Energy error orders per sigma, estimator-independent: pick each
    // level's error once from the first estimator that reported it.
    let mut sigma_seen: Vec<f64> = Vec::new();
    for row in &result.rows {
        if row.true_energy_sq.is_none() || sigma_seen.contains(&row.sigma) {
            continue;
        }
        sigma_seen.push(row.sigma);
        let mut per_level: Vec<(usize, f64)> = Vec::new();
        for r in result.rows.iter().filter(|r| r.sigma == row.sigma) {
            if let Some(e2) = r.true_energy_sq {
                if !per_level.iter().any(|(l, _)| *l == r.level) {
                    per_level.push((r.level, e2));
                }
            }
        }
        for pair in per_level.windows(2) {
            let ((l0, e0), (l1, e1)) = (pair[0], pair[1]);
            if l1 == 2 * l0 && e0 > 0.0 && e1 > 0.0 {
                let order = 0.5 * (e0 / e1).log2();
                let _ = writeln!(
                    out,
                    "energy error order at sigma {} levels {}->{}: {:.3} (a priori: 1)",
                    row.sigma, l0, l1, order
                );
            }
        }
    }
    if !result.violations.is_empty() {
        let _ = writeln!(out, "range violations: {}", result.violations.len());
    }
    Ok(out)
}
