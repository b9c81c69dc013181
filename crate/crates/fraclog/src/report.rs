//! Artifact serialization: CSV tables carrying full float precision, JSON
//! documents, and the manifest written alongside every run.
//!
//! All text artifacts are UTF-8 with LF line endings and are assembled
//! deterministically from their inputs (no timestamps, no map iteration),
//! so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::core::{Field, Grid1D, ProblemSpec};
use crate::harness::ExperimentReport;
use crate::parabolic::Trajectory;
use crate::Result;

/// Tolerance used when deciding whether a distance row kept the
/// non-increasing pattern of its column.
const MONOTONE_TOL: f64 = 1e-12;

/// A float rendered with 17 significant digits, enough to round-trip f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Provenance record written next to every primary output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the run.
    pub command: String,
    /// Fully resolved problem description.
    pub problem: ProblemSpec,
    pub resolution: usize,
    pub dt: f64,
    pub seed: u64,
    /// File names of the primary outputs, relative to the output directory.
    pub outputs: Vec<String>,
    /// Version of the tool that produced the run.
    pub version: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        problem: &ProblemSpec,
        resolution: usize,
        dt: f64,
        seed: u64,
        outputs: Vec<String>,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            problem: problem.clone(),
            resolution,
            dt,
            seed,
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Pretty JSON document with a trailing newline.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| crate::Error::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// CSV table of a limit experiment: one row per axis point with the
/// distances and a 0/1 flag recording whether the sup distance at this row
/// kept the non-increasing pattern (the first row is trivially 1).
pub fn experiment_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("axis_value,sup_distance,energy_distance,monotone_flag\n");
    let mut previous: Option<f64> = None;
    for point in &report.points {
        let flag = match previous {
            None => 1,
            Some(prev) => u8::from(point.sup_distance <= prev + MONOTONE_TOL),
        };
        let _ = writeln!(
            out,
            "{},{},{},{flag}",
            format_float(point.axis_value),
            format_float(point.sup_distance),
            format_float(point.energy_distance),
        );
        previous = Some(point.sup_distance);
    }
    out
}

/// CSV table of the scalar step diagnostics of an evolution.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out =
        String::from("t,sup_norm,energy,time_derivative_l2,bound_slack,comp_residual\n");
    for step in &traj.steps {
        let comp = step.comp_residual.map(format_float).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{comp}",
            format_float(step.t),
            format_float(step.sup_norm),
            format_float(step.energy),
            format_float(step.time_derivative_l2),
            format_float(step.bound_slack),
        );
    }
    out
}

/// CSV table of a nodal field: `x,value` rows over the grid.
pub fn field_csv(grid: &Grid1D, field: &Field) -> String {
    let mut out = String::from("x,value\n");
    for (x, v) in grid.nodes.iter().zip(field.as_slice()) {
        let _ = writeln!(out, "{},{}", format_float(*x), format_float(*v));
    }
    out
}

/// Write a text artifact, creating parent directories as needed.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content.as_bytes())?;
    Ok(())
}
