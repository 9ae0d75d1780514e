//! CSV serialization for solver traces.
//!
//! The column layout is a stable external contract consumed by downstream
//! tooling: iteration traces are `n,residual,a_n` and trajectory traces are
//! `t,residual,udot_norm,dist_to_y`. Cells whose value is unknown (no known
//! solution to measure against) are left empty rather than filled with a
//! sentinel. Formatting is deterministic: the same trace always produces the
//! same bytes.

use crate::solvers::{IterationTrace, TrajectoryTrace};
use std::io::{self, Write};

pub const ITERATION_HEADER: &str = "n,residual,a_n";
pub const TRAJECTORY_HEADER: &str = "t,residual,udot_norm,dist_to_y";

/// Shortest-roundtrip decimal for ordinary magnitudes, scientific notation
/// outside [1e-4, 1e16). Deterministic for any finite input.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs();
    if !(1e-4..1e16).contains(&mag) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_iteration_csv(w: &mut impl Write, trace: &IterationTrace) -> io::Result<()> {
    writeln!(w, "{ITERATION_HEADER}")?;
    for step in &trace.steps {
        writeln!(
            w,
            "{},{},{}",
            step.index,
            fmt_f64(step.residual),
            fmt_opt(step.dist_to_solution)
        )?;
    }
    Ok(())
}

pub fn write_trajectory_csv(w: &mut impl Write, traj: &TrajectoryTrace) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for node in &traj.nodes {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(node.t),
            fmt_f64(node.residual),
            fmt_f64(node.udot_norm),
            fmt_opt(node.dist_to_solution)
        )?;
    }
    Ok(())
}

pub fn iteration_csv_string(trace: &IterationTrace) -> String {
    let mut buf = Vec::new();
    write_iteration_csv(&mut buf, trace).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

pub fn trajectory_csv_string(traj: &TrajectoryTrace) -> String {
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, traj).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}
