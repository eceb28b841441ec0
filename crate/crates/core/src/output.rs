//! CSV and JSON writers. Numbers use 17 significant digits, `.` as the
//! decimal separator and LF line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::mesh::Partition;
use crate::problems::GluedSolution;
use crate::splitting::IterationReport;

pub const TRACE_HEADER: &str = "n,residual,branch,theta,dist0,chi,rho";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_line(r: &IterationReport) -> String {
    format!(
        "{},{},{},{},{},{},{}\n",
        r.n,
        num(r.kt_residual),
        r.branch.name(),
        num(r.theta),
        num(r.dist0_sq.max(0.0).sqrt()),
        num(r.chi),
        num(r.rho)
    )
}

pub fn trace_csv(reports: &[IterationReport]) -> String {
    let mut s = String::with_capacity(64 * (reports.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&trace_line(r));
    }
    s
}

fn coord_header(dim: usize) -> &'static str {
    if dim == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn coord_cols(dim: usize, c: &[f64; 2]) -> String {
    if dim == 1 {
        num(c[0])
    } else {
        format!("{},{}", num(c[0]), num(c[1]))
    }
}

/// Glued field at every global node, Dirichlet nodes included.
pub fn solution_csv(partition: &Partition, glued: &GluedSolution) -> String {
    let dim = partition.global.dim;
    let mut s = format!("{},u\n", coord_header(dim));
    for (c, u) in partition.global.coords.iter().zip(&glued.values) {
        let _ = writeln!(s, "{},{}", coord_cols(dim, c), num(*u));
    }
    s
}

/// Dual values of interface `k`.
pub fn dual_csv(partition: &Partition, k: usize, dual: &[f64]) -> String {
    let dim = partition.global.dim;
    let mut s = format!("{},g\n", coord_header(dim));
    for (c, g) in partition.interfaces[k].coords.iter().zip(dual) {
        let _ = writeln!(s, "{},{}", coord_cols(dim, c), num(*g));
    }
    s
}

/// File name for interface `k`, e.g. `duals_1_2.csv` (1-based).
pub fn dual_file_name(prefix: &str, partition: &Partition, k: usize) -> String {
    let f = &partition.interfaces[k];
    format!("{prefix}_{}_{}.csv", f.left + 1, f.right + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub kind: String,
    pub converged: bool,
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub stop_tol: f64,
    pub max_jump: f64,
    pub wall_time_s: f64,
    pub threads: usize,
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn write_summary(dir: &Path, name: &str, summary: &Summary) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| crate::Error::Config(e.to_string()))?;
    text.push('\n');
    write_file(dir, name, &text)
}
