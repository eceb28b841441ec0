//! Batch commands behind the `ddprox` binary. Each returns the process exit
//! code: 0 on success, 2 when the iteration budget ran out, 1 on error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{Kind, RunConfig};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::mesh::{assemble_load, assemble_stiffness, Partition};
use crate::oracle::{monolithic_obstacle, monolithic_plaplacian, monolithic_poisson};
use crate::output::{self, Summary};
use crate::problems::{build, dual_flux_report, glue, GluedSolution, ProblemKind, ProblemSpec};
use crate::prox::PLAPLACIAN_SINGULAR_DELTA;
use crate::splitting::{run, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone)]
pub struct Overrides {
    pub threads: usize,
    pub out_dir: Option<PathBuf>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            threads: 1,
            out_dir: None,
            max_iters: None,
            tol: None,
        }
    }
}

/// Runs `f` on a dedicated pool of `threads` workers.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

fn load(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(dir) = &ov.out_dir {
        cfg.output.dir = dir.clone();
    }
    if let Some(n) = ov.max_iters {
        cfg.params.max_iters = n;
    }
    if let Some(t) = ov.tol {
        // keeps the relative/absolute reading of the config
        cfg.params.stop_tol = match cfg.params.stop_tol {
            crate::config::StopTolConfig::Relative(_) => crate::config::StopTolConfig::Relative(t),
            crate::config::StopTolConfig::Absolute(_) => crate::config::StopTolConfig::Absolute(t),
        };
    }
    Ok(cfg)
}

/// A solved instance: the spec, the outcome and the glued field.
pub struct Solved {
    pub spec: ProblemSpec,
    pub outcome: RunOutcome,
    pub glued: GluedSolution,
    pub wall_time_s: f64,
}

pub fn solve(cfg: &RunConfig, threads: usize) -> Result<Solved> {
    let spec = cfg.problem()?;
    let params = cfg.algorithm_params()?;
    let start = Instant::now();
    let outcome = with_threads(threads, || -> Result<RunOutcome> {
        let (oracles, _) = build(&spec)?;
        let x0 = cfg.initial_point(&spec.partition);
        run(&x0, &oracles, &params, |_, step| {
            if step.report.n % 500 == 0 {
                log::info!("n={} residual={:e}", step.report.n, step.report.kt_residual);
            }
        })
    })??;
    let wall_time_s = start.elapsed().as_secs_f64();
    let glued = glue(&spec.partition, &outcome.point)?;
    Ok(Solved {
        spec,
        outcome,
        glued,
        wall_time_s,
    })
}

fn write_outputs(cfg: &RunConfig, solved: &Solved, threads: usize) -> Result<Vec<PathBuf>> {
    let o = &cfg.output;
    let part = &solved.spec.partition;
    let mut written = vec![
        output::write_file(&o.dir, &o.trace, &output::trace_csv(&solved.outcome.reports))?,
        output::write_file(&o.dir, &o.solution, &output::solution_csv(part, &solved.glued))?,
    ];
    for (k, dual) in solved.outcome.point.dual.iter().enumerate() {
        written.push(output::write_file(
            &o.dir,
            &output::dual_file_name(&o.duals, part, k),
            &output::dual_csv(part, k, dual),
        )?);
    }
    let reports = &solved.outcome.reports;
    let summary = Summary {
        kind: solved.spec.kind.name().into(),
        converged: solved.outcome.converged,
        iterations: reports.len(),
        initial_residual: reports.first().map_or(0.0, |r| r.kt_residual),
        final_residual: solved.outcome.final_residual(),
        stop_tol: solved.outcome.stop_tol,
        max_jump: solved.glued.max_jump,
        wall_time_s: solved.wall_time_s,
        threads,
    };
    written.push(output::write_summary(&o.dir, &o.summary, &summary)?);
    Ok(written)
}

fn report_error(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    EXIT_ERROR
}

pub fn run_command(path: &Path, ov: &Overrides, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = load(path, ov).and_then(|cfg| {
        let solved = solve(&cfg, ov.threads)?;
        let files = write_outputs(&cfg, &solved, ov.threads)?;
        Ok((solved, files))
    });
    match result {
        Ok((solved, files)) => {
            let o = &solved.outcome;
            let _ = writeln!(
                out,
                "{} after {} iterations: residual {:e} (tolerance {:e})",
                if o.converged { "converged" } else { "not converged" },
                o.iterations(),
                o.final_residual(),
                o.stop_tol
            );
            for f in files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            if o.converged {
                EXIT_OK
            } else {
                EXIT_MAX_ITERS
            }
        }
        Err(e) => report_error(err, &e),
    }
}

/// Distances between the decomposed solution and the monolithic one.
#[derive(Debug, Clone)]
pub struct Verification {
    pub energy_error: f64,
    /// `None` when no flux comparison applies to the problem kind.
    pub flux_error: Option<f64>,
    /// Obstacle problems: `max |min(u - h, lambda)|` with the multiplier
    /// `lambda = K u - b` of the glued field, and the largest violation of
    /// `u >= h`.
    pub complementarity: Option<(f64, f64)>,
}

pub fn energy_distance(partition: &Partition, a: &[f64], b: &[f64]) -> Result<f64> {
    let g = &partition.global;
    let k = assemble_stiffness(g)?;
    let d: Vector = g.restrict(a).iter().zip(g.restrict(b)).map(|(x, y)| x - y).collect();
    Ok(k.bilinear(&d, &d).max(0.0).sqrt())
}

/// `(max |min(u - h, K u - b)|, max (h - u)^+)` over the free nodes.
pub fn complementarity(partition: &Partition, u: &[f64], h: &[f64], f: &[f64]) -> Result<(f64, f64)> {
    let g = &partition.global;
    let k = assemble_stiffness(g)?;
    let b = assemble_load(g, f)?;
    let (u, h) = (g.restrict(u), g.restrict(h));
    let lambda: Vector = k.mul(&u).iter().zip(&b).map(|(a, b)| a - b).collect();
    let comp = u
        .iter()
        .zip(&h)
        .zip(&lambda)
        .fold(0.0f64, |m, ((u, h), l)| m.max((u - h).min(*l).abs()));
    let viol = u.iter().zip(&h).fold(0.0f64, |m, (u, h)| m.max(h - u));
    Ok((comp, viol))
}

pub fn verify_solution(solved: &Solved) -> Result<Verification> {
    let spec = &solved.spec;
    let part = &spec.partition;
    let f = &spec.source;
    let reference = match &spec.kind {
        ProblemKind::Poisson => monolithic_poisson(&part.global, f)?,
        ProblemKind::Obstacle { obstacle } => monolithic_obstacle(&part.global, f, obstacle)?,
        ProblemKind::PLaplacian { exponents } => {
            let p = exponents[0];
            if exponents.iter().any(|q| *q != p) {
                return Err(Error::Config("verify needs a single p-Laplacian exponent".into()));
            }
            let delta = if p < 2.0 { PLAPLACIAN_SINGULAR_DELTA } else { 0.0 };
            monolithic_plaplacian(&part.global, f, p, delta)?
        }
        other => {
            return Err(Error::Config(format!(
                "verify supports poisson, plaplacian and obstacle, not {}",
                other.name()
            )))
        }
    };
    let energy_error = energy_distance(part, &solved.glued.values, &reference)?;
    let quadratic = match &spec.kind {
        ProblemKind::Poisson => true,
        ProblemKind::PLaplacian { exponents } => exponents.iter().all(|p| *p == 2.0),
        _ => false,
    };
    let flux_error = quadratic.then(|| {
        dual_flux_report(part, &solved.glued)
            .iter()
            .map(|r| r.max_discrepancy())
            .fold(0.0f64, f64::max)
    });
    let complementarity = match &spec.kind {
        ProblemKind::Obstacle { obstacle } => Some(complementarity(part, &solved.glued.values, obstacle, f)?),
        _ => None,
    };
    Ok(Verification {
        energy_error,
        flux_error,
        complementarity,
    })
}

pub fn verify_command(path: &Path, ov: &Overrides, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = load(path, ov).and_then(|cfg| {
        if !matches!(cfg.kind, Kind::Poisson | Kind::Plaplacian | Kind::Obstacle) {
            return Err(Error::Config(format!(
                "verify supports poisson, plaplacian and obstacle, not {}",
                format!("{:?}", cfg.kind).to_lowercase()
            )));
        }
        let solved = solve(&cfg, ov.threads)?;
        let v = verify_solution(&solved)?;
        Ok((cfg, solved, v))
    });
    let (cfg, solved, v) = match result {
        Ok(r) => r,
        Err(e) => return report_error(err, &e),
    };
    let tol = cfg.verify;
    let mut ok = v.energy_error <= tol.energy_tol;
    let _ = writeln!(
        out,
        "iterations {} ({}), residual {:e}",
        solved.outcome.iterations(),
        if solved.outcome.converged { "converged" } else { "not converged" },
        solved.outcome.final_residual()
    );
    let _ = writeln!(out, "energy-norm discrepancy {:e} (tolerance {:e})", v.energy_error, tol.energy_tol);
    match v.flux_error {
        Some(e) => {
            ok &= e <= tol.flux_tol;
            let _ = writeln!(out, "dual-flux discrepancy {e:e} (tolerance {:e})", tol.flux_tol);
        }
        None => {
            let _ = writeln!(out, "dual-flux discrepancy not applicable");
        }
    }
    if let Some((comp, viol)) = v.complementarity {
        ok &= comp <= tol.complementarity_tol;
        let _ = writeln!(
            out,
            "complementarity residual {comp:e} (tolerance {:e}), largest violation of u >= h {viol:e}",
            tol.complementarity_tol
        );
    }
    let _ = writeln!(out, "{}", if ok { "PASS" } else { "FAIL" });
    if ok {
        EXIT_OK
    } else {
        EXIT_ERROR
    }
}

fn fmt_coord(dim: usize, c: &[f64; 2]) -> String {
    if dim == 1 {
        format!("x={}", c[0])
    } else {
        format!("({}, {})", c[0], c[1])
    }
}

/// Partition summary: `m`, the interface pairs, neighbour sets and sizes.
pub fn describe(partition: &Partition) -> String {
    let one_based = |v: Vec<usize>| v.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",");
    let dim = partition.global.dim;
    let mut s = format!("m={}\n", partition.m());
    let pairs: Vec<String> = partition
        .k_pairs()
        .iter()
        .map(|(i, j)| format!("({},{})", i + 1, j + 1))
        .collect();
    s += &format!("K={{{}}}\n", pairs.join(","));
    for (i, g) in partition.subdomains.iter().enumerate() {
        s += &format!(
            "subdomain {}: nodes={} dofs={} J+={{{}}} J-={{{}}}{}\n",
            i + 1,
            g.n_nodes(),
            g.n_dofs(),
            one_based(partition.j_plus(i)),
            one_based(partition.j_minus(i)),
            if g.floating { " floating" } else { "" }
        );
    }
    for f in &partition.interfaces {
        let at = if f.len() == 1 {
            fmt_coord(dim, &f.coords[0])
        } else {
            format!(
                "{} .. {}",
                fmt_coord(dim, &f.coords[0]),
                fmt_coord(dim, &f.coords[f.len() - 1])
            )
        };
        s += &format!("interface ({},{}): nodes={} at {}\n", f.left + 1, f.right + 1, f.len(), at);
    }
    s
}

pub fn describe_command(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match RunConfig::load(path).and_then(|c| c.partition()) {
        Ok(p) => {
            let _ = out.write_all(describe(&p).as_bytes());
            EXIT_OK
        }
        Err(e) => report_error(err, &e),
    }
}
