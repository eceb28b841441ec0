//! Strongly convergent primal-dual splitting for the decomposed problem.
//!
//! One outer iteration evaluates every subdomain prox and interface prox
//! once, builds a half-space from the residuals, relaxes towards it and then
//! projects the anchor `x0` onto the intersection of two half-spaces.

use std::fmt;

use crate::error::{check_dim, Error, Result, Site};
use crate::harmonic::HarmonicLift;
use crate::linalg::{dot, Vector};
use crate::mesh::Partition;
use crate::par::{map_indexed, ordered_sum, try_map_indexed};
use crate::prox::{Coupling, SubdomainEnergy};

/// Values of `rho` at or below this multiple of `alpha * nu` are taken as 0.
pub const RHO_ROUNDOFF: f64 = 1e-14;
/// A step whose gap is below this (relative to the iterate norm) is
/// treated as an exact fixpoint.
pub const FIXPOINT_ROUNDOFF: f64 = 1e-14;
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_MAX_ITERS: usize = 5000;
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-8;

/// Iterate `((u_i)_i, (g_k)_k)`: nodal primal values on each subdomain's
/// free dofs and nodal dual values on each interface.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub primal: Vec<Vector>,
    pub dual: Vec<Vector>,
}

impl PrimalDualPoint {
    pub fn zeros(partition: &Partition) -> Self {
        PrimalDualPoint {
            primal: partition.subdomains.iter().map(|g| vec![0.0; g.n_dofs()]).collect(),
            dual: partition.interfaces.iter().map(|f| vec![0.0; f.len()]).collect(),
        }
    }

    pub fn check_shape(&self, partition: &Partition) -> Result<()> {
        check_dim(partition.m(), self.primal.len())?;
        check_dim(partition.interfaces.len(), self.dual.len())?;
        for (u, g) in self.primal.iter().zip(&partition.subdomains) {
            check_dim(g.n_dofs(), u.len())?;
        }
        for (d, f) in self.dual.iter().zip(&partition.interfaces) {
            check_dim(f.len(), d.len())?;
        }
        Ok(())
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Vector> {
        self.primal.iter().chain(&self.dual)
    }
}

/// Real sequence used for a step size: a constant, or explicit values with
/// the last one repeated.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl Schedule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Schedule::Constant(c) => *c,
            Schedule::Sequence(v) => v[n.min(v.len() - 1)],
        }
    }

    fn check(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        let values: &[f64] = match self {
            Schedule::Constant(c) => std::slice::from_ref(c),
            Schedule::Sequence(v) => v,
        };
        if values.is_empty() {
            return Err(Error::Parameter(format!("{name} schedule is empty")));
        }
        for &x in values {
            if !(x >= lo && x <= hi) {
                return Err(Error::Parameter(format!("{name} = {x} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopTol {
    /// Multiple of the residual of the first iterate.
    Relative(f64),
    Absolute(f64),
}

/// Step sizes and stopping rule; bounds are checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmParams {
    epsilon: f64,
    gamma: Schedule,
    mu: Schedule,
    lambda: Schedule,
    max_iters: usize,
    stop_tol: StopTol,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        AlgorithmParams {
            epsilon: DEFAULT_EPSILON,
            gamma: Schedule::Constant(1.0),
            mu: Schedule::Constant(1.0),
            lambda: Schedule::Constant(1.0),
            max_iters: DEFAULT_MAX_ITERS,
            stop_tol: StopTol::Relative(DEFAULT_RELATIVE_TOL),
        }
    }
}

impl AlgorithmParams {
    /// `gamma` and `mu` must lie in `[eps, 1/eps]`, `lambda` in `[eps, 1]`.
    pub fn new(
        epsilon: f64,
        gamma: Schedule,
        mu: Schedule,
        lambda: Schedule,
        max_iters: usize,
        stop_tol: StopTol,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Parameter(format!("epsilon = {epsilon} outside (0, 1)")));
        }
        gamma.check("gamma", epsilon, 1.0 / epsilon)?;
        mu.check("mu", epsilon, 1.0 / epsilon)?;
        lambda.check("lambda", epsilon, 1.0)?;
        match stop_tol {
            StopTol::Relative(t) | StopTol::Absolute(t) if !(t >= 0.0 && t.is_finite()) => {
                return Err(Error::Parameter(format!("stop tolerance {t} must be finite and nonnegative")));
            }
            _ => {}
        }
        Ok(AlgorithmParams {
            epsilon,
            gamma,
            mu,
            lambda,
            max_iters,
            stop_tol,
        })
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_stop_tol(self, stop_tol: StopTol) -> Result<Self> {
        Self::new(self.epsilon, self.gamma, self.mu, self.lambda, self.max_iters, stop_tol)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn gamma(&self, n: usize) -> f64 {
        self.gamma.at(n)
    }
    pub fn mu(&self, n: usize) -> f64 {
        self.mu.at(n)
    }
    pub fn lambda(&self, n: usize) -> f64 {
        self.lambda.at(n)
    }
    pub fn max_iters(&self) -> usize {
        self.max_iters
    }
    pub fn stop_tol(&self) -> StopTol {
        self.stop_tol
    }
}

/// Everything the engine needs about a decomposed problem.
#[derive(Debug, Clone)]
pub struct ProblemOracles {
    pub partition: Partition,
    pub lifts: Vec<HarmonicLift>,
    pub energies: Vec<SubdomainEnergy>,
    /// One coupling per interface, in interface order.
    pub couplings: Vec<Coupling>,
}

impl ProblemOracles {
    pub fn new(
        partition: Partition,
        lifts: Vec<HarmonicLift>,
        energies: Vec<SubdomainEnergy>,
        couplings: Vec<Coupling>,
    ) -> Result<Self> {
        check_dim(partition.m(), lifts.len())?;
        check_dim(partition.m(), energies.len())?;
        check_dim(partition.interfaces.len(), couplings.len())?;
        for (i, (l, e)) in lifts.iter().zip(&energies).enumerate() {
            check_dim(partition.subdomains[i].n_dofs(), l.dim())?;
            check_dim(l.dim(), e.dim())?;
        }
        for c in &couplings {
            c.validate()?;
        }
        Ok(ProblemOracles {
            partition,
            lifts,
            energies,
            couplings,
        })
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    pub fn n_interfaces(&self) -> usize {
        self.partition.interfaces.len()
    }

    /// Energy product on subdomain `i`.
    pub fn primal_inner(&self, i: usize, a: &[f64], b: &[f64]) -> f64 {
        self.lifts[i].gram().bilinear(a, b)
    }

    /// Interface L2 product on interface `k`.
    pub fn dual_inner(&self, k: usize, a: &[f64], b: &[f64]) -> f64 {
        self.partition.interfaces[k].inner(a, b)
    }

    /// `T_ij u_i - T_ji u_j` for interface `k`.
    pub fn jump(&self, k: usize, primal: &[Vector]) -> Vector {
        let f = &self.partition.interfaces[k];
        let a = f.trace_left.apply(&primal[f.left]);
        let b = f.trace_right.apply(&primal[f.right]);
        a.iter().zip(&b).map(|(a, b)| a - b).collect()
    }

    /// Block `i` of `Lambda^* g`.
    pub fn adjoint(&self, i: usize, duals: &[Vector]) -> Result<Vector> {
        self.lifts[i].adjoint(duals, 1.0)
    }
}

/// A space whose points can be combined linearly and paired.
pub trait PointSpace {
    type Point: Clone;
    fn inner(&self, a: &Self::Point, b: &Self::Point) -> f64;
    /// `sum_k c_k x_k`.
    fn combine(&self, terms: &[(f64, &Self::Point)]) -> Self::Point;
}

/// `R^d` with the dot product.
#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl PointSpace for Euclidean {
    type Point = Vector;

    fn inner(&self, a: &Vector, b: &Vector) -> f64 {
        dot(a, b)
    }

    fn combine(&self, terms: &[(f64, &Vector)]) -> Vector {
        let n = terms[0].1.len();
        (0..n).map(|j| terms.iter().map(|(c, x)| c * x[j]).sum()).collect()
    }
}

fn combine_blocks(blocks: &[&[Vector]], coeffs: &[f64]) -> Vec<Vector> {
    map_indexed(blocks[0].len(), |b| {
        let n = blocks[0][b].len();
        (0..n)
            .map(|j| {
                coeffs
                    .iter()
                    .zip(blocks)
                    .fold(0.0, |acc, (c, x)| acc + c * x[b][j])
            })
            .collect()
    })
}

impl PointSpace for ProblemOracles {
    type Point = PrimalDualPoint;

    fn inner(&self, a: &PrimalDualPoint, b: &PrimalDualPoint) -> f64 {
        let m = self.m();
        let parts = map_indexed(m + self.n_interfaces(), |k| {
            if k < m {
                self.primal_inner(k, &a.primal[k], &b.primal[k])
            } else {
                self.dual_inner(k - m, &a.dual[k - m], &b.dual[k - m])
            }
        });
        ordered_sum(&parts)
    }

    fn combine(&self, terms: &[(f64, &PrimalDualPoint)]) -> PrimalDualPoint {
        let coeffs: Vec<f64> = terms.iter().map(|t| t.0).collect();
        let primal: Vec<&[Vector]> = terms.iter().map(|t| t.1.primal.as_slice()).collect();
        let dual: Vec<&[Vector]> = terms.iter().map(|t| t.1.dual.as_slice()).collect();
        PrimalDualPoint {
            primal: combine_blocks(&primal, &coeffs),
            dual: combine_blocks(&dual, &coeffs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `tau = 0`: the current point is a Kuhn-Tucker point.
    Fixpoint,
    CaseA,
    CaseB,
    CaseC,
}

impl Branch {
    pub fn name(&self) -> &'static str {
        match self {
            Branch::Fixpoint => "fixpoint",
            Branch::CaseA => "case-A",
            Branch::CaseB => "case-B",
            Branch::CaseC => "case-C",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalars of one projection onto `H(x0, xn) ∩ H(xn, xh)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaugazeauScalars {
    /// `<x0 - xn, xn - xh>`
    pub chi: f64,
    /// `||x0 - xn||^2`
    pub dist0_sq: f64,
    /// `||xn - xh||^2`
    pub halfstep_sq: f64,
    /// `dist0_sq * halfstep_sq - chi^2`
    pub rho: f64,
    pub branch: Branch,
    /// The result is `c[0] x0 + c[1] xn + c[2] xh`.
    pub coeffs: [f64; 3],
}

/// Closed-form three-case coefficients.
pub fn haugazeau_coefficients(chi: f64, dist0_sq: f64, halfstep_sq: f64) -> Result<HaugazeauScalars> {
    let (alpha, nu) = (dist0_sq, halfstep_sq);
    let rho = alpha * nu - chi * chi;
    if !(rho.is_finite() && chi.is_finite()) {
        return Err(Error::NonFinite("projection scalars"));
    }
    let degenerate = rho <= RHO_ROUNDOFF * alpha * nu;
    let (branch, coeffs) = if degenerate {
        if chi < 0.0 {
            return Err(Error::InconsistentHalfspaces { rho, chi });
        }
        (Branch::CaseA, [0.0, 0.0, 1.0])
    } else if chi * nu >= rho {
        let c = 1.0 + chi / nu;
        (Branch::CaseB, [1.0, -c, c])
    } else {
        let a = nu * chi / rho;
        let b = nu * alpha / rho;
        (Branch::CaseC, [a, 1.0 - a - b, b])
    };
    Ok(HaugazeauScalars {
        chi,
        dist0_sq: alpha,
        halfstep_sq: nu,
        rho,
        branch,
        coeffs,
    })
}

/// Projection of `x0` onto `H(x0, xn) ∩ H(xn, xh)` where
/// `H(x, y) = {z : <z - y, x - y> <= 0}`.
pub fn haugazeau_project<S: PointSpace>(
    space: &S,
    x0: &S::Point,
    xn: &S::Point,
    xh: &S::Point,
) -> Result<(S::Point, HaugazeauScalars)> {
    let d0 = space.combine(&[(1.0, x0), (-1.0, xn)]);
    let dh = space.combine(&[(1.0, xn), (-1.0, xh)]);
    let s = haugazeau_coefficients(space.inner(&d0, &dh), space.inner(&d0, &d0), space.inner(&dh, &dh))?;
    let out = space.combine(&[(s.coeffs[0], x0), (s.coeffs[1], xn), (s.coeffs[2], xh)]);
    Ok((out, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub n: usize,
    pub tau: f64,
    pub theta: f64,
    pub chi: f64,
    pub dist0_sq: f64,
    pub halfstep_sq: f64,
    pub rho: f64,
    pub branch: Branch,
    /// Kuhn-Tucker residual of the iterate entering this step.
    pub kt_residual: f64,
}

/// Quantities of one prox sweep at the current iterate.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub p: Vec<Vector>,
    pub l: Vec<Vector>,
    pub q: Vec<Vector>,
    pub s: Vec<Vector>,
    pub t: Vec<Vector>,
    /// `sum_i ||u_i - p_i||^2`
    pub primal_gap_sq: f64,
    /// `sum_k ||l_k - q_k||^2`
    pub dual_gap_sq: f64,
    pub tau: f64,
}

impl Sweep {
    pub fn kt_residual(&self, gamma: f64, mu: f64) -> f64 {
        (self.primal_gap_sq / gamma + self.dual_gap_sq / mu).sqrt()
    }
}

/// Evaluates every prox once at `state` with steps `gamma`, `mu`.
pub fn sweep(state: &PrimalDualPoint, oracles: &ProblemOracles, gamma: f64, mu: f64) -> Result<Sweep> {
    let part = &oracles.partition;
    let m = oracles.m();
    let nk = oracles.n_interfaces();

    // interface proxes
    let l: Vec<Vector> = map_indexed(nk, |k| oracles.jump(k, &state.primal));
    let q: Vec<Vector> = map_indexed(nk, |k| {
        let arg: Vector = l[k].iter().zip(&state.dual[k]).map(|(l, g)| l + mu * g).collect();
        oracles.couplings[k].prox(&arg, mu)
    });
    let lq: Vec<Vector> = map_indexed(nk, |k| l[k].iter().zip(&q[k]).map(|(l, q)| l - q).collect());

    // subdomain proxes and primal residual directions
    let primal = try_map_indexed(m, |i| -> Result<(Vector, Vector, f64, f64)> {
        let u = &state.primal[i];
        let lift = &oracles.lifts[i];
        let a = lift.adjoint(&state.dual, 1.0)?;
        let v: Vector = u.iter().zip(&a).map(|(u, a)| u - gamma * a).collect();
        let p = oracles.energies[i]
            .prox(&v, gamma)
            .map_err(|e| e.at(Site::Subdomain(i)))?;
        let r = lift.adjoint(&lq, 1.0)?;
        let up: Vector = u.iter().zip(&p).map(|(u, p)| u - p).collect();
        let s: Vector = up.iter().zip(&r).map(|(d, r)| d / gamma + r / mu).collect();
        let gap = oracles.primal_inner(i, &up, &up);
        let ss = oracles.primal_inner(i, &s, &s);
        Ok((p, s, gap, ss))
    })?;
    let mut p = Vec::with_capacity(m);
    let mut s = Vec::with_capacity(m);
    let mut gap_parts = Vec::with_capacity(m);
    let mut s_parts = Vec::with_capacity(m);
    for (pi, si, g, ss) in primal {
        p.push(pi);
        s.push(si);
        gap_parts.push(g);
        s_parts.push(ss);
    }

    let t: Vec<Vector> = map_indexed(nk, |k| {
        let f = &part.interfaces[k];
        let a = f.trace_left.apply(&p[f.left]);
        let b = f.trace_right.apply(&p[f.right]);
        (0..f.len()).map(|j| q[k][j] - a[j] + b[j]).collect()
    });
    let dual_parts = map_indexed(nk, |k| {
        (
            oracles.dual_inner(k, &lq[k], &lq[k]),
            oracles.dual_inner(k, &t[k], &t[k]),
        )
    });
    let dual_gap: Vec<f64> = dual_parts.iter().map(|d| d.0).collect();
    let t_parts: Vec<f64> = dual_parts.iter().map(|d| d.1).collect();

    let tau = ordered_sum(&s_parts) + ordered_sum(&t_parts);
    Ok(Sweep {
        p,
        l,
        q,
        s,
        t,
        primal_gap_sq: ordered_sum(&gap_parts),
        dual_gap_sq: ordered_sum(&dual_gap),
        tau,
    })
}

/// Intermediate points of one iteration, for observers.
#[derive(Debug, Clone)]
pub struct IterationStep {
    pub report: IterationReport,
    pub half: PrimalDualPoint,
    pub next: PrimalDualPoint,
}

/// One outer iteration from `state` with anchor `x0`.
pub fn iterate_once(
    state: &PrimalDualPoint,
    x0: &PrimalDualPoint,
    oracles: &ProblemOracles,
    params: &AlgorithmParams,
    n: usize,
) -> Result<IterationStep> {
    state.check_shape(&oracles.partition)?;
    let (gamma, mu, lambda) = (params.gamma(n), params.mu(n), params.lambda(n));
    let sw = sweep(state, oracles, gamma, mu)?;
    let kt = sw.kt_residual(gamma, mu);
    let gap = sw.primal_gap_sq / gamma + sw.dual_gap_sq / mu;
    let scale = 1.0 + oracles.inner(state, state);
    if sw.tau == 0.0 || gap <= FIXPOINT_ROUNDOFF * FIXPOINT_ROUNDOFF * scale {
        let dist0_sq = {
            let d = oracles.combine(&[(1.0, x0), (-1.0, state)]);
            oracles.inner(&d, &d)
        };
        return Ok(IterationStep {
            report: IterationReport {
                n,
                tau: sw.tau,
                theta: 0.0,
                chi: 0.0,
                dist0_sq,
                halfstep_sq: 0.0,
                rho: 0.0,
                branch: Branch::Fixpoint,
                kt_residual: kt,
            },
            half: state.clone(),
            next: state.clone(),
        });
    }
    let theta = lambda * gap / sw.tau;
    let half = PrimalDualPoint {
        primal: map_indexed(oracles.m(), |i| {
            state.primal[i].iter().zip(&sw.s[i]).map(|(u, s)| u - theta * s).collect()
        }),
        dual: map_indexed(oracles.n_interfaces(), |k| {
            state.dual[k].iter().zip(&sw.t[k]).map(|(g, t)| g - theta * t).collect()
        }),
    };
    let (next, scalars) = haugazeau_project(oracles, x0, state, &half)?;
    let branch = scalars.branch;
    if !next.blocks().all(|b| b.iter().all(|x| x.is_finite())) {
        return Err(Error::NonFinite("iterate"));
    }
    Ok(IterationStep {
        report: IterationReport {
            n,
            tau: sw.tau,
            theta,
            chi: scalars.chi,
            dist0_sq: scalars.dist0_sq,
            halfstep_sq: scalars.halfstep_sq,
            rho: scalars.rho,
            branch,
            kt_residual: kt,
        },
        half,
        next,
    })
}

/// `sqrt(gamma^-1 sum ||u_i - p_i||^2 + mu^-1 sum ||l_k - q_k||^2)`.
pub fn kt_residual(
    state: &PrimalDualPoint,
    oracles: &ProblemOracles,
    params: &AlgorithmParams,
    n: usize,
) -> Result<f64> {
    state.check_shape(&oracles.partition)?;
    let (gamma, mu) = (params.gamma(n), params.mu(n));
    Ok(sweep(state, oracles, gamma, mu)?.kt_residual(gamma, mu))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub point: PrimalDualPoint,
    pub reports: Vec<IterationReport>,
    pub converged: bool,
    /// Absolute tolerance the residual was compared against.
    pub stop_tol: f64,
}

impl RunOutcome {
    pub fn iterations(&self) -> usize {
        self.reports.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.reports.last().map_or(0.0, |r| r.kt_residual)
    }
}

/// Iterates from `x0` until the residual of the current iterate drops to
/// the stopping tolerance or `max_iters` steps have been taken. The
/// callback sees every step, including the one that detects convergence.
pub fn run(
    x0: &PrimalDualPoint,
    oracles: &ProblemOracles,
    params: &AlgorithmParams,
    mut callback: impl FnMut(&PrimalDualPoint, &IterationStep),
) -> Result<RunOutcome> {
    x0.check_shape(&oracles.partition)?;
    let mut state = x0.clone();
    let mut reports = Vec::new();
    let mut tol = match params.stop_tol() {
        StopTol::Absolute(t) => t,
        StopTol::Relative(_) => f64::NAN,
    };
    for n in 0..params.max_iters() {
        let step = iterate_once(&state, x0, oracles, params, n)?;
        if n == 0 {
            if let StopTol::Relative(r) = params.stop_tol() {
                tol = r * step.report.kt_residual;
            }
        }
        callback(&state, &step);
        let done = step.report.kt_residual <= tol || step.report.branch == Branch::Fixpoint;
        log::debug!(
            "n={} residual={:e} branch={} theta={:e}",
            n,
            step.report.kt_residual,
            step.report.branch,
            step.report.theta
        );
        reports.push(step.report);
        if done {
            return Ok(RunOutcome {
                point: state,
                reports,
                converged: true,
                stop_tol: tol,
            });
        }
        state = step.next;
    }
    log::info!("no convergence after {} iterations", params.max_iters());
    Ok(RunOutcome {
        point: state,
        reports,
        converged: false,
        stop_tol: tol,
    })
}
