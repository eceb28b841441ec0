//! Complete solver instances: Poisson, p-Laplacian, obstacle and the
//! unilateral and semi-permeable transmission variants.

use crate::error::{check_dim, Error, Result};
use crate::harmonic::HarmonicLift;
use crate::linalg::{lincomb, Vector};
use crate::mesh::{assemble_load, localize, metric_gram, Partition, FLOATING_METRIC_MASS};
use crate::prox::{Coupling, ObstacleEnergy, PLaplacianEnergy, QuadraticEnergy, SubdomainEnergy};
use crate::splitting::{PrimalDualPoint, ProblemOracles};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    Poisson,
    /// One exponent for every subdomain, or one per subdomain.
    PLaplacian { exponents: Vec<f64> },
    /// Obstacle as global nodal values.
    Obstacle { obstacle: Vector },
    /// `orientation[k] * jump_k >= 0` on every interface.
    Unilateral { orientation: Vec<f64> },
    /// Unilateral condition plus a quadratic penalty on the jump.
    Membrane { orientation: Vec<f64>, permeability: Vec<f64> },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Poisson => "poisson",
            ProblemKind::PLaplacian { .. } => "plaplacian",
            ProblemKind::Obstacle { .. } => "obstacle",
            ProblemKind::Unilateral { .. } => "unilateral",
            ProblemKind::Membrane { .. } => "membrane",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub partition: Partition,
    pub kind: ProblemKind,
    /// Source term as global nodal values.
    pub source: Vector,
    /// Mass weight in the metric of floating subdomains.
    pub floating_mass: f64,
}

impl ProblemSpec {
    pub fn new(partition: Partition, kind: ProblemKind, source: Vector) -> Self {
        ProblemSpec {
            partition,
            kind,
            source,
            floating_mass: FLOATING_METRIC_MASS,
        }
    }
}

/// Per-interface orientation values, broadcasting a single entry.
fn per_interface(values: &[f64], n: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        l if l == n => Ok(values.to_vec()),
        l => Err(Error::Parameter(format!("{what}: expected 1 or {n} values, got {l}"))),
    }
}

fn orientations(values: &[f64], n: usize) -> Result<Vec<f64>> {
    let o = per_interface(values, n, "orientation")?;
    if let Some(bad) = o.iter().find(|&&e| e != 1.0 && e != -1.0) {
        return Err(Error::Parameter(format!("orientation must be +1 or -1, got {bad}")));
    }
    Ok(o)
}

/// The coupling functions implied by `kind`, one per interface.
pub fn couplings_for(kind: &ProblemKind, n_interfaces: usize) -> Result<Vec<Coupling>> {
    Ok(match kind {
        ProblemKind::Poisson | ProblemKind::PLaplacian { .. } | ProblemKind::Obstacle { .. } => {
            vec![Coupling::Equality; n_interfaces]
        }
        ProblemKind::Unilateral { orientation } => orientations(orientation, n_interfaces)?
            .into_iter()
            .map(|e| if e > 0.0 { Coupling::ConePlus } else { Coupling::ConeMinus })
            .collect(),
        ProblemKind::Membrane {
            orientation,
            permeability,
        } => {
            let o = orientations(orientation, n_interfaces)?;
            let mu = per_interface(permeability, n_interfaces, "permeability")?;
            o.into_iter()
                .zip(mu)
                .map(|(e, permeability)| {
                    let c = if e > 0.0 {
                        Coupling::MembranePlus { permeability }
                    } else {
                        Coupling::MembraneMinus { permeability }
                    };
                    c.validate().map(|_| c)
                })
                .collect::<Result<_>>()?
        }
    })
}

/// Wires lifts, subdomain energies and couplings; the initial point is 0.
pub fn build(spec: &ProblemSpec) -> Result<(ProblemOracles, PrimalDualPoint)> {
    let part = &spec.partition;
    let m = part.m();
    check_dim(part.global.n_nodes(), spec.source.len())?;
    if let ProblemKind::Obstacle { obstacle } = &spec.kind {
        check_dim(part.global.n_nodes(), obstacle.len())?;
    }
    let exponents = match &spec.kind {
        ProblemKind::PLaplacian { exponents } => match exponents.len() {
            1 => vec![exponents[0]; m],
            l if l == m => exponents.clone(),
            l => {
                return Err(Error::Parameter(format!(
                    "expected 1 or {m} p-Laplacian exponents, got {l}"
                )))
            }
        },
        _ => Vec::new(),
    };

    let mut lifts = Vec::with_capacity(m);
    let mut energies = Vec::with_capacity(m);
    for (i, grid) in part.subdomains.iter().enumerate() {
        let gram = metric_gram(grid, spec.floating_mass)?;
        let load = assemble_load(grid, &localize(grid, &spec.source))?;
        let energy = match &spec.kind {
            ProblemKind::PLaplacian { .. } => SubdomainEnergy::PLaplacian(Box::new(PLaplacianEnergy::new(
                grid,
                exponents[i],
                load,
                gram.clone(),
            )?)),
            ProblemKind::Obstacle { obstacle } => {
                let h = grid.restrict(&localize(grid, obstacle));
                SubdomainEnergy::Obstacle(ObstacleEnergy {
                    quadratic: QuadraticEnergy::assemble(grid, &gram, load)?,
                    obstacle: h,
                    gram: gram.clone(),
                })
            }
            _ => SubdomainEnergy::Quadratic(QuadraticEnergy::assemble(grid, &gram, load)?),
        };
        lifts.push(HarmonicLift::with_gram(part, i, gram)?);
        energies.push(energy);
    }
    let couplings = couplings_for(&spec.kind, part.interfaces.len())?;
    let oracles = ProblemOracles::new(part.clone(), lifts, energies, couplings)?;
    let x0 = PrimalDualPoint::zeros(part);
    Ok((oracles, x0))
}

/// Subdomain prox of a quadratic or obstacle energy with a single solve:
/// `(u + gamma Q_i(f, -g)) / (1 + gamma)`, projected for the obstacle.
pub fn efficient_primal_update(
    oracles: &ProblemOracles,
    i: usize,
    u: &[f64],
    gamma: f64,
    duals: &[Vector],
) -> Result<Vector> {
    let lift = &oracles.lifts[i];
    check_dim(lift.dim(), u.len())?;
    let (quadratic, obstacle) = match &oracles.energies[i] {
        SubdomainEnergy::Quadratic(q) => (q, None),
        SubdomainEnergy::Obstacle(o) => (&o.quadratic, Some(o)),
        SubdomainEnergy::PLaplacian(_) => {
            return Err(Error::Parameter("single-solve update needs a quadratic energy".into()))
        }
    };
    if quadratic.shifted.is_some() {
        return Err(Error::Parameter(
            "single-solve update needs the metric to be the stiffness".into(),
        ));
    }
    let mut rhs = quadratic.load.clone();
    lift.neumann_rhs(duals, -1.0, &mut rhs);
    let q = lift.solve(&rhs)?;
    let a = 1.0 / (1.0 + gamma);
    let z = lincomb(&[(a, u), (gamma * a, &q)]);
    match obstacle {
        None => Ok(z),
        Some(o) => o.project(&z),
    }
}

/// Global field assembled from a decomposed iterate.
#[derive(Debug, Clone)]
pub struct GluedSolution {
    /// Nodal values on the global grid, Dirichlet nodes included.
    pub values: Vector,
    pub duals: Vec<Vector>,
    /// Largest nodal `|T_ij u_i - T_ji u_j|` over all interfaces.
    pub max_jump: f64,
}

/// Averages the subdomain values at shared nodes.
pub fn glue(partition: &Partition, point: &PrimalDualPoint) -> Result<GluedSolution> {
    point.check_shape(partition)?;
    let n = partition.global.n_nodes();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (grid, u) in partition.subdomains.iter().zip(&point.primal) {
        for (l, v) in grid.expand(u).into_iter().enumerate() {
            let g = grid.global_ids[l];
            sum[g] += v;
            count[g] += 1;
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let max_jump = crate::harmonic::trace_jumps(partition, &point.primal)
        .iter()
        .flatten()
        .fold(0.0f64, |m, j| m.max(j.abs()));
    Ok(GluedSolution {
        values,
        duals: point.dual.clone(),
        max_jump,
    })
}

/// Dual variables of one interface next to a finite-difference estimate of
/// the flux `nu_j . grad u` (outward normal of the right subdomain).
#[derive(Debug, Clone)]
pub struct FluxReport {
    pub left: usize,
    pub right: usize,
    pub coords: Vec<[f64; 2]>,
    pub dual: Vector,
    pub fd_estimate: Vector,
}

impl FluxReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.dual
            .iter()
            .zip(&self.fd_estimate)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// One-sided first-order estimate using the nearest node of the right
/// subdomain along the interface normal.
pub fn dual_flux_report(partition: &Partition, glued: &GluedSolution) -> Vec<FluxReport> {
    let coords = &partition.global.coords;
    partition
        .interfaces
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let right = &partition.subdomains[f.right];
            let fd_estimate = f
                .coords
                .iter()
                .zip(&f.nodes)
                .map(|(c, &node)| {
                    let neighbour = right
                        .global_ids
                        .iter()
                        .copied()
                        .filter(|&g| {
                            let p = coords[g];
                            (p[1] - c[1]).abs() < 1e-12 && p[0] > c[0] + 1e-14
                        })
                        .min_by(|&a, &b| coords[a][0].total_cmp(&coords[b][0]));
                    match neighbour {
                        Some(g) => {
                            let h = coords[g][0] - c[0];
                            -(glued.values[g] - glued.values[node]) / h
                        }
                        None => f64::NAN,
                    }
                })
                .collect();
            FluxReport {
                left: f.left,
                right: f.right,
                coords: f.coords.clone(),
                dual: glued.duals[k].clone(),
                fd_estimate,
            }
        })
        .collect()
}
