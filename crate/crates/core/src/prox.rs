//! Proximity operators of the subdomain energies (in the energy scalar
//! product) and of the interface coupling functions (in the interface L2
//! product).

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, lincomb, BandCholesky, SparseSpd, Vector};
use crate::mesh::{element_geometry, ElementGeometry, SubdomainGrid};
use crate::qp::lower_bound_qp;

/// Smoothing used by the p-Laplacian integrand when `p < 2`.
pub const PLAPLACIAN_SINGULAR_DELTA: f64 = 1e-10;
pub const PLAPLACIAN_INNER_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 200;
/// A Newton iteration that stalls within this factor of the tolerance is
/// taken as converged.
const STAGNATION_FACTOR: f64 = 1e3;

/// Stiffness of a subdomain whose metric Gram is not the stiffness itself.
#[derive(Debug, Clone)]
pub struct ShiftedMetric {
    pub stiffness: SparseSpd,
    pub metric: SparseSpd,
}

impl ShiftedMetric {
    /// `gamma K + G` and `gamma b + G v`.
    fn system(&self, load: &[f64], v: &[f64], gamma: f64) -> Result<(SparseSpd, Vector)> {
        let a = self.metric.add_scaled(gamma, &self.stiffness)?;
        let gv = self.metric.mul(v);
        Ok((a, lincomb(&[(gamma, load), (1.0, &gv)])))
    }
}

/// `1/2 u'Ku - b'u`: the Dirichlet energy with load `b`. When the metric
/// is the stiffness this is `1/2 ||u||^2 - <Q_i(f), u>`.
#[derive(Debug, Clone)]
pub struct QuadraticEnergy {
    pub load: Vector,
    /// `Q_i(f, 0, ..., 0)`, i.e. the metric Gram solved against `load`.
    pub load_lift: Vector,
    /// Set on floating subdomains.
    pub shifted: Option<ShiftedMetric>,
}

impl QuadraticEnergy {
    /// Builds the energy for `grid` given its metric Gram.
    pub fn assemble(grid: &SubdomainGrid, metric: &SparseSpd, load: Vector) -> Result<Self> {
        check_dim(metric.dim(), load.len())?;
        let load_lift = BandCholesky::factor(metric)?.solve(&load)?;
        let shifted = if grid.floating {
            Some(ShiftedMetric {
                stiffness: crate::mesh::assemble_stiffness(grid)?,
                metric: metric.clone(),
            })
        } else {
            None
        };
        Ok(QuadraticEnergy {
            load,
            load_lift,
            shifted,
        })
    }

    pub fn prox(&self, v: &[f64], gamma: f64) -> Result<Vector> {
        check_dim(self.load_lift.len(), v.len())?;
        match &self.shifted {
            None => {
                let a = 1.0 / (1.0 + gamma);
                Ok(lincomb(&[(a, v), (gamma * a, &self.load_lift)]))
            }
            Some(s) => {
                let (a, rhs) = s.system(&self.load, v, gamma)?;
                BandCholesky::factor(&a)?.solve(&rhs)
            }
        }
    }
}

/// Quadratic energy restricted to `{w >= obstacle}`.
#[derive(Debug, Clone)]
pub struct ObstacleEnergy {
    pub quadratic: QuadraticEnergy,
    pub obstacle: Vector,
    pub gram: SparseSpd,
}

impl ObstacleEnergy {
    /// Energy-norm projection onto `{w >= obstacle}`.
    pub fn project(&self, z: &[f64]) -> Result<Vector> {
        check_dim(self.obstacle.len(), z.len())?;
        if z.iter().zip(&self.obstacle).all(|(z, h)| z >= h) {
            return Ok(z.to_vec());
        }
        let c = self.gram.mul(z);
        Ok(lower_bound_qp(&self.gram, &c, &self.obstacle, z)?.x)
    }

    pub fn prox(&self, v: &[f64], gamma: f64) -> Result<Vector> {
        let free = self.quadratic.prox(v, gamma)?;
        match &self.quadratic.shifted {
            None => self.project(&free),
            Some(s) => {
                let (a, c) = s.system(&self.quadratic.load, v, gamma)?;
                let start: Vector = free.iter().zip(&self.obstacle).map(|(x, h)| x.max(*h)).collect();
                Ok(lower_bound_qp(&a, &c, &self.obstacle, &start)?.x)
            }
        }
    }
}

/// `sum_e |e| ((|Dw|^2 + delta)^{p/2} - delta^{p/2}) / p - <b, w>`.
#[derive(Debug, Clone)]
pub struct PLaplacianEnergy {
    pub p: f64,
    pub delta: f64,
    pub load: Vector,
    pub gram: SparseSpd,
    /// Per element: dof index of each vertex (if free) and the geometry.
    elements: Vec<([Option<usize>; 3], usize, ElementGeometry)>,
    pub inner_tol: f64,
}

impl PLaplacianEnergy {
    pub fn new(grid: &SubdomainGrid, p: f64, load: Vector, gram: SparseSpd) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Parameter(format!("p-Laplacian exponent must exceed 1, got {p}")));
        }
        check_dim(grid.n_dofs(), load.len())?;
        let elements = grid
            .elements
            .iter()
            .map(|e| {
                let geo = element_geometry(&grid.coords, e)?;
                let mut dofs = [None; 3];
                for (k, &n) in e.nodes().iter().enumerate() {
                    dofs[k] = grid.dof(n);
                }
                Ok((dofs, e.nodes().len(), geo))
            })
            .collect::<Result<_>>()?;
        Ok(PLaplacianEnergy {
            p,
            delta: if p < 2.0 { PLAPLACIAN_SINGULAR_DELTA } else { 0.0 },
            load,
            gram,
            elements,
            inner_tol: PLAPLACIAN_INNER_TOL,
        })
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn dim(&self) -> usize {
        self.load.len()
    }

    fn element_gradient(&self, w: &[f64], dofs: &[Option<usize>; 3], n: usize, geo: &ElementGeometry) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..n {
            if let Some(d) = dofs[k] {
                g[0] += w[d] * geo.grads[k][0];
                g[1] += w[d] * geo.grads[k][1];
            }
        }
        g
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let p = self.p;
        let base = self.delta.powf(p / 2.0);
        let mut e = 0.0;
        for (dofs, n, geo) in &self.elements {
            let g = self.element_gradient(w, dofs, *n, geo);
            let s = g[0] * g[0] + g[1] * g[1] + self.delta;
            e += geo.measure * (s.powf(p / 2.0) - base) / p;
        }
        e - dot(&self.load, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vector {
        let p = self.p;
        let mut out: Vector = self.load.iter().map(|b| -b).collect();
        for (dofs, n, geo) in &self.elements {
            let g = self.element_gradient(w, dofs, *n, geo);
            let s = g[0] * g[0] + g[1] * g[1] + self.delta;
            if s == 0.0 {
                continue;
            }
            let a = geo.measure * s.powf((p - 2.0) / 2.0);
            for k in 0..*n {
                if let Some(d) = dofs[k] {
                    out[d] += a * (g[0] * geo.grads[k][0] + g[1] * geo.grads[k][1]);
                }
            }
        }
        out
    }

    pub fn hessian(&self, w: &[f64]) -> Result<SparseSpd> {
        let p = self.p;
        let mut t = Vec::with_capacity(self.elements.len() * 9);
        for (dofs, n, geo) in &self.elements {
            let g = self.element_gradient(w, dofs, *n, geo);
            let s = g[0] * g[0] + g[1] * g[1] + self.delta;
            if s == 0.0 {
                // the integrand is flat here for p > 2
                if p < 2.0 {
                    return Err(Error::NonFinite("p-Laplacian Hessian at a zero gradient"));
                }
                if p > 2.0 {
                    continue;
                }
            }
            let a = geo.measure * if s == 0.0 { 1.0 } else { s.powf((p - 2.0) / 2.0) };
            let b = if s == 0.0 {
                0.0
            } else {
                geo.measure * (p - 2.0) * s.powf((p - 4.0) / 2.0)
            };
            for ka in 0..*n {
                let Some(da) = dofs[ka] else { continue };
                let ga = geo.grads[ka];
                let gda = ga[0] * g[0] + ga[1] * g[1];
                for kb in 0..*n {
                    let Some(db) = dofs[kb] else { continue };
                    let gb = geo.grads[kb];
                    let gdb = gb[0] * g[0] + gb[1] * g[1];
                    t.push((da, db, a * (ga[0] * gb[0] + ga[1] * gb[1]) + b * gda * gdb));
                }
            }
        }
        SparseSpd::from_triplets(self.dim(), &t)
    }

    /// `argmin_w gamma E(w) + 1/2 ||w - v||_G^2` by damped Newton, started
    /// from `start`.
    pub fn prox_from(&self, v: &[f64], gamma: f64, start: &[f64]) -> Result<Vector> {
        check_dim(self.dim(), v.len())?;
        check_dim(self.dim(), start.len())?;
        let objective = |w: &[f64]| {
            let d: Vector = w.iter().zip(v).map(|(a, b)| a - b).collect();
            gamma * self.value(w) + 0.5 * self.gram.bilinear(&d, &d)
        };
        let grad = |w: &[f64]| {
            let d: Vector = w.iter().zip(v).map(|(a, b)| a - b).collect();
            let gd = self.gram.mul(&d);
            let ge = self.gradient(w);
            ge.iter().zip(&gd).map(|(e, k)| gamma * e + k).collect::<Vector>()
        };
        // relative to the size of the terms that make up the gradient
        let tol = self.inner_tol * (1.0 + norm2(&self.gram.mul(v)) + gamma * norm2(&self.load));
        let mut w = start.to_vec();
        let mut f = objective(&w);
        let mut g = grad(&w);
        let mut gnorm = norm2(&g);
        for _ in 0..NEWTON_MAX_ITERS {
            if gnorm <= tol {
                return Ok(w);
            }
            let h = self.gram.add_scaled(gamma, &self.hessian(&w)?)?;
            let step: Vector = BandCholesky::factor(&h)?
                .solve(&g)?
                .into_iter()
                .map(|x| -x)
                .collect();
            let slope = dot(&g, &step);
            let previous = gnorm;
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let trial: Vector = w.iter().zip(&step).map(|(w, s)| w + t * s).collect();
                let ft = objective(&trial);
                let gt = grad(&trial);
                let gtn = norm2(&gt);
                // near the minimizer F stops resolving; accept on gradient decrease
                if ft <= f + 1e-4 * t * slope || (t == 1.0 && gtn < gnorm) {
                    w = trial;
                    f = ft;
                    g = gt;
                    gnorm = gtn;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            // gradient at its roundoff floor
            if gnorm <= STAGNATION_FACTOR * tol && gnorm > 0.9 * previous {
                return Ok(w);
            }
        }
        if gnorm <= tol {
            return Ok(w);
        }
        // gradient descent in the G metric as a last resort
        self.gradient_fallback(v, gamma, w, tol)
    }

    fn gradient_fallback(&self, v: &[f64], gamma: f64, mut w: Vector, tol: f64) -> Result<Vector> {
        let chol = BandCholesky::factor(&self.gram)?;
        let objective = |w: &[f64]| {
            let d: Vector = w.iter().zip(v).map(|(a, b)| a - b).collect();
            gamma * self.value(w) + 0.5 * self.gram.bilinear(&d, &d)
        };
        let mut gnorm = f64::INFINITY;
        for _ in 0..10_000 {
            let d: Vector = w.iter().zip(v).map(|(a, b)| a - b).collect();
            let gd = self.gram.mul(&d);
            let g: Vector = self
                .gradient(&w)
                .iter()
                .zip(&gd)
                .map(|(e, k)| gamma * e + k)
                .collect();
            gnorm = norm2(&g);
            if gnorm <= tol {
                return Ok(w);
            }
            let dir = chol.solve(&g)?;
            let f = objective(&w);
            let slope = dot(&g, &dir);
            let mut t = 1.0;
            loop {
                let trial: Vector = w.iter().zip(&dir).map(|(w, s)| w - t * s).collect();
                if objective(&trial) <= f - 1e-4 * t * slope || t < 1e-16 {
                    w = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        Err(Error::InnerNonConvergence {
            iterations: NEWTON_MAX_ITERS,
            gradient_norm: gnorm,
        })
    }

    pub fn prox(&self, v: &[f64], gamma: f64) -> Result<Vector> {
        // the p = 2 prox is a good starting point for any p
        let chol = BandCholesky::factor(&self.gram)?;
        let lift = chol.solve(&self.load)?;
        let a = 1.0 / (1.0 + gamma);
        let start = lincomb(&[(a, v), (gamma * a, &lift)]);
        self.prox_from(v, gamma, &start)
    }
}

/// Energy `phi_i` of one subdomain.
#[derive(Debug, Clone)]
pub enum SubdomainEnergy {
    Quadratic(QuadraticEnergy),
    Obstacle(ObstacleEnergy),
    PLaplacian(Box<PLaplacianEnergy>),
}

impl SubdomainEnergy {
    /// `prox_{gamma phi_i}` in the energy scalar product.
    pub fn prox(&self, v: &[f64], gamma: f64) -> Result<Vector> {
        if !(gamma > 0.0) {
            return Err(Error::Parameter(format!("prox step must be positive, got {gamma}")));
        }
        match self {
            SubdomainEnergy::Quadratic(q) => q.prox(v, gamma),
            SubdomainEnergy::Obstacle(o) => o.prox(v, gamma),
            SubdomainEnergy::PLaplacian(p) => p.prox(v, gamma),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SubdomainEnergy::Quadratic(q) => q.load.len(),
            SubdomainEnergy::Obstacle(o) => o.obstacle.len(),
            SubdomainEnergy::PLaplacian(p) => p.dim(),
        }
    }
}

/// Interface coupling `psi_ij`, acting on the jump `T_ij u_i - T_ji u_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// `iota_{0}`: continuity.
    Equality,
    /// Indicator of the nonnegative cone.
    ConePlus,
    /// Indicator of the nonpositive cone.
    ConeMinus,
    /// Nonnegative cone plus `permeability/2 |w|^2`.
    MembranePlus { permeability: f64 },
    /// Nonpositive cone plus `permeability/2 |w|^2`.
    MembraneMinus { permeability: f64 },
    /// `permeability/2 |w|^2`.
    Quadratic { permeability: f64 },
}

impl Coupling {
    pub fn validate(&self) -> Result<()> {
        match self {
            Coupling::MembranePlus { permeability }
            | Coupling::MembraneMinus { permeability }
            | Coupling::Quadratic { permeability } => {
                if *permeability > 0.0 && permeability.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "permeability must be positive, got {permeability}"
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    /// `prox_{mu psi}` applied nodally; exact because the interface Gram is
    /// diagonal.
    pub fn prox(&self, x: &[f64], mu: f64) -> Vector {
        let shrink = |perm: f64| 1.0 / (1.0 + mu * perm);
        match *self {
            Coupling::Equality => vec![0.0; x.len()],
            Coupling::ConePlus => x.iter().map(|v| v.max(0.0)).collect(),
            Coupling::ConeMinus => x.iter().map(|v| v.min(0.0)).collect(),
            Coupling::MembranePlus { permeability } => {
                let s = shrink(permeability);
                x.iter().map(|v| v.max(0.0) * s).collect()
            }
            Coupling::MembraneMinus { permeability } => {
                let s = shrink(permeability);
                x.iter().map(|v| v.min(0.0) * s).collect()
            }
            Coupling::Quadratic { permeability } => {
                let s = shrink(permeability);
                x.iter().map(|v| v * s).collect()
            }
        }
    }

    /// Pointwise value of `psi` (infinite outside the domain).
    pub fn value_at(&self, w: f64) -> f64 {
        let cone = |ok: bool| if ok { 0.0 } else { f64::INFINITY };
        match *self {
            Coupling::Equality => cone(w == 0.0),
            Coupling::ConePlus => cone(w >= 0.0),
            Coupling::ConeMinus => cone(w <= 0.0),
            Coupling::MembranePlus { permeability } => cone(w >= 0.0) + 0.5 * permeability * w * w,
            Coupling::MembraneMinus { permeability } => cone(w <= 0.0) + 0.5 * permeability * w * w,
            Coupling::Quadratic { permeability } => 0.5 * permeability * w * w,
        }
    }
}

pub fn prox_interface(coupling: &Coupling, x: &[f64], mu: f64) -> Result<Vector> {
    if !(mu > 0.0) {
        return Err(Error::Parameter(format!("prox step must be positive, got {mu}")));
    }
    Ok(coupling.prox(x, mu))
}
