//! Discrete mixed Dirichlet-Neumann solves on a subdomain.
//!
//! `Q_i(f, h)` solves `K u = b_f + sum_{J(i+)} T^T M h - sum_{J(i-)} T^T M h`
//! with `K` the subdomain's energy Gram, so that `Q_i(0, g)` is exactly the
//! energy-product adjoint of the signed trace operators.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{BandCholesky, InnerProductSpace, SparseSpd, Vector};
use crate::mesh::{energy_gram, Partition, TraceMap};

#[derive(Debug, Clone)]
struct Incident {
    interface: usize,
    /// `+1` when this subdomain is the left side of the interface.
    sign: f64,
    trace: TraceMap,
    weights: Vec<f64>,
}

/// Cached solver for `Q_i`. Immutable once built.
#[derive(Debug, Clone)]
pub struct HarmonicLift {
    pub index: usize,
    space: InnerProductSpace,
    factor: BandCholesky,
    incident: Vec<Incident>,
}

impl HarmonicLift {
    pub fn new(partition: &Partition, i: usize) -> Result<Self> {
        let gram = energy_gram(&partition.subdomains[i])?;
        Self::with_gram(partition, i, gram)
    }

    pub fn with_gram(partition: &Partition, i: usize, gram: SparseSpd) -> Result<Self> {
        check_dim(partition.subdomains[i].n_dofs(), gram.dim())?;
        let factor = BandCholesky::factor(&gram)?;
        let incident = partition
            .incident(i)
            .into_iter()
            .map(|(k, sign)| {
                let f = &partition.interfaces[k];
                Incident {
                    interface: k,
                    sign,
                    trace: f.trace_of(i).clone(),
                    weights: f.weights.clone(),
                }
            })
            .collect();
        Ok(HarmonicLift {
            index: i,
            space: InnerProductSpace::new(gram),
            factor,
            incident,
        })
    }

    /// One lift per subdomain of `partition`.
    pub fn build_all(partition: &Partition) -> Result<Vec<HarmonicLift>> {
        (0..partition.m())
            .map(|i| HarmonicLift::new(partition, i))
            .collect()
    }

    pub fn space(&self) -> &InnerProductSpace {
        &self.space
    }

    pub fn gram(&self) -> &SparseSpd {
        self.space.gram()
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Solves with the cached factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vector> {
        let x = self.factor.solve(rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("subdomain solve"));
        }
        Ok(x)
    }

    /// `sum_k sign_k T_k^T M_k g_k`, reading `duals` in interface order.
    pub fn neumann_rhs(&self, duals: &[Vector], alpha: f64, out: &mut [f64]) {
        for inc in &self.incident {
            let g = &duals[inc.interface];
            let mg: Vector = g.iter().zip(&inc.weights).map(|(g, w)| g * w).collect();
            inc.trace.apply_transpose_into(alpha * inc.sign, &mg, out);
        }
    }

    /// `Q_i(f, (h_j)_{J(i+)}, (h_j)_{J(i-)})` where `f_load` is the assembled
    /// load vector and the Neumann data are listed in the order of
    /// `Partition::j_plus(i)` and `Partition::j_minus(i)`.
    pub fn q_lift(
        &self,
        f_load: &[f64],
        neumann_plus: &[&[f64]],
        neumann_minus: &[&[f64]],
    ) -> Result<Vector> {
        check_dim(self.dim(), f_load.len())?;
        let plus: Vec<&Incident> = self.incident.iter().filter(|c| c.sign > 0.0).collect();
        let minus: Vec<&Incident> = self.incident.iter().filter(|c| c.sign < 0.0).collect();
        check_dim(plus.len(), neumann_plus.len())?;
        check_dim(minus.len(), neumann_minus.len())?;
        let mut rhs = f_load.to_vec();
        for (inc, h) in plus.iter().chain(&minus).zip(neumann_plus.iter().chain(neumann_minus)) {
            check_dim(inc.weights.len(), h.len())?;
            let mh: Vector = h.iter().zip(&inc.weights).map(|(h, w)| h * w).collect();
            inc.trace.apply_transpose_into(inc.sign, &mh, &mut rhs);
        }
        self.solve(&rhs)
    }

    /// `Q_i(0, (g_ij)_{J(i+)}, (g_ji)_{J(i-)}) = sum_k Lambda_ki^* g_k`,
    /// scaled by `alpha`.
    pub fn adjoint(&self, duals: &[Vector], alpha: f64) -> Result<Vector> {
        let mut rhs = vec![0.0; self.dim()];
        self.neumann_rhs(duals, alpha, &mut rhs);
        self.solve(&rhs)
    }

    /// Signed traces `sign_k T_k u` for the incident interfaces.
    pub fn interfaces(&self) -> impl Iterator<Item = (usize, f64, &TraceMap)> {
        self.incident.iter().map(|c| (c.interface, c.sign, &c.trace))
    }
}

/// `Lambda^* g` for every subdomain.
pub fn adjoint_sum(lifts: &[HarmonicLift], duals: &[Vector]) -> Result<Vec<Vector>> {
    lifts.iter().map(|l| l.adjoint(duals, 1.0)).collect()
}

/// `Lambda u`: the jumps `T_ij u_i - T_ji u_j` in interface order.
pub fn trace_jumps(partition: &Partition, primal: &[Vector]) -> Vec<Vector> {
    partition
        .interfaces
        .iter()
        .map(|f| {
            let a = f.trace_left.apply(&primal[f.left]);
            let b = f.trace_right.apply(&primal[f.right]);
            a.iter().zip(&b).map(|(a, b)| a - b).collect()
        })
        .collect()
}
