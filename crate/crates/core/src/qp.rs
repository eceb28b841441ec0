//! Lower-bound constrained SPD quadratic programs
//! `min 1/2 x^T A x - c^T x  s.t.  x >= lower`.
//!
//! Solved by the primal-dual active set method; projected gradient with
//! backtracking takes over if the active set does not settle.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, BandCholesky, SparseSpd, Vector};

pub const PDAS_MAX_SWEEPS: usize = 50;
const PG_MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone)]
pub struct BoundQpSolution {
    pub x: Vector,
    /// Multiplier `A x - c`; nonnegative, zero off the active set.
    pub multiplier: Vector,
    pub active: Vec<bool>,
    pub sweeps: usize,
}

fn objective(a: &SparseSpd, c: &[f64], x: &[f64]) -> f64 {
    0.5 * a.bilinear(x, x) - dot(c, x)
}

/// Solves the bound-constrained QP starting from `start`.
pub fn lower_bound_qp(
    a: &SparseSpd,
    c: &[f64],
    lower: &[f64],
    start: &[f64],
) -> Result<BoundQpSolution> {
    let n = a.dim();
    check_dim(n, c.len())?;
    check_dim(n, lower.len())?;
    check_dim(n, start.len())?;
    let diag = a.diag();
    let mut x = start.to_vec();
    let mut lambda = vec![0.0; n];
    let mut active: Vec<bool> = vec![false; n];
    let scale = 1.0 + norm2(c) + norm2(lower);

    for sweep in 0..PDAS_MAX_SWEEPS {
        let next: Vec<bool> = (0..n)
            .map(|i| lambda[i] + diag[i] * (lower[i] - x[i]) > 0.0)
            .collect();
        if sweep > 0 && next == active {
            return Ok(BoundQpSolution {
                x,
                multiplier: lambda,
                active,
                sweeps: sweep,
            });
        }
        active = next;
        let inactive: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        for i in 0..n {
            if active[i] {
                x[i] = lower[i];
            }
        }
        if !inactive.is_empty() {
            // A_II x_I = c_I - A_IA h_A
            let rhs: Vector = inactive
                .iter()
                .map(|&i| {
                    c[i] - a
                        .row(i)
                        .filter(|&(j, _)| active[j])
                        .map(|(j, v)| v * lower[j])
                        .sum::<f64>()
                })
                .collect();
            let sub = a.principal_submatrix(&inactive);
            let xi = BandCholesky::factor(&sub)?.solve(&rhs)?;
            for (&i, v) in inactive.iter().zip(xi) {
                x[i] = v;
            }
        }
        let ax = a.mul(&x);
        for i in 0..n {
            lambda[i] = if active[i] { ax[i] - c[i] } else { 0.0 };
        }
    }

    let feasible = (0..n).all(|i| x[i] >= lower[i] - 1e-12 * scale && lambda[i] >= -1e-12 * scale);
    if feasible {
        return Ok(BoundQpSolution {
            x,
            multiplier: lambda,
            active,
            sweeps: PDAS_MAX_SWEEPS,
        });
    }
    log::debug!("active set did not settle after {PDAS_MAX_SWEEPS} sweeps; projected gradient fallback");
    projected_gradient(a, c, lower, start)
}

fn projected_gradient(a: &SparseSpd, c: &[f64], lower: &[f64], start: &[f64]) -> Result<BoundQpSolution> {
    let n = a.dim();
    let mut x: Vector = start.iter().zip(lower).map(|(s, l)| s.max(*l)).collect();
    let mut step = 1.0 / a.diag().iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1e-300);
    let tol = 1e-12 * (1.0 + norm2(c));
    let mut f = objective(a, c, &x);
    for it in 0..PG_MAX_ITERS {
        let g: Vector = a.mul(&x).iter().zip(c).map(|(ax, c)| ax - c).collect();
        // projected gradient measure
        let pg: f64 = (0..n)
            .map(|i| {
                let moved = (x[i] - g[i]).max(lower[i]);
                (x[i] - moved).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if pg <= tol {
            let active: Vec<bool> = (0..n).map(|i| x[i] <= lower[i]).collect();
            let multiplier = (0..n).map(|i| if active[i] { g[i] } else { 0.0 }).collect();
            return Ok(BoundQpSolution {
                x,
                multiplier,
                active,
                sweeps: PDAS_MAX_SWEEPS + it,
            });
        }
        loop {
            let trial: Vector = (0..n).map(|i| (x[i] - step * g[i]).max(lower[i])).collect();
            let ft = objective(a, c, &trial);
            let d: Vector = trial.iter().zip(&x).map(|(t, x)| t - x).collect();
            if ft <= f + dot(&g, &d) + 0.5 / step * dot(&d, &d) || step < 1e-300 {
                x = trial;
                f = ft;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::InnerNonConvergence {
        iterations: PG_MAX_ITERS,
        gradient_norm: f64::NAN,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Exhaustive active-set enumeration: for each subset S, fix x_S = h_S,
    /// solve for the rest and keep the KKT-consistent candidate.
    pub(crate) fn enumerate(a: &[Vec<f64>], c: &[f64], h: &[f64]) -> Vec<f64> {
        let n = c.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << n) {
            let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            let mut x = h.to_vec();
            if !free.is_empty() {
                let m = nalgebra::DMatrix::from_fn(free.len(), free.len(), |r, s| a[free[r]][free[s]]);
                let rhs = nalgebra::DVector::from_fn(free.len(), |r, _| {
                    let i = free[r];
                    c[i] - (0..n).filter(|j| mask & (1 << j) != 0).map(|j| a[i][j] * h[j]).sum::<f64>()
                });
                let sol = m.lu().solve(&rhs).unwrap();
                for (r, &i) in free.iter().enumerate() {
                    x[i] = sol[r];
                }
            }
            if x.iter().zip(h).any(|(x, h)| *x < h - 1e-13) {
                continue;
            }
            let val: f64 = 0.5
                * (0..n).map(|i| x[i] * (0..n).map(|j| a[i][j] * x[j]).sum::<f64>()).sum::<f64>()
                - (0..n).map(|i| c[i] * x[i]).sum::<f64>();
            if best.as_ref().map_or(true, |(b, _)| val < *b) {
                best = Some((val, x));
            }
        }
        best.unwrap().1
    }

    fn laplacian_1d(n: usize) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 2.0;
            if i > 0 {
                a[i][i - 1] = -1.0;
                a[i - 1][i] = -1.0;
            }
        }
        a
    }

    #[test]
    fn matches_enumeration_on_small_instance() {
        let a = laplacian_1d(5);
        let c = [0.3, -1.2, 0.5, -0.9, 0.1];
        let h = [0.0, -0.4, 0.0, -0.2, -1.0];
        let sp = SparseSpd::from_dense(&a).unwrap();
        let sol = lower_bound_qp(&sp, &c, &h, &[0.0; 5]).unwrap();
        let oracle = enumerate(&a, &c, &h);
        for (x, y) in sol.x.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12);
        }
        for i in 0..5 {
            assert!(sol.multiplier[i] >= -1e-12);
            assert!((sol.multiplier[i] * (sol.x[i] - h[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn inactive_bound_returns_unconstrained_solution() {
        let a = laplacian_1d(4);
        let sp = SparseSpd::from_dense(&a).unwrap();
        let c = [1.0, 0.0, 0.0, 1.0];
        let sol = lower_bound_qp(&sp, &c, &[-1e6; 4], &[0.0; 4]).unwrap();
        for v in &sol.x {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(sol.active.iter().all(|a| !a));
    }

    #[test]
    fn projected_gradient_agrees() {
        let a = laplacian_1d(5);
        let sp = SparseSpd::from_dense(&a).unwrap();
        let c = [0.3, -1.2, 0.5, -0.9, 0.1];
        let h = [0.0; 5];
        let pg = projected_gradient(&sp, &c, &h, &[0.0; 5]).unwrap();
        let oracle = enumerate(&a, &c, &h);
        for (x, y) in pg.x.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
