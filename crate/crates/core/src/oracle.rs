//! Reference solvers: monolithic solves on the undecomposed grid, the exact
//! projection onto two half-spaces, and Kuhn-Tucker points of decomposed
//! problems.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, BandCholesky, SparseSpd, Vector};
use crate::mesh::{assemble_load, assemble_stiffness, element_geometry, localize, Partition, SubdomainGrid};
use crate::prox::Coupling;
use crate::qp::lower_bound_qp;
use crate::splitting::PrimalDualPoint;

pub const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 500;
const CONTINUATION_STEP: f64 = 0.05;

fn check_global(grid: &SubdomainGrid, f: &[f64]) -> Result<()> {
    check_dim(grid.n_nodes(), f.len())?;
    if grid.floating {
        return Err(Error::Geometry("monolithic grid needs a Dirichlet boundary".into()));
    }
    Ok(())
}

/// Nodal solution of the global Dirichlet problem `-Δu = f`.
pub fn monolithic_poisson(global: &SubdomainGrid, f_nodal: &[f64]) -> Result<Vector> {
    check_global(global, f_nodal)?;
    let k = assemble_stiffness(global)?;
    let b = assemble_load(global, f_nodal)?;
    Ok(global.expand(&BandCholesky::factor(&k)?.solve(&b)?))
}

/// Nodal solution of the global obstacle problem `u >= h`.
pub fn monolithic_obstacle(global: &SubdomainGrid, f_nodal: &[f64], h_nodal: &[f64]) -> Result<Vector> {
    check_global(global, f_nodal)?;
    check_dim(global.n_nodes(), h_nodal.len())?;
    let k = assemble_stiffness(global)?;
    let b = assemble_load(global, f_nodal)?;
    let h = global.restrict(h_nodal);
    let start: Vector = h.iter().map(|h| h.max(0.0)).collect();
    Ok(global.expand(&lower_bound_qp(&k, &b, &h, &start)?.x))
}

/// Nodal minimizer of `sum_e |e| (|Du|^2 + delta)^{p/2} / p - int f u` by
/// damped Newton, continued in the exponent from the Poisson solution.
pub fn monolithic_plaplacian(global: &SubdomainGrid, f_nodal: &[f64], p: f64, delta: f64) -> Result<Vector> {
    check_global(global, f_nodal)?;
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
    }
    let k = assemble_stiffness(global)?;
    let b = assemble_load(global, f_nodal)?;
    let mut w = BandCholesky::factor(&k)?.solve(&b)?;
    let steps = ((p - 2.0).abs() / CONTINUATION_STEP).ceil() as usize;
    for s in 1..=steps {
        let ps = 2.0 + (p - 2.0) * s as f64 / steps as f64;
        w = plaplacian_newton(global, &b, ps, delta, w)?;
    }
    Ok(global.expand(&w))
}

fn plaplacian_newton(global: &SubdomainGrid, b: &[f64], p: f64, delta: f64, start: Vector) -> Result<Vector> {
    let n = global.n_dofs();
    let mut elems = Vec::with_capacity(global.elements.len());
    for e in &global.elements {
        let geo = element_geometry(&global.coords, e)?;
        let dofs: Vec<(usize, [f64; 2])> = e
            .nodes()
            .iter()
            .zip(&geo.grads)
            .filter_map(|(&node, g)| global.dof(node).map(|d| (d, *g)))
            .collect();
        elems.push((geo.measure, dofs));
    }
    let grad_of = |w: &[f64], dofs: &[(usize, [f64; 2])]| {
        dofs.iter()
            .fold([0.0; 2], |acc, (d, g)| [acc[0] + w[*d] * g[0], acc[1] + w[*d] * g[1]])
    };
    let functional = |w: &[f64]| {
        elems
            .iter()
            .map(|(meas, dofs)| {
                let g = grad_of(w, dofs);
                meas * (g[0] * g[0] + g[1] * g[1] + delta).powf(p / 2.0) / p
            })
            .sum::<f64>()
            - dot(b, w)
    };
    let gradient = |w: &[f64]| {
        let mut r: Vector = b.iter().map(|x| -x).collect();
        for (meas, dofs) in &elems {
            let g = grad_of(w, dofs);
            let s = g[0] * g[0] + g[1] * g[1] + delta;
            if s > 0.0 {
                let a = meas * s.powf(p / 2.0 - 1.0);
                for (d, gd) in dofs {
                    r[*d] += a * (g[0] * gd[0] + g[1] * gd[1]);
                }
            }
        }
        r
    };

    let k = assemble_stiffness(global)?;
    let mut w = start;
    let tol = NEWTON_TOL * (1.0 + norm2(b));
    let mut r = gradient(&w);
    let mut fw = functional(&w);
    for _ in 0..NEWTON_MAX_ITERS {
        let rn = norm2(&r);
        if rn <= tol {
            return Ok(w);
        }
        let mut trip = Vec::new();
        for (meas, dofs) in &elems {
            let g = grad_of(&w, dofs);
            let s = g[0] * g[0] + g[1] * g[1] + delta;
            let (a, c) = if s > 0.0 {
                (meas * s.powf(p / 2.0 - 1.0), meas * (p - 2.0) * s.powf(p / 2.0 - 2.0))
            } else {
                (if p == 2.0 { *meas } else { 0.0 }, 0.0)
            };
            for (da, ga) in dofs {
                for (db, gb) in dofs {
                    let ga_g = ga[0] * g[0] + ga[1] * g[1];
                    let gb_g = gb[0] * g[0] + gb[1] * g[1];
                    trip.push((*da, *db, a * (ga[0] * gb[0] + ga[1] * gb[1]) + c * ga_g * gb_g));
                }
            }
        }
        // a tiny shift keeps the Hessian definite where the gradient vanishes
        for d in 0..n {
            trip.push((d, d, 1e-14 * k.get(d, d)));
        }
        let hess = SparseSpd::from_triplets(n, &trip)?;
        let step = BandCholesky::factor(&hess)?.solve(&r)?;
        let slope = -dot(&r, &step);
        let mut t = 1.0;
        loop {
            let trial: Vector = w.iter().zip(&step).map(|(w, s)| w - t * s).collect();
            let ft = functional(&trial);
            let rt = gradient(&trial);
            if ft <= fw + 1e-4 * t * slope || (t == 1.0 && norm2(&rt) < rn) || t < 1e-12 {
                w = trial;
                fw = ft;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::InnerNonConvergence {
        iterations: NEWTON_MAX_ITERS,
        gradient_norm: norm2(&r),
    })
}

/// Half-space `{x : <x - anchor, normal> <= 0}`; a zero normal is the
/// whole space.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub anchor: Vector,
    pub normal: Vector,
}

impl HalfSpace {
    fn offset(&self) -> f64 {
        dot(&self.anchor, &self.normal)
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        dot(x, &self.normal) - self.offset()
    }
}

/// Euclidean projection of `x0` onto `a ∩ b` by trying the four active sets
/// and keeping the one that passes the KKT checks.
pub fn qp_project_two_halfspaces(x0: &[f64], a: &HalfSpace, b: &HalfSpace) -> Result<Vector> {
    check_dim(x0.len(), a.normal.len())?;
    check_dim(x0.len(), b.normal.len())?;
    let scale = 1.0 + norm2(x0) + norm2(&a.anchor) + norm2(&b.anchor);
    let feas = 1e-10 * scale;
    let (na, nb) = (&a.normal, &b.normal);
    let (aa, bb, ab) = (dot(na, na), dot(nb, nb), dot(na, nb));
    let (ra, rb) = (a.violation(x0), b.violation(x0));
    let point = |la: f64, lb: f64| -> Vector {
        x0.iter()
            .zip(na.iter().zip(nb))
            .map(|(x, (p, q))| x - la * p - lb * q)
            .collect()
    };
    let mut candidates: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    if aa > 0.0 {
        candidates.push((ra / aa, 0.0));
    }
    if bb > 0.0 {
        candidates.push((0.0, rb / bb));
    }
    let det = aa * bb - ab * ab;
    if aa > 0.0 && bb > 0.0 && det > 1e-14 * aa * bb {
        candidates.push(((ra * bb - rb * ab) / det, (rb * aa - ra * ab) / det));
    }
    let mut best: Option<(f64, Vector)> = None;
    for (la, lb) in candidates {
        if la < -feas || lb < -feas {
            continue;
        }
        let x = point(la, lb);
        if a.violation(&x) > feas || b.violation(&x) > feas {
            continue;
        }
        let d: f64 = x.iter().zip(x0).map(|(x, y)| (x - y) * (x - y)).sum();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::Infeasible("the two half-spaces do not intersect".into()))
}

/// Kuhn-Tucker point built from a global nodal solution: restrictions for
/// the primal part; duals from the left subdomain's stationarity residual
/// (its constraint multiplier taken as zero on the interface).
pub fn kt_point_from_global(partition: &Partition, global_nodal: &[f64], source: &[f64]) -> Result<PrimalDualPoint> {
    check_dim(partition.global.n_nodes(), source.len())?;
    kt_point_with(partition, global_nodal, |i, u| {
        let g = &partition.subdomains[i];
        let k = assemble_stiffness(g)?;
        let b = assemble_load(g, &localize(g, source))?;
        Ok(k.mul(u).iter().zip(&b).map(|(a, b)| a - b).collect())
    })
}

/// As [`kt_point_from_global`], with `residual(i, u_i)` the gradient of the
/// smooth part of the energy on subdomain `i`.
pub fn kt_point_with(
    partition: &Partition,
    global_nodal: &[f64],
    residual: impl Fn(usize, &[f64]) -> Result<Vector>,
) -> Result<PrimalDualPoint> {
    check_dim(partition.global.n_nodes(), global_nodal.len())?;
    let primal: Vec<Vector> = partition
        .subdomains
        .iter()
        .map(|g| g.restrict(&localize(g, global_nodal)))
        .collect();
    let dual = partition
        .interfaces
        .iter()
        .map(|f| {
            let res = residual(f.left, &primal[f.left])?;
            Ok(f.trace_left
                .rows()
                .iter()
                .zip(&f.weights)
                .map(|(row, w)| row.map_or(0.0, |d| -res[d] / w))
                .collect())
        })
        .collect::<Result<Vec<Vector>>>()?;
    Ok(PrimalDualPoint { primal, dual })
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let factor = a[r][c] / a[c][c];
            if factor != 0.0 {
                for k in c..n {
                    a[r][k] -= factor * a[c][k];
                }
                b[r] -= factor * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exact Kuhn-Tucker point of a 1D transmission problem with quadratic
/// subdomain energies, by enumerating which interfaces are closed (zero
/// jump) or open (dual given by the smooth part of the coupling).
pub fn transmission_kt_point_1d(partition: &Partition, source: &[f64], couplings: &[Coupling]) -> Result<PrimalDualPoint> {
    check_dim(partition.global.n_nodes(), source.len())?;
    check_dim(partition.interfaces.len(), couplings.len())?;
    if partition.global.dim != 1 {
        return Err(Error::Geometry("transmission oracle handles 1D partitions only".into()));
    }
    let nk = couplings.len();
    if nk > 16 {
        return Err(Error::Parameter("too many interfaces to enumerate".into()));
    }
    let offsets: Vec<usize> = partition
        .subdomains
        .iter()
        .scan(0, |acc, g| {
            let o = *acc;
            *acc += g.n_dofs();
            Some(o)
        })
        .collect();
    let n_primal: usize = partition.subdomains.iter().map(|g| g.n_dofs()).sum();
    let n = n_primal + nk;
    let mut base = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (i, g) in partition.subdomains.iter().enumerate() {
        let k = assemble_stiffness(g)?;
        let b = assemble_load(g, &localize(g, source))?;
        for r in 0..g.n_dofs() {
            for (c, v) in k.row(r) {
                base[offsets[i] + r][offsets[i] + c] = v;
            }
            rhs[offsets[i] + r] = b[r];
        }
    }
    // trace row of each interface on each side
    let sides: Vec<(usize, usize)> = partition
        .interfaces
        .iter()
        .map(|f| {
            let l = f.trace_left.rows()[0].ok_or_else(|| Error::Geometry("interface on Dirichlet node".into()))?;
            let r = f.trace_right.rows()[0].ok_or_else(|| Error::Geometry("interface on Dirichlet node".into()))?;
            Ok((offsets[f.left] + l, offsets[f.right] + r))
        })
        .collect::<Result<_>>()?;
    for (k, &(l, r)) in sides.iter().enumerate() {
        let w = partition.interfaces[k].weights[0];
        base[l][n_primal + k] += w;
        base[r][n_primal + k] -= w;
    }

    let slope = |c: &Coupling| match *c {
        Coupling::MembranePlus { permeability }
        | Coupling::MembraneMinus { permeability }
        | Coupling::Quadratic { permeability } => permeability,
        _ => 0.0,
    };
    let orientation = |c: &Coupling| match c {
        Coupling::ConePlus | Coupling::MembranePlus { .. } => 1.0,
        Coupling::ConeMinus | Coupling::MembraneMinus { .. } => -1.0,
        _ => 0.0,
    };
    let tol = 1e-10 * (1.0 + norm2(source));
    for mask in 0u32..(1 << nk) {
        let open = |k: usize| mask & (1 << k) != 0;
        if (0..nk).any(|k| open(k) && couplings[k] == Coupling::Equality) {
            continue;
        }
        if (0..nk).any(|k| !open(k) && matches!(couplings[k], Coupling::Quadratic { .. })) {
            continue;
        }
        let mut a = base.clone();
        for (k, &(l, r)) in sides.iter().enumerate() {
            let row = n_primal + k;
            // closed: jump = 0; open: g - slope * jump = 0
            if open(k) {
                let s = slope(&couplings[k]);
                a[row][n_primal + k] = 1.0;
                a[row][l] = -s;
                a[row][r] = s;
            } else {
                a[row][l] = 1.0;
                a[row][r] = -1.0;
            }
        }
        let mut b = rhs.clone();
        for row in b.iter_mut().skip(n_primal) {
            *row = 0.0;
        }
        let Some(x) = dense_solve(a, b) else { continue };
        let consistent = (0..nk).all(|k| {
            let (l, r) = sides[k];
            let jump = x[l] - x[r];
            let g = x[n_primal + k];
            let e = orientation(&couplings[k]);
            if open(k) {
                e == 0.0 || e * jump >= -tol
            } else {
                // dual in the normal cone at 0
                e == 0.0 || e * g <= tol
            }
        });
        if consistent {
            let primal = partition
                .subdomains
                .iter()
                .enumerate()
                .map(|(i, g)| x[offsets[i]..offsets[i] + g.n_dofs()].to_vec())
                .collect();
            let dual = (0..nk).map(|k| vec![x[n_primal + k]]).collect();
            return Ok(PrimalDualPoint { primal, dual });
        }
    }
    Err(Error::Infeasible("no consistent interface state".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_partition_1d, build_partition_2d_strips, StripResolution};

    fn global_1d(n_elems: usize) -> SubdomainGrid {
        build_partition_1d(1.0, &[], &[n_elems + 1], false).unwrap().global
    }

    #[test]
    fn poisson_1d_matches_analytic_solution() {
        let g = global_1d(128);
        let u = monolithic_poisson(&g, &vec![1.0; 129]).unwrap();
        for (k, c) in g.coords.iter().enumerate() {
            let x = c[0];
            assert!((u[k] - x * (1.0 - x) / 2.0).abs() < 1e-4);
        }
        let z = monolithic_poisson(&g, &vec![0.0; 129]).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn poisson_2d_centre_matches_series() {
        let part = build_partition_2d_strips(1.0, 1.0, &[], &[StripResolution { nx: 32, ny: 32 }]).unwrap();
        let n = part.global.n_nodes();
        let u = monolithic_poisson(&part.global, &vec![1.0; n]).unwrap();
        let centre = part
            .global
            .coords
            .iter()
            .position(|c| (c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12)
            .unwrap();
        // sum over odd m, n of 16 / (pi^4 m n (m^2 + n^2)) sin(m pi/2) sin(n pi/2)
        let mut series = 0.0;
        for m in (1..400).step_by(2) {
            for k in (1..400).step_by(2) {
                let s = if ((m + k) / 2) % 2 == 1 { 1.0 } else { -1.0 };
                let (m, k) = (m as f64, k as f64);
                series += s * 16.0 / (std::f64::consts::PI.powi(4) * m * k * (m * m + k * k));
            }
        }
        assert!((series - 0.07367).abs() < 1e-4, "series {series}");
        assert!((u[centre] - series).abs() < 2e-3, "{} vs {series}", u[centre]);
    }

    #[test]
    fn obstacle_cases() {
        let g = global_1d(64);
        let f = vec![-8.0; 65];
        let inactive = monolithic_obstacle(&g, &f, &vec![-1e6; 65]).unwrap();
        let free = monolithic_poisson(&g, &f).unwrap();
        for (a, b) in inactive.iter().zip(&free) {
            assert!((a - b).abs() < 1e-12);
        }
        let h = vec![-0.1; 65];
        let u = monolithic_obstacle(&g, &f, &h).unwrap();
        for k in 1..64 {
            assert!(u[k] >= -0.1 - 1e-12);
        }
        // contact set of -u'' = -8 with u >= -0.1: |x - 1/2| <= 1/2 - sqrt(0.1/4)
        let r = 0.5 - (0.1f64 / 4.0).sqrt();
        for (k, c) in g.coords.iter().enumerate() {
            if (c[0] - 0.5).abs() < r - 0.05 {
                assert!((u[k] + 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn obstacle_small_instance_matches_enumeration() {
        let g = global_1d(6);
        let f = vec![-8.0, -8.0, -8.0, 4.0, -8.0, -8.0, -8.0];
        let h = vec![-0.05, -0.05, -0.05, -0.05, -0.08, -0.05, -0.05];
        let u = monolithic_obstacle(&g, &f, &h).unwrap();
        let k = assemble_stiffness(&g).unwrap();
        let b = assemble_load(&g, &f).unwrap();
        let oracle = crate::qp::tests::enumerate(&k.to_dense(), &b, &g.restrict(&h));
        for (a, o) in g.restrict(&u).iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-12);
        }
    }

    #[test]
    fn plaplacian_cases() {
        let g = global_1d(256);
        let f = vec![1.0; 257];
        let two = monolithic_plaplacian(&g, &f, 2.0, 0.0).unwrap();
        let poisson = monolithic_poisson(&g, &f).unwrap();
        for (a, b) in two.iter().zip(&poisson) {
            assert!((a - b).abs() < 1e-10);
        }
        let three = monolithic_plaplacian(&g, &f, 3.0, 0.0).unwrap();
        let q: f64 = 1.5;
        assert!((three[128] - 0.5f64.powf(q) / q).abs() < 5e-3);
        for k in 0..257 {
            assert!((three[k] - three[256 - k]).abs() < 1e-10);
        }
        let sing = monolithic_plaplacian(&g, &f, 1.5, 1e-10).unwrap();
        // q = 3: u(1/2) = (1/2)^3 / 3
        assert!((sing[128] - 0.125 / 3.0).abs() < 5e-3);
    }

    fn hs(anchor: Vec<f64>, normal: Vec<f64>) -> HalfSpace {
        HalfSpace { anchor, normal }
    }

    #[test]
    fn two_halfspace_examples() {
        let a = hs(vec![1.0, 0.0], vec![-1.0, 0.0]); // x1 >= 1
        let b = hs(vec![1.0, -1.0], vec![0.0, 1.0]); // x2 <= -1
        let p = qp_project_two_halfspaces(&[0.0, 0.0], &a, &b).unwrap();
        assert_eq!(p, vec![1.0, -1.0]);
        let p = qp_project_two_halfspaces(&[2.0, -3.0], &a, &b).unwrap();
        assert_eq!(p, vec![2.0, -3.0]);
        let c = hs(vec![0.0, 0.0], vec![1.0, 0.0]); // x1 <= 0
        assert!(qp_project_two_halfspaces(&[0.5, 0.0], &a, &c).is_err());
    }

    #[test]
    fn kt_point_of_poisson_has_zero_residual() {
        use crate::problems::{build, ProblemKind, ProblemSpec};
        use crate::splitting::{kt_residual, AlgorithmParams};
        let part = build_partition_1d(1.0, &[0.35, 0.7], &[10, 10, 9], true).unwrap();
        let f = vec![1.0; part.global.n_nodes()];
        let u = monolithic_poisson(&part.global, &f).unwrap();
        let z = kt_point_from_global(&part, &u, &f).unwrap();
        let spec = ProblemSpec::new(part, ProblemKind::Poisson, f);
        let (o, _) = build(&spec).unwrap();
        assert!(kt_residual(&z, &o, &AlgorithmParams::default(), 0).unwrap() < 1e-12);
    }

    #[test]
    fn transmission_oracle_states() {
        use crate::problems::{build, ProblemKind, ProblemSpec};
        use crate::splitting::{kt_residual, AlgorithmParams};
        let part = build_partition_1d(1.0, &[0.3], &[13, 29], false).unwrap();
        let f = vec![1.0; part.global.n_nodes()];
        // unilateral: closed, dual -u'(0.3) = -0.2
        let z = transmission_kt_point_1d(&part, &f, &[Coupling::ConePlus]).unwrap();
        assert!((z.dual[0][0] + 0.2).abs() < 1e-12);
        let spec = ProblemSpec::new(part.clone(), ProblemKind::Unilateral { orientation: vec![1.0] }, f.clone());
        let (o, _) = build(&spec).unwrap();
        assert!(kt_residual(&z, &o, &AlgorithmParams::default(), 0).unwrap() < 1e-12);

        // membrane at 0.7: open with g = mu * jump
        let part = build_partition_1d(1.0, &[0.7], &[29, 13], false).unwrap();
        let c = Coupling::MembranePlus { permeability: 2.0 };
        let z = transmission_kt_point_1d(&part, &f, &[c]).unwrap();
        let jump = z.primal[0].last().unwrap() - z.primal[1][0];
        assert!(jump > 0.0);
        assert!((z.dual[0][0] - 2.0 * jump).abs() < 1e-12);
        let spec = ProblemSpec::new(
            part,
            ProblemKind::Membrane { orientation: vec![1.0], permeability: vec![2.0] },
            f,
        );
        let (o, _) = build(&spec).unwrap();
        assert!(kt_residual(&z, &o, &AlgorithmParams::default(), 0).unwrap() < 1e-12);
    }
}
