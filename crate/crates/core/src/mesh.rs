//! Partitioned P1 meshes: subdomain grids, Dirichlet parts, interfaces,
//! energy Gram matrices, load vectors and trace maps.
//!
//! Meshes are built globally first and then split by element ownership, so
//! matching interfaces carry identical node coordinates on both sides.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{SparseSpd, Vector};

/// Mass weight added to the metric Gram of subdomains without Dirichlet
/// boundary.
pub const FLOATING_METRIC_MASS: f64 = 10.0;

pub type Point = [f64; 2];

/// A P1 simplex: a segment in 1D or a triangle in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Element {
    nodes: [usize; 3],
    len: usize,
}

impl Element {
    pub fn segment(a: usize, b: usize) -> Self {
        Element {
            nodes: [a, b, usize::MAX],
            len: 2,
        }
    }

    pub fn triangle(a: usize, b: usize, c: usize) -> Self {
        Element {
            nodes: [a, b, c],
            len: 3,
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes[..self.len]
    }

    fn relabel(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut e = *self;
        for n in e.nodes[..e.len].iter_mut() {
            *n = map(*n);
        }
        e
    }
}

/// Measure and constant shape-function gradients of one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub measure: f64,
    pub grads: [[f64; 2]; 3],
}

pub fn element_geometry(coords: &[Point], el: &Element) -> Result<ElementGeometry> {
    let n = el.nodes();
    match n.len() {
        2 => {
            let h = coords[n[1]][0] - coords[n[0]][0];
            if h.abs() <= f64::EPSILON * (1.0 + coords[n[0]][0].abs()) {
                return Err(Error::Geometry("degenerate segment of zero length".into()));
            }
            Ok(ElementGeometry {
                measure: h.abs(),
                grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
            })
        }
        _ => {
            let [x0, y0] = coords[n[0]];
            let [x1, y1] = coords[n[1]];
            let [x2, y2] = coords[n[2]];
            let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
            if det.abs() <= 1e-14 {
                return Err(Error::Geometry("degenerate triangle of zero area".into()));
            }
            Ok(ElementGeometry {
                measure: 0.5 * det.abs(),
                grads: [
                    [(y1 - y2) / det, (x2 - x1) / det],
                    [(y2 - y0) / det, (x0 - x2) / det],
                    [(y0 - y1) / det, (x1 - x0) / det],
                ],
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTag {
    Interior,
    /// On the outer boundary: homogeneous Dirichlet, no degree of freedom.
    Dirichlet,
    /// On interface `k` (index into [`Partition::interfaces`]).
    Interface(usize),
}

/// Mesh of one subdomain (or of the whole domain). Degrees of freedom are
/// the non-Dirichlet nodes in local node order.
#[derive(Debug, Clone)]
pub struct SubdomainGrid {
    pub index: usize,
    pub dim: usize,
    pub coords: Vec<Point>,
    pub global_ids: Vec<usize>,
    pub elements: Vec<Element>,
    pub tags: Vec<NodeTag>,
    pub floating: bool,
    dof_of_node: Vec<Option<usize>>,
    node_of_dof: Vec<usize>,
}

impl SubdomainGrid {
    fn new(
        index: usize,
        dim: usize,
        coords: Vec<Point>,
        global_ids: Vec<usize>,
        elements: Vec<Element>,
        tags: Vec<NodeTag>,
    ) -> Self {
        let mut dof_of_node = Vec::with_capacity(coords.len());
        let mut node_of_dof = Vec::new();
        for (k, tag) in tags.iter().enumerate() {
            if *tag == NodeTag::Dirichlet {
                dof_of_node.push(None);
            } else {
                dof_of_node.push(Some(node_of_dof.len()));
                node_of_dof.push(k);
            }
        }
        let floating = !tags.contains(&NodeTag::Dirichlet);
        SubdomainGrid {
            index,
            dim,
            coords,
            global_ids,
            elements,
            tags,
            floating,
            dof_of_node,
            node_of_dof,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub fn node_of_dof(&self, dof: usize) -> usize {
        self.node_of_dof[dof]
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> Vector {
        self.coords.iter().map(|&p| f(p)).collect()
    }

    /// Nodal values on all nodes (Dirichlet nodes get zero).
    pub fn expand(&self, dofs: &[f64]) -> Vector {
        (0..self.n_nodes())
            .map(|k| self.dof(k).map_or(0.0, |d| dofs[d]))
            .collect()
    }

    /// Restriction of nodal values to the degrees of freedom.
    pub fn restrict(&self, nodal: &[f64]) -> Vector {
        self.node_of_dof.iter().map(|&k| nodal[k]).collect()
    }

    pub fn geometries(&self) -> Result<Vec<ElementGeometry>> {
        self.elements
            .iter()
            .map(|e| element_geometry(&self.coords, e))
            .collect()
    }

    pub fn total_measure(&self) -> f64 {
        self.geometries()
            .map(|g| g.iter().map(|g| g.measure).sum())
            .unwrap_or(0.0)
    }
}

/// Nodal selection from subdomain dofs onto interface nodes.
/// Rows that hit a Dirichlet node select nothing (zero trace).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceMap {
    rows: Vec<Option<usize>>,
    n_dofs: usize,
}

impl TraceMap {
    pub fn new(rows: Vec<Option<usize>>, n_dofs: usize) -> Self {
        TraceMap { rows, n_dofs }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn rows(&self) -> &[Option<usize>] {
        &self.rows
    }

    pub fn apply(&self, u: &[f64]) -> Vector {
        self.rows.iter().map(|r| r.map_or(0.0, |d| u[d])).collect()
    }

    /// `out += alpha * T^T w`
    pub fn apply_transpose_into(&self, alpha: f64, w: &[f64], out: &mut [f64]) {
        for (r, wk) in self.rows.iter().zip(w) {
            if let Some(d) = r {
                out[*d] += alpha * wk;
            }
        }
    }

    /// Nodal extension: the dof vector whose trace is `w` and which is zero
    /// elsewhere.
    pub fn extend(&self, w: &[f64]) -> Vector {
        let mut out = vec![0.0; self.n_dofs];
        self.apply_transpose_into(1.0, w, &mut out);
        out
    }
}

pub fn trace_apply(map: &TraceMap, u: &[f64]) -> Result<Vector> {
    check_dim(map.n_dofs(), u.len())?;
    Ok(map.apply(u))
}

/// Shared boundary between subdomains `left < right`.
#[derive(Debug, Clone)]
pub struct Interface {
    pub left: usize,
    pub right: usize,
    /// Global node ids, ordered along the interface.
    pub nodes: Vec<usize>,
    pub coords: Vec<Point>,
    /// Diagonal of the trapezoid-rule L2 Gram (unit weight for a point).
    pub weights: Vec<f64>,
    pub trace_left: TraceMap,
    pub trace_right: TraceMap,
}

impl Interface {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mass_matrix(&self) -> SparseSpd {
        SparseSpd::diagonal(&self.weights)
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    pub fn trace_of(&self, side: usize) -> &TraceMap {
        if side == self.left {
            &self.trace_left
        } else {
            &self.trace_right
        }
    }
}

/// The decomposed domain. Interfaces are stored in `K` order, i.e.
/// lexicographically by `(left, right)`.
#[derive(Debug, Clone)]
pub struct Partition {
    pub global: SubdomainGrid,
    pub subdomains: Vec<SubdomainGrid>,
    pub interfaces: Vec<Interface>,
}

impl Partition {
    pub fn m(&self) -> usize {
        self.subdomains.len()
    }

    /// Index pairs `(i, j)`, `i < j`, in interface order.
    pub fn k_pairs(&self) -> Vec<(usize, usize)> {
        self.interfaces.iter().map(|f| (f.left, f.right)).collect()
    }

    pub fn j_plus(&self, i: usize) -> Vec<usize> {
        self.interfaces
            .iter()
            .filter(|f| f.left == i)
            .map(|f| f.right)
            .collect()
    }

    pub fn j_minus(&self, i: usize) -> Vec<usize> {
        self.interfaces
            .iter()
            .filter(|f| f.right == i)
            .map(|f| f.left)
            .collect()
    }

    /// Interfaces touching subdomain `i`, with sign `+1` when `i` is the
    /// left side (`j in J(i+)`) and `-1` otherwise.
    pub fn incident(&self, i: usize) -> Vec<(usize, f64)> {
        self.interfaces
            .iter()
            .enumerate()
            .filter_map(|(k, f)| {
                if f.left == i {
                    Some((k, 1.0))
                } else if f.right == i {
                    Some((k, -1.0))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn interface_index(&self, i: usize, j: usize) -> Option<usize> {
        self.interfaces
            .iter()
            .position(|f| f.left == i && f.right == j)
    }

    /// Splits a global mesh by element owner.
    pub fn from_global(
        global: SubdomainGrid,
        owner: &[usize],
        m: usize,
        allow_floating: bool,
    ) -> Result<Self> {
        check_dim(global.elements.len(), owner.len())?;
        let n_global = global.n_nodes();
        // local node lists per subdomain, in increasing global id
        let mut member = vec![vec![false; n_global]; m];
        for (e, &o) in global.elements.iter().zip(owner) {
            if o >= m {
                return Err(Error::Geometry(format!("element owner {o} out of range")));
            }
            for &n in e.nodes() {
                member[o][n] = true;
            }
        }
        let local_nodes: Vec<Vec<usize>> = member
            .iter()
            .map(|mk| (0..n_global).filter(|&n| mk[n]).collect())
            .collect();
        if let Some(i) = local_nodes.iter().position(|l| l.is_empty()) {
            return Err(Error::Geometry(format!("subdomain {} has no elements", i + 1)));
        }

        // interfaces: shared nodes of each pair
        let mut raw_interfaces = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let shared: Vec<usize> = (0..n_global)
                    .filter(|&n| member[i][n] && member[j][n])
                    .collect();
                // a single shared Dirichlet corner is not an interface
                if shared.iter().any(|&n| global.tags[n] != NodeTag::Dirichlet) {
                    raw_interfaces.push((i, j, shared));
                }
            }
        }

        let mut subdomains = Vec::with_capacity(m);
        for (i, nodes) in local_nodes.iter().enumerate() {
            let mut local_of = vec![usize::MAX; n_global];
            for (l, &g) in nodes.iter().enumerate() {
                local_of[g] = l;
            }
            let elements: Vec<Element> = global
                .elements
                .iter()
                .zip(owner)
                .filter(|(_, &o)| o == i)
                .map(|(e, _)| e.relabel(|g| local_of[g]))
                .collect();
            let mut tags: Vec<NodeTag> = nodes.iter().map(|&g| global.tags[g]).collect();
            for (k, (a, b, shared)) in raw_interfaces.iter().enumerate() {
                if *a == i || *b == i {
                    for &g in shared {
                        let l = local_of[g];
                        match tags[l] {
                            NodeTag::Dirichlet => {}
                            NodeTag::Interface(_) => {
                                return Err(Error::Geometry(format!(
                                    "node {g} belongs to more than one interface of subdomain {}",
                                    i + 1
                                )))
                            }
                            NodeTag::Interior => tags[l] = NodeTag::Interface(k),
                        }
                    }
                }
            }
            let coords = nodes.iter().map(|&g| global.coords[g]).collect();
            let grid = SubdomainGrid::new(i, global.dim, coords, nodes.clone(), elements, tags);
            if grid.floating && !allow_floating {
                return Err(Error::Geometry(format!(
                    "subdomain {} has no Dirichlet boundary part (set allow_floating to permit it)",
                    i + 1
                )));
            }
            subdomains.push(grid);
        }

        let mut interfaces = Vec::with_capacity(raw_interfaces.len());
        for (left, right, mut shared) in raw_interfaces {
            shared.sort_by(|&a, &b| {
                let (pa, pb) = (global.coords[a], global.coords[b]);
                pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1]))
            });
            let coords: Vec<Point> = shared.iter().map(|&g| global.coords[g]).collect();
            let weights = if coords.len() == 1 {
                vec![1.0]
            } else {
                trapezoid_weights(&coords)
            };
            let trace = |side: &SubdomainGrid| {
                let rows = shared
                    .iter()
                    .map(|&g| {
                        let l = side.global_ids.binary_search(&g).expect("shared node");
                        side.dof(l)
                    })
                    .collect();
                TraceMap::new(rows, side.n_dofs())
            };
            interfaces.push(Interface {
                left,
                right,
                trace_left: trace(&subdomains[left]),
                trace_right: trace(&subdomains[right]),
                nodes: shared,
                coords,
                weights,
            });
        }

        Ok(Partition {
            global,
            subdomains,
            interfaces,
        })
    }
}

fn trapezoid_weights(coords: &[Point]) -> Vec<f64> {
    let dist = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let n = coords.len();
    (0..n)
        .map(|k| {
            let before = if k > 0 { dist(coords[k - 1], coords[k]) } else { 0.0 };
            let after = if k + 1 < n { dist(coords[k], coords[k + 1]) } else { 0.0 };
            0.5 * (before + after)
        })
        .collect()
}

/// Element counts per subdomain for a 1D split with roughly uniform spacing.
pub fn elements_for_total(length: f64, cuts: &[f64], total: usize) -> Vec<usize> {
    let mut ends = vec![0.0];
    ends.extend_from_slice(cuts);
    ends.push(length);
    let raw: Vec<f64> = ends
        .windows(2)
        .map(|w| (w[1] - w[0]) / length * total as f64)
        .collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| (r.round() as usize).max(2)).collect();
    // absorb rounding drift in the largest subdomain
    let sum: usize = counts.iter().sum();
    if sum != total {
        let (imax, _) = counts.iter().enumerate().max_by_key(|(_, c)| **c).unwrap();
        let adjusted = counts[imax] as isize + total as isize - sum as isize;
        counts[imax] = adjusted.max(2) as usize;
    }
    counts
}

/// `(0, length)` cut at `cuts`; subdomain `k` gets `nodes_per_subdomain[k]`
/// equally spaced nodes, endpoints included.
pub fn build_partition_1d(
    length: f64,
    cuts: &[f64],
    nodes_per_subdomain: &[usize],
    allow_floating: bool,
) -> Result<Partition> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::Geometry(format!("length must be positive, got {length}")));
    }
    let m = cuts.len() + 1;
    if nodes_per_subdomain.len() != m {
        return Err(Error::Geometry(format!(
            "{} cuts need {} node counts, got {}",
            cuts.len(),
            m,
            nodes_per_subdomain.len()
        )));
    }
    let mut ends = vec![0.0];
    for &c in cuts {
        if !(c > *ends.last().unwrap() && c < length) {
            return Err(Error::Geometry(format!(
                "cuts must be strictly increasing inside (0, {length}), got {cuts:?}"
            )));
        }
        ends.push(c);
    }
    ends.push(length);
    if let Some(k) = nodes_per_subdomain.iter().position(|&n| n < 3) {
        return Err(Error::Geometry(format!(
            "subdomain {} needs at least 2 elements",
            k + 1
        )));
    }

    let mut coords: Vec<Point> = vec![[0.0, 0.0]];
    let mut elements = Vec::new();
    let mut owner = Vec::new();
    for (k, &n) in nodes_per_subdomain.iter().enumerate() {
        let (a, b) = (ends[k], ends[k + 1]);
        let ne = n - 1;
        for e in 1..=ne {
            let x = if e == ne {
                b
            } else {
                a + (b - a) * e as f64 / ne as f64
            };
            coords.push([x, 0.0]);
            let last = coords.len() - 1;
            elements.push(Element::segment(last - 1, last));
            owner.push(k);
        }
    }
    let n = coords.len();
    let tags = (0..n)
        .map(|k| {
            if k == 0 || k == n - 1 {
                NodeTag::Dirichlet
            } else {
                NodeTag::Interior
            }
        })
        .collect();
    let global = SubdomainGrid::new(0, 1, coords, (0..n).collect(), elements, tags);
    Partition::from_global(global, &owner, m, allow_floating)
}

/// Per-strip resolution in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StripResolution {
    pub nx: usize,
    pub ny: usize,
}

/// `(0, width) x (0, height)` cut by vertical lines `x = cuts[k]`. Each
/// rectangular cell is split into two triangles along its rising diagonal.
pub fn build_partition_2d_strips(
    width: f64,
    height: f64,
    cuts: &[f64],
    resolution: &[StripResolution],
) -> Result<Partition> {
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::Geometry("width and height must be positive".into()));
    }
    let m = cuts.len() + 1;
    if resolution.len() != m {
        return Err(Error::Geometry(format!(
            "{} strips need {} resolutions, got {}",
            m,
            m,
            resolution.len()
        )));
    }
    let ny = resolution[0].ny;
    if resolution.iter().any(|r| r.ny != ny) {
        return Err(Error::Geometry(
            "nonconforming resolution: all strips must share the vertical element count".into(),
        ));
    }
    if ny < 2 || resolution.iter().any(|r| r.nx < 1) {
        return Err(Error::Geometry("each strip needs nx >= 1 and ny >= 2".into()));
    }
    let mut ends = vec![0.0];
    for &c in cuts {
        if !(c > *ends.last().unwrap() && c < width) {
            return Err(Error::Geometry(format!(
                "cuts must be strictly increasing inside (0, {width}), got {cuts:?}"
            )));
        }
        ends.push(c);
    }
    ends.push(width);

    let mut xs = vec![0.0];
    let mut col_owner = Vec::new();
    for (k, r) in resolution.iter().enumerate() {
        let (a, b) = (ends[k], ends[k + 1]);
        for e in 1..=r.nx {
            xs.push(if e == r.nx {
                b
            } else {
                a + (b - a) * e as f64 / r.nx as f64
            });
            col_owner.push(k);
        }
    }
    let ncol = xs.len();
    let rows = ny + 1;
    let id = |c: usize, r: usize| c * rows + r;
    let mut coords = Vec::with_capacity(ncol * rows);
    let mut tags = Vec::with_capacity(ncol * rows);
    for (c, &x) in xs.iter().enumerate() {
        for r in 0..rows {
            let y = if r == ny {
                height
            } else {
                height * r as f64 / ny as f64
            };
            coords.push([x, y]);
            let boundary = c == 0 || c == ncol - 1 || r == 0 || r == ny;
            tags.push(if boundary {
                NodeTag::Dirichlet
            } else {
                NodeTag::Interior
            });
        }
    }
    let mut elements = Vec::new();
    let mut owner = Vec::new();
    for (c, &k) in col_owner.iter().enumerate() {
        for r in 0..ny {
            elements.push(Element::triangle(id(c, r), id(c + 1, r), id(c + 1, r + 1)));
            elements.push(Element::triangle(id(c, r), id(c + 1, r + 1), id(c, r + 1)));
            owner.push(k);
            owner.push(k);
        }
    }
    let n = coords.len();
    let global = SubdomainGrid::new(0, 2, coords, (0..n).collect(), elements, tags);
    Partition::from_global(global, &owner, m, false)
}

fn assemble_on_dofs(
    grid: &SubdomainGrid,
    local: impl Fn(&ElementGeometry, usize, usize) -> f64,
) -> Result<SparseSpd> {
    let mut t = Vec::with_capacity(grid.elements.len() * 9);
    for el in &grid.elements {
        let geo = element_geometry(&grid.coords, el)?;
        let nodes = el.nodes();
        for (a, &na) in nodes.iter().enumerate() {
            let Some(da) = grid.dof(na) else { continue };
            for (b, &nb) in nodes.iter().enumerate() {
                let Some(db) = grid.dof(nb) else { continue };
                t.push((da, db, local(&geo, a, b)));
            }
        }
    }
    SparseSpd::from_triplets(grid.n_dofs(), &t)
}

fn mass_entry(geo: &ElementGeometry, n: usize, a: usize, b: usize) -> f64 {
    // consistent P1 mass: segment h/6 [2 1; 1 2], triangle |T|/12 [2 1 1; ...]
    let denom = if n == 2 { 6.0 } else { 12.0 };
    geo.measure / denom * if a == b { 2.0 } else { 1.0 }
}

/// P1 stiffness on the free dofs: `K_ab = int grad phi_a . grad phi_b`.
pub fn assemble_stiffness(grid: &SubdomainGrid) -> Result<SparseSpd> {
    assemble_on_dofs(grid, |g, a, b| {
        g.measure * (g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1])
    })
}

/// Consistent P1 mass on the free dofs.
pub fn assemble_mass(grid: &SubdomainGrid) -> Result<SparseSpd> {
    let n = if grid.dim == 1 { 2 } else { 3 };
    assemble_on_dofs(grid, |g, a, b| mass_entry(g, n, a, b))
}

/// Gram matrix of the subdomain scalar product: the stiffness, plus
/// `FLOATING_METRIC_MASS * mass` on floating subdomains where the stiffness
/// alone is singular.
pub fn energy_gram(grid: &SubdomainGrid) -> Result<SparseSpd> {
    metric_gram(grid, FLOATING_METRIC_MASS)
}

/// [`energy_gram`] with an explicit mass weight for floating subdomains.
pub fn metric_gram(grid: &SubdomainGrid, floating_mass: f64) -> Result<SparseSpd> {
    let k = assemble_stiffness(grid)?;
    if grid.floating {
        if !(floating_mass > 0.0 && floating_mass.is_finite()) {
            return Err(Error::Parameter(format!(
                "floating metric mass weight must be positive, got {floating_mass}"
            )));
        }
        k.add_scaled(floating_mass, &assemble_mass(grid)?)
    } else {
        Ok(k)
    }
}

/// Values of a global nodal field at the nodes of `grid`.
pub fn localize(grid: &SubdomainGrid, global_nodal: &[f64]) -> Vector {
    grid.global_ids.iter().map(|&g| global_nodal[g]).collect()
}

/// Consistent load `b_a = int f phi_a` for `f` given by its nodal values
/// (P1 interpolant), restricted to the free dofs.
pub fn assemble_load(grid: &SubdomainGrid, f_nodal: &[f64]) -> Result<Vector> {
    check_dim(grid.n_nodes(), f_nodal.len())?;
    let mut b = vec![0.0; grid.n_dofs()];
    let n = if grid.dim == 1 { 2 } else { 3 };
    for el in &grid.elements {
        let geo = element_geometry(&grid.coords, el)?;
        let nodes = el.nodes();
        for (a, &na) in nodes.iter().enumerate() {
            let Some(da) = grid.dof(na) else { continue };
            for (c, &nc) in nodes.iter().enumerate() {
                b[da] += mass_entry(&geo, n, a, c) * f_nodal[nc];
            }
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval(nodes: usize) -> SubdomainGrid {
        let p = build_partition_1d(1.0, &[0.5], &[nodes, nodes], false).unwrap();
        p.global
    }

    #[test]
    fn minimal_split() {
        let p = build_partition_1d(1.0, &[0.5], &[3, 3], false).unwrap();
        assert_eq!(p.m(), 2);
        assert_eq!(p.k_pairs(), vec![(0, 1)]);
        assert_eq!(p.interfaces[0].coords, vec![[0.5, 0.0]]);
        assert_eq!(p.interfaces[0].weights, vec![1.0]);
        assert_eq!(p.j_plus(0), vec![1]);
        assert_eq!(p.j_minus(1), vec![0]);
    }

    #[test]
    fn interface_at_one_third_is_shared() {
        let p = build_partition_1d(1.0, &[1.0 / 3.0], &[4, 7], false).unwrap();
        let f = &p.interfaces[0];
        let l = &p.subdomains[0];
        let r = &p.subdomains[1];
        let xl = l.coords[l.global_ids.binary_search(&f.nodes[0]).unwrap()][0];
        let xr = r.coords[r.global_ids.binary_search(&f.nodes[0]).unwrap()][0];
        assert_eq!(xl, 1.0 / 3.0);
        assert_eq!(xl, xr);
    }

    #[test]
    fn bad_cuts_are_rejected() {
        assert!(build_partition_1d(1.0, &[0.7, 0.3], &[3, 3, 3], true).is_err());
        assert!(build_partition_1d(1.0, &[1.2], &[3, 3], false).is_err());
        assert!(build_partition_1d(1.0, &[0.5], &[2, 3], false).is_err());
    }

    #[test]
    fn floating_interior_subdomain_needs_flag() {
        let err = build_partition_1d(1.0, &[0.3, 0.6], &[4, 4, 4], false).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
        let p = build_partition_1d(1.0, &[0.3, 0.6], &[4, 4, 4], true).unwrap();
        assert!(p.subdomains[1].floating);
        assert!(!p.subdomains[0].floating);
        assert_eq!(p.j_plus(1), vec![2]);
        assert_eq!(p.j_minus(1), vec![0]);
    }

    #[test]
    fn strips_construction() {
        let res = [StripResolution { nx: 8, ny: 8 }; 2];
        let p = build_partition_2d_strips(1.0, 1.0, &[0.5], &res).unwrap();
        assert_eq!(p.m(), 2);
        assert_eq!(p.interfaces[0].len(), 9);
        let w: f64 = p.interfaces[0].weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-14);
        assert_eq!(p.interfaces[0].weights[0], 0.0625);
        // endpoints are Dirichlet
        assert_eq!(p.interfaces[0].trace_left.rows()[0], None);
        assert!(p.interfaces[0].trace_left.rows()[4].is_some());
    }

    #[test]
    fn three_strips_bookkeeping() {
        let res = [StripResolution { nx: 4, ny: 6 }; 3];
        let p = build_partition_2d_strips(3.0, 1.0, &[1.0, 2.0], &res).unwrap();
        assert_eq!(p.k_pairs(), vec![(0, 1), (1, 2)]);
        assert_eq!(p.j_plus(0), vec![1]);
        assert_eq!(p.j_minus(2), vec![1]);
        assert!(p.subdomains.iter().all(|s| !s.floating));
    }

    #[test]
    fn mismatched_strip_resolution_is_rejected() {
        let res = [
            StripResolution { nx: 4, ny: 6 },
            StripResolution { nx: 4, ny: 8 },
        ];
        assert!(build_partition_2d_strips(1.0, 1.0, &[0.5], &res).is_err());
    }

    #[test]
    fn interfaces_match_coordinates_on_both_sides() {
        let res = [StripResolution { nx: 3, ny: 5 }; 3];
        let p = build_partition_2d_strips(1.0, 1.0, &[0.25, 0.6], &res).unwrap();
        for f in &p.interfaces {
            for (&g, c) in f.nodes.iter().zip(&f.coords) {
                for side in [f.left, f.right] {
                    let s = &p.subdomains[side];
                    let l = s.global_ids.binary_search(&g).unwrap();
                    assert_eq!(&s.coords[l], c);
                }
            }
        }
    }

    #[test]
    fn stiffness_hand_assembly() {
        // (0,1), two elements, Dirichlet only at 0
        let p = build_partition_1d(2.0, &[1.0], &[3, 3], false).unwrap();
        let k = assemble_stiffness(&p.subdomains[0]).unwrap();
        assert_eq!(k.to_dense(), vec![vec![4.0, -2.0], vec![-2.0, 2.0]]);
        assert!(k.is_symmetric());
    }

    #[test]
    fn stiffness_scales_inversely_with_length() {
        let a = build_partition_1d(2.0, &[1.0], &[5, 5], false).unwrap();
        let b = build_partition_1d(6.0, &[3.0], &[5, 5], false).unwrap();
        let ka = assemble_stiffness(&a.subdomains[0]).unwrap().to_dense();
        let kb = assemble_stiffness(&b.subdomains[0]).unwrap().to_dense();
        for (ra, rb) in ka.iter().zip(&kb) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x / 3.0 - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn energy_gram_of_linear_field() {
        // u = x on (0,1), two elements, Dirichlet at 0: int |u'|^2 = 1
        let p = build_partition_1d(2.0, &[1.0], &[3, 3], false).unwrap();
        let k = energy_gram(&p.subdomains[0]).unwrap();
        let u = [0.5, 1.0];
        assert!((k.bilinear(&u, &u) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn load_examples() {
        let g = unit_interval(5); // 8 elements, h = 1/8
        let ones = vec![1.0; g.n_nodes()];
        let b = assemble_load(&g, &ones).unwrap();
        assert!(b.iter().all(|v| (v - 0.125).abs() < 1e-15));
        let zero = assemble_load(&g, &vec![0.0; g.n_nodes()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        // free boundary node gets h/2
        let p = build_partition_1d(1.0, &[0.5], &[5, 5], false).unwrap();
        let s = &p.subdomains[0];
        let b0 = assemble_load(s, &vec![1.0; s.n_nodes()]).unwrap();
        assert!((b0[b0.len() - 1] - 0.0625).abs() < 1e-15);
        assert!((b0[0] - 0.125).abs() < 1e-15);
        let b3 = assemble_load(s, &vec![3.0; s.n_nodes()]).unwrap();
        for (x, y) in b0.iter().zip(&b3) {
            assert!((3.0 * x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn trace_examples() {
        let p = build_partition_1d(1.0, &[0.5], &[3, 3], false).unwrap();
        let f = &p.interfaces[0];
        let u = vec![0.2, 0.7];
        assert_eq!(trace_apply(&f.trace_left, &u).unwrap(), vec![0.7]);
        assert_eq!(trace_apply(&f.trace_left, &[0.0, 0.0]).unwrap(), vec![0.0]);
        let w = vec![1.5];
        assert_eq!(f.trace_left.apply(&f.trace_left.extend(&w)), w);
        assert!(trace_apply(&f.trace_left, &[1.0]).is_err());
    }

    #[test]
    fn degenerate_triangle_is_an_error() {
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let e = Element::triangle(0, 1, 2);
        assert!(element_geometry(&coords, &e).is_err());
    }

    #[test]
    fn strips_tile_the_domain() {
        let res = [StripResolution { nx: 4, ny: 4 }; 2];
        let p = build_partition_2d_strips(2.0, 1.0, &[0.8], &res).unwrap();
        let total: f64 = p.subdomains.iter().map(|s| s.total_measure()).sum();
        assert!((total - 2.0).abs() < 1e-13);
        for s in &p.subdomains {
            assert!(s.tags.contains(&NodeTag::Dirichlet));
        }
    }

    #[test]
    fn total_elements_are_distributed() {
        assert_eq!(elements_for_total(1.0, &[0.35, 0.7], 128), vec![45, 45, 38]);
        assert_eq!(elements_for_total(1.0, &[0.5], 8), vec![4, 4]);
    }
}
