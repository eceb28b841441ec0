//! JSON run configuration.

use std::path::{Path, PathBuf};

use meval::{Context, Expr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::mesh::{build_partition_1d, build_partition_2d_strips, elements_for_total, Partition, StripResolution, FLOATING_METRIC_MASS};
use crate::problems::{ProblemKind, ProblemSpec};
use crate::splitting::{AlgorithmParams, PrimalDualPoint, Schedule, StopTol, DEFAULT_EPSILON, DEFAULT_MAX_ITERS, DEFAULT_RELATIVE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Poisson,
    Plaplacian,
    Obstacle,
    Unilateral,
    Membrane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Geometry {
    /// `(0, length)`; resolution either as a total element count spread
    /// over the subdomains or as node counts per subdomain.
    Interval {
        #[serde(default = "one")]
        length: f64,
        #[serde(default)]
        cuts: Vec<f64>,
        #[serde(default)]
        elements: Option<usize>,
        #[serde(default)]
        nodes: Option<Vec<usize>>,
        #[serde(default)]
        allow_floating: bool,
    },
    /// `(0, width) x (0, height)` cut into vertical strips.
    Strips {
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        height: f64,
        #[serde(default)]
        cuts: Vec<f64>,
        strips: Vec<StripSize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSize {
    pub nx: usize,
    pub ny: usize,
}

fn one() -> f64 {
    1.0
}

/// A field on the grid: constant, expression in `x` and `y`, or nodal
/// values read from a one-column CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Constant(f64),
    Expression(String),
    Nodal { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl ScheduleConfig {
    fn to_schedule(&self) -> Schedule {
        match self {
            ScheduleConfig::Constant(c) => Schedule::Constant(*c),
            ScheduleConfig::Sequence(s) => Schedule::Sequence(s.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum StopTolConfig {
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_step")]
    pub gamma: ScheduleConfig,
    #[serde(default = "default_step")]
    pub mu: ScheduleConfig,
    #[serde(default = "default_step")]
    pub lambda: ScheduleConfig,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: StopTolConfig,
    #[serde(default = "default_floating_mass")]
    pub floating_mass: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            epsilon: default_epsilon(),
            gamma: default_step(),
            mu: default_step(),
            lambda: default_step(),
            max_iters: default_max_iters(),
            stop_tol: default_stop_tol(),
            floating_mass: default_floating_mass(),
        }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_step() -> ScheduleConfig {
    ScheduleConfig::Constant(1.0)
}
fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}
fn default_stop_tol() -> StopTolConfig {
    StopTolConfig::Relative(DEFAULT_RELATIVE_TOL)
}
fn default_floating_mass() -> f64 {
    FLOATING_METRIC_MASS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    #[default]
    Zero,
    /// Entries uniform in `[-1, 1]` drawn from the configured seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_solution")]
    pub solution: String,
    /// Prefix of the per-interface dual files.
    #[serde(default = "default_duals")]
    pub duals: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            trace: default_trace(),
            solution: default_solution(),
            duals: default_duals(),
            summary: default_summary(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_trace() -> String {
    "trace.csv".into()
}
fn default_solution() -> String {
    "solution.csv".into()
}
fn default_duals() -> String {
    "duals".into()
}
fn default_summary() -> String {
    "summary.json".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Energy-norm distance to the monolithic solution.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    /// Largest gap between duals and the finite-difference flux.
    #[serde(default = "default_flux_tol")]
    pub flux_tol: f64,
    #[serde(default = "default_complementarity_tol")]
    pub complementarity_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            energy_tol: default_energy_tol(),
            flux_tol: default_flux_tol(),
            complementarity_tol: default_complementarity_tol(),
        }
    }
}

fn default_energy_tol() -> f64 {
    1e-6
}
fn default_flux_tol() -> f64 {
    0.05
}
fn default_complementarity_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    pub geometry: Geometry,
    pub source: Field,
    /// p-Laplacian exponent, one value or one per subdomain.
    #[serde(default)]
    pub p: Option<OneOrMany>,
    #[serde(default)]
    pub obstacle: Option<Field>,
    /// `epsilon_ij` in {+1, -1}, one value or one per interface.
    #[serde(default)]
    pub orientation: Option<OneOrMany>,
    #[serde(default)]
    pub permeability: Option<OneOrMany>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl RunConfig {
    /// Parses a JSON document; errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative CSV paths inside it resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for field in [Some(&mut self.source), self.obstacle.as_mut()].into_iter().flatten() {
            if let Field::Nodal { csv } = field {
                if csv.is_relative() {
                    *csv = base.join(&*csv);
                }
            }
        }
    }

    pub fn partition(&self) -> Result<Partition> {
        match &self.geometry {
            Geometry::Interval {
                length,
                cuts,
                elements,
                nodes,
                allow_floating,
            } => {
                let nodes = match (elements, nodes) {
                    (Some(total), None) => {
                        if *total < 2 * (cuts.len() + 1) {
                            return Err(Error::Config(format!(
                                "geometry.elements: {total} elements cannot cover {} subdomains",
                                cuts.len() + 1
                            )));
                        }
                        elements_for_total(*length, cuts, *total).iter().map(|e| e + 1).collect()
                    }
                    (None, Some(n)) => n.clone(),
                    _ => {
                        return Err(Error::Config(
                            "geometry: give exactly one of `elements` and `nodes`".into(),
                        ))
                    }
                };
                build_partition_1d(*length, cuts, &nodes, *allow_floating)
            }
            Geometry::Strips {
                width,
                height,
                cuts,
                strips,
            } => {
                let res: Vec<StripResolution> = strips.iter().map(|s| StripResolution { nx: s.nx, ny: s.ny }).collect();
                build_partition_2d_strips(*width, *height, cuts, &res)
            }
        }
    }

    fn required(&self, v: &Option<OneOrMany>, name: &str) -> Result<Vec<f64>> {
        v.as_ref()
            .map(OneOrMany::values)
            .ok_or_else(|| Error::Config(format!("kind {:?} needs field `{name}`", self.kind)))
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let partition = self.partition()?;
        let source = sample(&self.source, &partition, "source")?;
        let kind = match self.kind {
            Kind::Poisson => ProblemKind::Poisson,
            Kind::Plaplacian => ProblemKind::PLaplacian {
                exponents: self.required(&self.p, "p")?,
            },
            Kind::Obstacle => {
                let h = self
                    .obstacle
                    .as_ref()
                    .ok_or_else(|| Error::Config("kind obstacle needs field `obstacle`".into()))?;
                ProblemKind::Obstacle {
                    obstacle: sample(h, &partition, "obstacle")?,
                }
            }
            Kind::Unilateral => ProblemKind::Unilateral {
                orientation: self.required(&self.orientation, "orientation")?,
            },
            Kind::Membrane => ProblemKind::Membrane {
                orientation: self.required(&self.orientation, "orientation")?,
                permeability: self.required(&self.permeability, "permeability")?,
            },
        };
        let mut spec = ProblemSpec::new(partition, kind, source);
        spec.floating_mass = self.params.floating_mass;
        Ok(spec)
    }

    pub fn algorithm_params(&self) -> Result<AlgorithmParams> {
        let p = &self.params;
        let stop = match p.stop_tol {
            StopTolConfig::Relative(r) => StopTol::Relative(r),
            StopTolConfig::Absolute(a) => StopTol::Absolute(a),
        };
        AlgorithmParams::new(
            p.epsilon,
            p.gamma.to_schedule(),
            p.mu.to_schedule(),
            p.lambda.to_schedule(),
            p.max_iters,
            stop,
        )
    }

    pub fn initial_point(&self, partition: &Partition) -> PrimalDualPoint {
        let mut x0 = PrimalDualPoint::zeros(partition);
        if self.initial == Initial::Random {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for b in x0.primal.iter_mut().chain(x0.dual.iter_mut()) {
                for v in b.iter_mut() {
                    *v = rng.gen_range(-1.0..=1.0);
                }
            }
        }
        x0
    }
}

/// Compiles an expression over `x` and `y` with `sin`, `cos` and `exp`.
pub fn compile_expression(text: &str) -> Result<impl Fn(f64, f64) -> f64> {
    let expr: Expr = text
        .parse()
        .map_err(|e| Error::Config(format!("expression {text:?}: {e}")))?;
    let mut ctx = Context::empty();
    ctx.func("sin", f64::sin).func("cos", f64::cos).func("exp", f64::exp);
    expr.bind2_with_context(ctx, "x", "y")
        .map_err(|e| Error::Config(format!("expression {text:?}: {e}")))
}

/// Global nodal values of a field.
pub fn sample(field: &Field, partition: &Partition, name: &str) -> Result<Vector> {
    let coords = &partition.global.coords;
    match field {
        Field::Constant(c) => Ok(vec![*c; coords.len()]),
        Field::Expression(text) => {
            let f = compile_expression(text).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            let v: Vector = coords.iter().map(|c| f(c[0], c[1])).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name}: expression is not finite on the grid")));
            }
            Ok(v)
        }
        Field::Nodal { csv } => {
            let text = std::fs::read_to_string(csv)
                .map_err(|e| Error::Config(format!("{name}: cannot read {}: {e}", csv.display())))?;
            let values = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(k, l)| {
                    l.trim().parse::<f64>().map_err(|e| {
                        Error::Config(format!("{name}: {} line {}: {e}", csv.display(), k + 1))
                    })
                })
                .collect::<Result<Vector>>()?;
            if values.len() != coords.len() {
                return Err(Error::Config(format!(
                    "{name}: {} has {} values, the grid has {} nodes",
                    csv.display(),
                    values.len(),
                    coords.len()
                )));
            }
            Ok(values)
        }
    }
}
