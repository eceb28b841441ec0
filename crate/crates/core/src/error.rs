use std::fmt;

use thiserror::Error;

/// Location of a failing proximity evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Subdomain(usize),
    Interface(usize, usize),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based, matching how partitions are printed
        match self {
            Site::Subdomain(i) => write!(f, "subdomain {}", i + 1),
            Site::Interface(i, j) => write!(f, "interface ({},{})", i + 1, j + 1),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("inner optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    InnerNonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("proximity operator failed on {site}: {source}")]
    Prox {
        site: Site,
        #[source]
        source: Box<Error>,
    },

    #[error("half-spaces are inconsistent (rho = {rho:e}, chi = {chi:e}); an oracle is broken")]
    InconsistentHalfspaces { rho: f64, chi: f64 },

    #[error("infeasible constraint set: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, site: Site) -> Error {
        Error::Prox {
            site,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
