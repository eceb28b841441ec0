//! Domain decomposition by a strongly convergent primal-dual proximal
//! splitting with Haugazeau-type outer projections.

pub mod cli;
pub mod config;
pub mod error;
pub mod harmonic;
pub mod linalg;
pub mod mesh;
pub mod oracle;
pub mod output;
pub mod par;
pub mod problems;
pub mod prox;
pub mod qp;
pub mod splitting;

pub use error::{Error, Result};
