//! Learning interventional Markov equivalence classes of Gaussian polytrees
//! by linear programming over characteristic-imset polytopes.
//!
//! The library is organized around three layers:
//!
//! * combinatorics: node-labeled trees, DAGs with singleton interventions,
//!   characteristic/standard imsets and equivalence tests ([`graphs`],
//!   [`imsets`]);
//! * geometry: gluing trees, the star / bidirected-edge / forked-tree
//!   inequality families, vertex enumeration, toric-fiber-product gluing and
//!   an exact rational simplex ([`polytope`], [`solver`]);
//! * statistics: interventional Gaussian simulation, the BIC score in direct
//!   and linearized form, and the end-to-end tree learner ([`gaussian`],
//!   [`data`], [`learn`]).
//!
//! Everything geometric is verified against brute-force enumeration in the
//! [`verify`] suites, which the `qig verify` subcommand exposes.

pub mod data;
pub mod gaussian;
pub mod graphs;
pub mod imsets;
pub mod learn;
pub mod polytope;
pub mod solver;
pub mod verify;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum QigError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("unknown node label `{0}`")]
    UnknownLabel(String),
    #[error("node sets differ: {0}")]
    NodeSetMismatch(String),
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),
    #[error("singular marginal covariance for {family}")]
    SingularCovariance { family: String },
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("linear program is unbounded; the H-representation does not bound the feasible region")]
    Unbounded,
    #[error("solver anomaly: {0}")]
    Solver(String),
    #[error("cannot rationalize objective value {0}")]
    Rationalize(f64),
    #[error("imset is not a vertex of the polytope: {0}")]
    InconsistentImset(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, QigError>;

/// Formats a float with 12 significant digits, the convention for all
/// numeric CLI output.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let s = format!("{:.*e}", 11, x);
    // Trim trailing zeros in the mantissa for readability: 1.50000000000e0 -> 1.5e0
    if let Some(epos) = s.find('e') {
        let (mant, exp) = s.split_at(epos);
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}{exp}")
    } else {
        s
    }
}
