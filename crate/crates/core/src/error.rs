use thiserror::Error;

use crate::kernelfield::AdmissibilityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("arity error: {0}")]
    Arity(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The coefficient matrix has rank below the required value. `node` is
    /// the grid multi-index when the failure happened on a grid.
    #[error("rank deficient{}: sigma_min/sigma_max = {ratio:.3e}", fmt_node(.node))]
    RankDeficient {
        node: Option<Vec<usize>>,
        point: Option<Vec<f64>>,
        ratio: f64,
    },

    #[error("wrong shape: {0}")]
    WrongShape(String),

    #[error("kernel sign ambiguous between nodes {a:?} and {b:?} (|dot| = {dot:.3e})")]
    SignAmbiguous {
        a: Vec<usize>,
        b: Vec<usize>,
        dot: f64,
    },

    #[error("transversality lost at node {node:?}: zeta^alpha0 = {value:.3e}")]
    TransversalityLost { node: Vec<usize>, value: f64 },

    #[error("map is not admissible: {}", .0.summary())]
    NotAdmissible(Box<AdmissibilityReport>),

    #[error("map is not free: {0}")]
    NotFree(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field file: {0}")]
    Field(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),

    #[error("invalid option: {0}")]
    Options(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_node(node: &Option<Vec<usize>>) -> String {
    match node {
        Some(n) => format!(" at node {n:?}"),
        None => String::new(),
    }
}
