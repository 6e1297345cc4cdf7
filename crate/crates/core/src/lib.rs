//! Constructive inversion of the linearized pullback-metric operator
//! `df -> d(f)^T d(df) + d(df)^T d(f)` for maps `R^m -> R^q` on box grids.
//!
//! Pipeline: second-order jets ([`jetcalc`]), the kernel of the jet matrix
//! ([`kernelfield`]), a scalar transport equation along a transversal
//! coordinate ([`transport`]), pointwise least-squares solves ([`linsolve`])
//! and independent checks ([`verify`]).

pub mod cli;
pub mod error;
pub mod grid;
pub mod jetcalc;
pub mod kernelfield;
pub mod linalg;
pub mod linsolve;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Field, FieldKind, Grid};
