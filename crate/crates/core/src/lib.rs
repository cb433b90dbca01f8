//! Differential network estimation between two Gaussian graphical models.
//!
//! The crate covers the whole simulation pipeline: paired graph generation
//! ([`graph`]), Gaussian models and sampling ([`sim`]), four estimators of the
//! differential network ([`estimators`]), scoring ([`eval`]) and the sweep /
//! two-sample drivers behind the `diffnet` command ([`harness`]).

pub mod error;
pub mod estimators;
pub mod eval;
pub mod graph;
pub mod harness;
pub mod matrix;
pub mod seeds;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{Graph, GraphTriple, ScenarioSpec, Structure};
pub use matrix::{DataMatrix, SymMatrix};
