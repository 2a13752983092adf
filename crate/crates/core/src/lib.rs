//! Finite-element simulation of a tumor / necrosis / vasculature model with a
//! linear, uncoupled, positivity-preserving time discretisation.

// NaN-rejecting `!(x > 0.0)` checks and index loops over local element matrices are intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod output;
pub mod scheme;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use mesh::Triangulation;
pub use model::ModelParams;
pub use scheme::{run, RunReport, SchemeVariant, State, StepDiagnostics};
