//! Parametric 1D–1V Vlasov–Poisson solver with a time-windowed POD–Galerkin
//! reduced-order model whose field-transport term is a precomputed
//! third-order tensor.
//!
//! Pipeline: [`fom`] produces snapshots, [`snapshots`] groups them into time
//! windows, [`pod`] extracts per-window bases, [`offline`] precomputes the
//! reduced operators, and [`online`] marches the reduced system. [`study`]
//! orchestrates the parameter sweep.

pub mod container;
pub mod derivative;
pub mod error;
pub mod field;
pub mod fom;
pub mod grid;
pub mod linalg;
pub mod offline;
pub mod online;
pub mod pod;
pub mod snapshots;
pub mod study;
pub mod weno;

pub use error::{Error, Result};
pub use fom::{fom_run, initial_condition, FomConfig, FomSolver, FomTrajectory};
pub use grid::{DistributionField, ParamPoint, PhaseGrid, PotentialField};
