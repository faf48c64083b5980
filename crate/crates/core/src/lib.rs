//! Configuration-ensemble dynamics lab.
//!
//! Hybrid quantum-classical ensembles on a 3-coordinate configuration space
//! (two quantum particles, one classical mediator), their observable
//! functionals and Poisson brackets, the bilinear interaction flow, classical
//! position measurement with entanglement quantification, locality checks,
//! and the discrete qubit/classical-bit protocol.

pub mod acceptance;
pub mod analytic;
pub mod conditioning;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod expr;
pub mod grid;
pub mod linalg;
pub mod locality;
pub mod observables;
pub mod output;
pub mod presets;
pub mod qubit;
pub mod runner;
pub mod scenario;
pub mod snapshot;
pub mod units;

pub use error::{CeError, Result};
pub use grid::{Axis, AxisSpec, Grid};
