//! Grey-box identification of NARX models from dynamical data and
//! steady-state information.
//!
//! Models are trained by minimising a convex combination of the one-step
//! prediction error over dynamical data and a static cost evaluated with a
//! single model step from each measured steady-state point. No model fixed
//! point has to be computed during training; the classical fixed-point
//! iteration is still provided as an oracle and for the legacy
//! evolutionary baseline.
//!
//! Module map:
//!
//! * [`data`]: dataset containers, benchmark simulators and CSV I/O.
//! * [`models`]: regressor layout, polynomial and MLP models, free-run simulation.
//! * [`steady_state`]: fixed-point iteration and the static cost functions.
//! * [`estimation`]: weighted least squares, weighted Levenberg-Marquardt, GA baseline.
//! * [`sweep`]: λ-grid sweeps, decision makers and Pareto fronts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimation;
pub mod models;
pub mod steady_state;
pub mod sweep;

pub use error::{Error, Result};
