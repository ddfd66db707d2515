//! Optimal proportional reinsurance under terminal solvency constraints.
//!
//! The insurer's surplus is an arithmetic Brownian motion; buying proportional
//! reinsurance at a non-cheap price turns the problem of maximising quadratic
//! utility of terminal surplus into a martingale-method problem in the pricing
//! kernel `Z`. The crate computes the optimal terminal payoffs, calibrates them
//! to the budget and to each solvency constraint, reconstructs the controlled
//! surplus paths and reinsurance proportions, and cross-checks everything by
//! Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod cli;
pub mod design;
pub mod kernel;
pub mod oracle;
pub mod paths;

pub use calibrate::{calibrate, CalibrationError};
pub use design::{CalibratedDesign, ConstraintSpec, Family, Payoff, Regime};
pub use kernel::ModelParams;
