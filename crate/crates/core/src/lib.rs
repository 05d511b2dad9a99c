//! Mechanically mediated optical response of a hybrid opto-electromechanical
//! system: an optical cavity and a microwave cavity coupled to one
//! mechanical resonator.
//!
//! The pipeline is steady state ([`steady`]) → weak-probe response
//! ([`response`]) → stability ([`stability`]) → spectra, power scans and
//! regime labels ([`sweep`]). [`evolution`] integrates the mean-field
//! equations in time and is used to cross-check the first and third steps.
//! [`config`], [`output`] and [`cli`] form the command-line front end.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod evolution;
pub mod model;
pub mod output;
pub mod response;
pub mod stability;
pub mod steady;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{Convention, DriveConfig, SystemParams};
pub use steady::{SolverOptions, SteadyState};
