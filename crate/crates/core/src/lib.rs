//! Sample-complexity theory and experiments for modular versus monolithic
//! learners.
//!
//! The crate bundles closed-form loss predictions for linear models over
//! power-law feature spectra, a Monte Carlo simulator that checks them, task
//! generators, a small neural network stack, the kernel objective used to
//! initialize module projections, and the experiment harness that measures
//! sample complexity empirically.

pub mod container;
pub mod error;
pub mod harness;
pub mod linear_sim;
pub mod module_init;
pub mod nn;
pub mod numerics;
pub mod tasks;
pub mod theory;

pub use error::{Error, Result};
