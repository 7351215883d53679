//! Exact and floating-point tools for the integrable multispecies
//! q-Hahn zero range process on a ring.

pub mod error;
pub mod linalg;
pub mod markov;
pub mod mpa;
pub mod outcome;
pub mod qboson;
pub mod qseries;
pub mod simulator;
pub mod statespace;
pub mod stochastic_r;
pub mod suites;

pub use error::{Result, ZrpError};
pub use outcome::{Outcome, Witness};
pub use qseries::{Field, Mode, ModelParams, Rational, Scalar};
pub use statespace::{Config, Occupancy, Sector};

/// Library version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
