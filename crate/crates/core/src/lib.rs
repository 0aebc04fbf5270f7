//! DNA mixture deconvolution from sequencing coverage data.
//!
//! The crate fits a two-component Poisson-gamma coverage model to an observed
//! coverage table and searches the discrete space of unknown genotype
//! combinations with a multi-population evolutionary algorithm featuring
//! ring migration, residual-guided mutation, and residual-matched
//! hill-climbing. A generative simulator and a quality-based read-reduction
//! preprocessor round out the pipeline; everything is reachable from the
//! `mixdeconv` command-line binary.

pub mod coverage;
pub mod error;
pub mod estimate;
pub mod genotype;
pub mod optim;
pub mod pg;

pub use error::{Error, Result};
