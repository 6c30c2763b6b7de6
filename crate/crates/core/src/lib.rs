//! Trust-region continual learning at desk scale.
//!
//! The crate combines replay gradients with a Fisher-metric anchor penalty
//! into a single continual update, provides the one-step meta updates that
//! the combined update shadows, and ships toy model families small enough
//! that full gradients, Hessians and Fishers are computable exactly. An
//! experiment harness trains five methods over synthetic task streams and
//! reports forgetting and re-convergence metrics; a verification module runs
//! every numeric identity against an independent oracle.

pub mod continual;
pub mod curvature;
pub mod error;
pub mod fd;
pub mod fisher;
pub mod harness;
pub mod meta;
pub mod models;
pub mod replay;
pub mod rng;

pub use curvature::{top_eigenpair, Curvature, Matrix, Vector};
pub use error::{Error, Result};
pub use fisher::FisherMode;
pub use models::{ModelSpec, Params, Sample, TaskDataset};
