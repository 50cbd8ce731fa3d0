//! Group x poset equivariant features for inertial activity recognition,
//! with ablations, an out-of-distribution benchmark, and naturality checks.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod features;
pub mod learn;
pub mod perturb;
pub mod robustness;
pub mod signal;
pub mod symmetry;

pub use error::{Error, Result};
