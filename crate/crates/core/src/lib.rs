//! Desk-scale toolkit for prompt-guided segmentation of small lesions on
//! regular voxel grids.
//!
//! The pipeline: a dose field yields a box prompt and a region of interest
//! ([`doseprompt`]), a task-conditioned logistic voxel classifier is trained
//! under a small-target focus loss restricted to that region ([`refiner`],
//! [`stf`]), simulated clicks refine training-time predictions ([`clicksim`]),
//! and results are scored with overlap and surface-distance metrics
//! ([`metrics`]). A synthetic phantom generator ([`phantom`]) provides
//! deterministic test data end to end.

pub mod clicksim;
pub mod dataset;
pub mod doseprompt;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod morph;
pub mod phantom;
pub mod refiner;
pub mod resample;
pub mod rng;
pub mod stf;
pub mod sweep;
pub mod textprompt;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
