//! Probabilistic tractography with streamline-specific parameters.
//!
//! Every tracking attempt draws its own parameter set (step size, radius of
//! curvature, optionally FOD threshold), tracks bidirectionally on a spherical
//! harmonic FOD volume, and emits a per-attempt record regardless of whether a
//! streamline was accepted. The analysis side turns those records into
//! parameter-acceptance histograms, cluster-wise distributions, and refined
//! sampling ranges.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod fod;
pub mod geometry;
pub mod io;
pub mod phantom;
pub mod roi;

pub use error::{Error, Result};
