//! Deterministic geometry kernels for sparse vectorized HD-map construction.
//!
//! The crate covers the non-learned parts of a map-element detector pipeline:
//!
//! * [`geometry`]: map-element data model, resampling, curvature, frame
//!   transforms, range clipping and normalization.
//! * [`denoise`]: physically plausible query denoising (rotation, location,
//!   scale and curvature noise) driven by a counter-based RNG ([`rng`]).
//! * [`raster`]: per-class BEV foreground masks used as auxiliary
//!   segmentation targets.
//! * [`assign`]: permutation-equivalent point-set costs and optimal
//!   one-to-one assignment.
//! * [`eval`]: Chamfer-distance average precision.
//! * [`dfa`]: reference deformable feature aggregation with analytic
//!   gradients.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! identical either way.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assign;
pub mod denoise;
pub mod dfa;
mod error;
pub mod eval;
pub mod geometry;
pub mod hungarian;
pub mod par;
pub mod raster;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{ClassLabel, EgoPose, MapElement, PerceptionRange, Point2};

/// Library version, shared by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
