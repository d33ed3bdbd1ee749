//! Volumetric muscle segmentation pipeline.
//!
//! End-to-end machinery for segmenting paired tube-like muscle structures in
//! 3D scalar volumes and deriving cohort morphometry from the results:
//!
//! - [`voxgrid`]: volumes, label masks, file I/O, overlap metrics
//! - [`phantom`]: synthetic cohorts (covariates with planted structure, plus
//!   image/mask pairs containing two muscle analogues)
//! - [`prep`]: landmark cropping, normalization, mirror pooling, random
//!   affine augmentation, training-set assembly
//! - [`autograd`]: reverse-mode differentiation engine with exactly the
//!   operator set the network needs, soft-Dice loss, and Adam
//! - [`vnet`]: the residual encoder-decoder segmentation architecture,
//!   parameter initialization, checkpoints
//! - [`trainer`]: training loop, out-of-sample evaluation, whole-subject
//!   inference
//! - [`cohortstats`]: summaries, agreement analysis, correlation and
//!   hypothesis tests, muscle index, penalized spline curves

pub mod autograd;
pub(crate) mod seed;
pub mod phantom;
pub mod prep;
pub mod trainer;
pub mod vnet;
pub mod cohortstats;
pub mod voxgrid;
