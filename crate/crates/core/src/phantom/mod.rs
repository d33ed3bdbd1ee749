//! Synthetic cohort generation.
//!
//! Produces subject records whose covariates (sex, height, BMI, age,
//! handedness) follow the demographics of the target population, with
//! per-subject ground-truth muscle volumes planted through a calibrated
//! linear model (see [`cohort`]), and renders matching 3D image/mask pairs
//! containing two curved, tapered tube analogues of the paired muscles
//! (see [`synth`]).

mod cohort;
mod csv_io;
mod synth;

pub use cohort::{
    plant_volumes, sample_cohort, CohortSpec, Handedness, Sex, SubjectRecord, VolumeCoeffs,
};
pub use csv_io::{read_cohort_csv, write_cohort_csv, COHORT_HEADER};
pub use synth::{synthesize_subject, PhantomGeometry};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("phantom geometry error: {0}")]
    Geometry(String),
    #[error("cohort csv error: {0}")]
    Csv(String),
    #[error(transparent)]
    Vox(#[from] crate::voxgrid::VoxError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stable per-subject stream derivation: whitened mix of the cohort seed,
/// the subject index, and a stream tag, so subjects can be generated in
/// parallel with results identical to serial order.
pub(crate) fn derive_seed(base: u64, index: u64, stream: u64) -> u64 {
    crate::seed::mix(base, index ^ stream.rotate_left(17))
}

/// Canonical per-subject seed for [`synthesize_subject`] when rendering a
/// whole cohort: mixes the cohort seed with the subject's index.
pub fn synthesis_seed(cohort_seed: u64, subject_index: usize) -> u64 {
    derive_seed(cohort_seed, subject_index as u64, 4)
}
