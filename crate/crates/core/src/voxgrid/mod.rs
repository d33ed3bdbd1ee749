//! Core volumetric data model: dense 3D grids with physical voxel spacing,
//! label masks, mask geometry, and overlap metrics.
//!
//! Orientation convention is fixed throughout the pipeline: +x = subject
//! left, +y = anterior, +z = superior (radiological display: the subject's
//! right side sits at small x). Voxels are stored x-fastest, i.e. linear
//! index `x + nx*(y + ny*z)`.

mod components;
mod io;

pub use components::largest_component;
pub use io::{read_mvol, write_mvol, Mvol};

use thiserror::Error;

/// Errors produced by grid construction, metrics, and file I/O.
#[derive(Debug, Error)]
pub enum VoxError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("not an MVOL file: {0}")]
    Format(String),
    #[error("corrupt MVOL file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grid dimensions `(nx, ny, nz)`, all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, VoxError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(VoxError::InvalidArgument(format!(
                "dims must be positive, got ({nx}, {ny}, {nz})"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    /// Total voxel count `nx*ny*nz`.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        false // dims are strictly positive by construction
    }

    /// Linear index of `(x, y, z)`, x-fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }
}

/// Physical voxel edge lengths in millimetres; strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self, VoxError> {
        for v in [dx, dy, dz] {
            if !(v.is_finite() && v > 0.0) {
                return Err(VoxError::InvalidArgument(format!(
                    "spacing must be positive and finite, got ({dx}, {dy}, {dz})"
                )));
            }
        }
        Ok(Self { dx, dy, dz })
    }

    pub fn isotropic(d: f64) -> Result<Self, VoxError> {
        Self::new(d, d, d)
    }

    /// Volume of one voxel in mm^3.
    pub fn voxel_mm3(&self) -> f64 {
        self.dx * self.dy * self.dz
    }
}

/// Dense 3D scalar grid (32-bit float values) with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: Spacing,
    voxels: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: Dims, spacing: Spacing, voxels: Vec<f32>) -> Result<Self, VoxError> {
        if voxels.len() != dims.len() {
            return Err(VoxError::DimMismatch(format!(
                "expected {} voxels for dims ({}, {}, {}), got {}",
                dims.len(),
                dims.nx,
                dims.ny,
                dims.nz,
                voxels.len()
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(VoxError::InvalidArgument(
                "volume contains non-finite values".into(),
            ));
        }
        Ok(Self {
            dims,
            spacing,
            voxels,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f32) -> Self {
        Self {
            dims,
            spacing,
            voxels: vec![value; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub(crate) fn voxels_mut(&mut self) -> &mut [f32] {
        &mut self.voxels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.dims.index(x, y, z)]
    }

    /// Voxel `(x, y, z)` moves to `(nx-1-x, y, z)`; spacing unchanged.
    pub fn flip_x(&self) -> Self {
        Self {
            dims: self.dims,
            spacing: self.spacing,
            voxels: flip_x_raw(&self.voxels, self.dims),
        }
    }
}

/// Labeled 3D grid; labels are 0 = background, 1 = right muscle,
/// 2 = left muscle.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D {
    dims: Dims,
    spacing: Spacing,
    labels: Vec<u8>,
}

pub const LABEL_RIGHT: u8 = 1;
pub const LABEL_LEFT: u8 = 2;

impl Mask3D {
    pub fn new(dims: Dims, spacing: Spacing, labels: Vec<u8>) -> Result<Self, VoxError> {
        if labels.len() != dims.len() {
            return Err(VoxError::DimMismatch(format!(
                "expected {} labels for dims ({}, {}, {}), got {}",
                dims.len(),
                dims.nx,
                dims.ny,
                dims.nz,
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 2) {
            return Err(VoxError::InvalidArgument(
                "mask labels must be in {0, 1, 2}".into(),
            ));
        }
        Ok(Self {
            dims,
            spacing,
            labels,
        })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        Self {
            dims,
            spacing,
            labels: vec![0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub(crate) fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.dims.index(x, y, z)]
    }

    pub fn flip_x(&self) -> Self {
        Self {
            dims: self.dims,
            spacing: self.spacing,
            labels: flip_x_raw(&self.labels, self.dims),
        }
    }
}

fn flip_x_raw<T: Copy>(data: &[T], dims: Dims) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            let row = dims.index(0, y, z);
            for x in 0..dims.nx {
                out.push(data[row + dims.nx - 1 - x]);
            }
        }
    }
    out
}

/// Integer voxel coordinate inside a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Landmark {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// Per-side reference points used to center crops. Under the fixed
/// orientation convention the right landmark has the smaller x.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LandmarkPair {
    pub right: Landmark,
    pub left: Landmark,
}

impl LandmarkPair {
    pub fn new(right: Landmark, left: Landmark, dims: Dims) -> Result<Self, VoxError> {
        for (name, lm) in [("right", right), ("left", left)] {
            if lm.x >= dims.nx || lm.y >= dims.ny || lm.z >= dims.nz {
                return Err(VoxError::InvalidArgument(format!(
                    "{name} landmark ({}, {}, {}) outside dims ({}, {}, {})",
                    lm.x, lm.y, lm.z, dims.nx, dims.ny, dims.nz
                )));
            }
        }
        if right.x >= left.x {
            return Err(VoxError::InvalidArgument(format!(
                "right landmark must have smaller x than left (got {} >= {})",
                right.x, left.x
            )));
        }
        Ok(Self { right, left })
    }
}

/// Physical volume of all voxels carrying `label`, in millilitres:
/// `count * dx*dy*dz / 1000`.
pub fn mask_volume_ml(mask: &Mask3D, label: u8) -> Result<f64, VoxError> {
    if label != LABEL_RIGHT && label != LABEL_LEFT {
        return Err(VoxError::InvalidArgument(format!(
            "label must be 1 or 2, got {label}"
        )));
    }
    let count = mask.labels.iter().filter(|&&l| l == label).count();
    Ok(count as f64 * mask.spacing.voxel_mm3() / 1000.0)
}

/// Dice score coefficient `2*TP / (FP + 2*TP + FN)` for `label`, treating
/// voxels equal to `label` as positive in each mask.
///
/// Both masks empty of `label` counts as perfect agreement (1.0).
pub fn dsc(a: &Mask3D, b: &Mask3D, label: u8) -> Result<f64, VoxError> {
    if a.dims != b.dims {
        return Err(VoxError::DimMismatch(format!(
            "mask dims differ: ({}, {}, {}) vs ({}, {}, {})",
            a.dims.nx, a.dims.ny, a.dims.nz, b.dims.nx, b.dims.ny, b.dims.nz
        )));
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&la, &lb) in a.labels.iter().zip(&b.labels) {
        match (la == label, lb == label) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => {}
        }
    }
    if tp == 0 && fp == 0 && fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (fp as f64 + 2.0 * tp as f64 + fn_ as f64))
}
