//! Preprocessing: landmark cropping, z-score normalization, mirror pooling
//! and bounded random affine augmentation, plus training-set assembly.
//!
//! Crops are anchored so that in *canonical* (right-muscle) orientation the
//! landmark sits at crop coordinate `(cx/2, cy/2, z_anchor)`. Left-side
//! crops are taken about the mirrored anchor column `cx-1-cx/2`, which makes
//! canonical mirroring exact: flipping a left crop yields voxel-for-voxel
//! the crop a mirrored world would have produced. The landmark anchors at
//! one eighth of the crop height above the inferior face, so the muscle
//! body extends superiorly within the crop.

mod affine;
mod dataset;

pub use affine::{random_affine, AffineParams};
pub use dataset::{build_training_set, SubjectData, TrainingSample};

use crate::voxgrid::{Landmark, Mask3D, Volume3D, VoxError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrepError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Vox(#[from] VoxError),
}

/// Muscle side; right = label 1, left = label 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

impl Side {
    pub fn label(&self) -> u8 {
        match self {
            Side::Right => 1,
            Side::Left => 2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Right => "right",
            Side::Left => "left",
        }
    }
}

/// Crop dimensions and landmark anchor rule. Dims must be divisible by 16
/// (the network downsamples four times).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    pub dims: (usize, usize, usize),
    pub z_anchor: usize,
}

impl CropSpec {
    pub fn new(dims: (usize, usize, usize)) -> Result<Self, PrepError> {
        let (cx, cy, cz) = dims;
        for d in [cx, cy, cz] {
            if d == 0 || d % 16 != 0 {
                return Err(PrepError::InvalidArgument(format!(
                    "crop dims must be positive multiples of 16, got {dims:?}"
                )));
            }
        }
        Ok(Self {
            dims,
            z_anchor: cz / 8,
        })
    }

    pub fn with_z_anchor(mut self, z_anchor: usize) -> Result<Self, PrepError> {
        if z_anchor >= self.dims.2 {
            return Err(PrepError::InvalidArgument(format!(
                "z_anchor {z_anchor} outside crop height {}",
                self.dims.2
            )));
        }
        self.z_anchor = z_anchor;
        Ok(self)
    }

    /// Full-size crop 96x96x192.
    pub fn paper_scale() -> Self {
        Self::new((96, 96, 192)).unwrap()
    }

    /// Reduced crop 32x32x64.
    pub fn desk_scale() -> Self {
        Self::new((32, 32, 64)).unwrap()
    }

    /// Source-grid coordinate of crop voxel (0,0,0) for a side's crop; may
    /// be negative (the out-of-grid region is zero-filled).
    pub fn origin(&self, landmark: Landmark, side: Side) -> (i64, i64, i64) {
        let (cx, cy, _) = self.dims;
        let anchor_x = match side {
            Side::Right => cx / 2,
            // mirrored anchor column, so flip(left crop) == crop of the
            // flipped world
            Side::Left => cx - 1 - cx / 2,
        };
        (
            landmark.x as i64 - anchor_x as i64,
            landmark.y as i64 - (cy / 2) as i64,
            landmark.z as i64 - self.z_anchor as i64,
        )
    }
}

/// Extract fixed-size crops of the image and of one side's mask (binarized
/// to {0,1}) about that side's landmark. Regions outside the source grid
/// are zero-filled.
pub fn crop_about_landmark(
    volume: &Volume3D,
    mask: &Mask3D,
    landmark: Landmark,
    side: Side,
    spec: &CropSpec,
) -> Result<(Volume3D, Mask3D), PrepError> {
    if volume.dims() != mask.dims() {
        return Err(PrepError::InvalidArgument(
            "volume and mask dims differ".into(),
        ));
    }
    let dims = volume.dims();
    if landmark.x >= dims.nx || landmark.y >= dims.ny || landmark.z >= dims.nz {
        return Err(PrepError::InvalidArgument(format!(
            "landmark {landmark:?} outside volume dims"
        )));
    }
    let (cx, cy, cz) = spec.dims;
    let (ox, oy, oz) = spec.origin(landmark, side);
    let label = side.label();

    let crop_dims = crate::voxgrid::Dims::new(cx, cy, cz).expect("validated crop dims");
    let mut image = vec![0.0f32; cx * cy * cz];
    let mut target = vec![0u8; cx * cy * cz];
    let mut out_idx = 0usize;
    for w in 0..cz {
        let sz = oz + w as i64;
        for v in 0..cy {
            let sy = oy + v as i64;
            let in_yz = sz >= 0 && sz < dims.nz as i64 && sy >= 0 && sy < dims.ny as i64;
            if !in_yz {
                out_idx += cx;
                continue;
            }
            let row = dims.index(0, sy as usize, sz as usize);
            for u in 0..cx {
                let sx = ox + u as i64;
                if sx >= 0 && sx < dims.nx as i64 {
                    let src = row + sx as usize;
                    image[out_idx] = volume.voxels()[src];
                    target[out_idx] = u8::from(mask.labels()[src] == label);
                }
                out_idx += 1;
            }
        }
    }
    let image = Volume3D::new(crop_dims, volume.spacing(), image)?;
    let target = Mask3D::new(crop_dims, volume.spacing(), target)?;
    Ok((image, target))
}

/// Image-only variant of [`crop_about_landmark`], for inference where no
/// mask exists.
pub fn crop_image_about_landmark(
    volume: &Volume3D,
    landmark: Landmark,
    side: Side,
    spec: &CropSpec,
) -> Result<Volume3D, PrepError> {
    let dims = volume.dims();
    if landmark.x >= dims.nx || landmark.y >= dims.ny || landmark.z >= dims.nz {
        return Err(PrepError::InvalidArgument(format!(
            "landmark {landmark:?} outside volume dims"
        )));
    }
    let (cx, cy, cz) = spec.dims;
    let (ox, oy, oz) = spec.origin(landmark, side);
    let crop_dims = crate::voxgrid::Dims::new(cx, cy, cz).expect("validated crop dims");
    let mut image = vec![0.0f32; cx * cy * cz];
    let mut out_idx = 0usize;
    for w in 0..cz {
        let sz = oz + w as i64;
        for v in 0..cy {
            let sy = oy + v as i64;
            if sz < 0 || sz >= dims.nz as i64 || sy < 0 || sy >= dims.ny as i64 {
                out_idx += cx;
                continue;
            }
            let row = dims.index(0, sy as usize, sz as usize);
            for u in 0..cx {
                let sx = ox + u as i64;
                if sx >= 0 && sx < dims.nx as i64 {
                    image[out_idx] = volume.voxels()[row + sx as usize];
                }
                out_idx += 1;
            }
        }
    }
    Ok(Volume3D::new(crop_dims, volume.spacing(), image)?)
}

/// Z-score normalization: zero mean, unit population SD (constant input
/// maps to all zeros). Statistics accumulate in double precision.
pub fn normalize_zscore(crop: &Volume3D) -> Volume3D {
    let n = crop.voxels().len() as f64;
    let mean = crop.voxels().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = crop
        .voxels()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let mut out = crop.clone();
    if var <= f64::MIN_POSITIVE {
        out.voxels_mut().fill(0.0);
        return out;
    }
    let inv_sd = 1.0 / var.sqrt();
    for v in out.voxels_mut() {
        *v = ((*v as f64 - mean) * inv_sd) as f32;
    }
    out
}

/// Map a crop into canonical right-muscle orientation: left-side crops flip
/// along x, right-side crops pass through.
pub fn mirror_to_canonical(image: &Volume3D, mask: &Mask3D, side: Side) -> (Volume3D, Mask3D) {
    match side {
        Side::Right => (image.clone(), mask.clone()),
        Side::Left => (image.flip_x(), mask.flip_x()),
    }
}
