//! Bounded random affine transforms: in-plane translations up to 6 voxels,
//! out-of-plane up to 24, with scaling of +-25% in-plane and +-50%
//! out-of-plane. Images resample trilinearly, masks nearest-neighbor;
//! samples falling outside the source crop are zero.

use super::PrepError;
use crate::voxgrid::{Mask3D, Volume3D};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub const TRANSLATION_IN_PLANE: f64 = 6.0;
pub const TRANSLATION_OUT_OF_PLANE: f64 = 24.0;
pub const SCALE_IN_PLANE: (f64, f64) = (0.75, 1.25);
pub const SCALE_OUT_OF_PLANE: (f64, f64) = (0.5, 1.5);

/// Translation (voxels) and per-axis scale of one augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl AffineParams {
    pub fn new(tx: f64, ty: f64, tz: f64, sx: f64, sy: f64, sz: f64) -> Result<Self, PrepError> {
        let ok = tx.abs() <= TRANSLATION_IN_PLANE
            && ty.abs() <= TRANSLATION_IN_PLANE
            && tz.abs() <= TRANSLATION_OUT_OF_PLANE
            && (SCALE_IN_PLANE.0..=SCALE_IN_PLANE.1).contains(&sx)
            && (SCALE_IN_PLANE.0..=SCALE_IN_PLANE.1).contains(&sy)
            && (SCALE_OUT_OF_PLANE.0..=SCALE_OUT_OF_PLANE.1).contains(&sz);
        if !ok {
            return Err(PrepError::InvalidArgument(format!(
                "affine parameters out of range: t=({tx}, {ty}, {tz}) s=({sx}, {sy}, {sz})"
            )));
        }
        Ok(Self {
            tx,
            ty,
            tz,
            sx,
            sy,
            sz,
        })
    }

    pub fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            tz: 0.0,
            sx: 1.0,
            sy: 1.0,
            sz: 1.0,
        }
    }

    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        Self {
            tx: rng.random_range(-TRANSLATION_IN_PLANE..=TRANSLATION_IN_PLANE),
            ty: rng.random_range(-TRANSLATION_IN_PLANE..=TRANSLATION_IN_PLANE),
            tz: rng.random_range(-TRANSLATION_OUT_OF_PLANE..=TRANSLATION_OUT_OF_PLANE),
            sx: rng.random_range(SCALE_IN_PLANE.0..=SCALE_IN_PLANE.1),
            sy: rng.random_range(SCALE_IN_PLANE.0..=SCALE_IN_PLANE.1),
            sz: rng.random_range(SCALE_OUT_OF_PLANE.0..=SCALE_OUT_OF_PLANE.1),
        }
    }
}

/// Draw parameters from `rng` and resample image and mask about the crop
/// center. Deterministic given the rng state.
pub fn random_affine(
    image: &Volume3D,
    mask: &Mask3D,
    rng: &mut ChaCha8Rng,
) -> Result<(Volume3D, Mask3D, AffineParams), PrepError> {
    let params = AffineParams::sample(rng);
    let (img, msk) = apply_affine(image, mask, &params)?;
    Ok((img, msk, params))
}

/// Resample under `out = scale * (src - center) + center + translation`:
/// each output voxel pulls from `src = (out - center - t) / s + center`.
pub fn apply_affine(
    image: &Volume3D,
    mask: &Mask3D,
    params: &AffineParams,
) -> Result<(Volume3D, Mask3D), PrepError> {
    if image.dims() != mask.dims() {
        return Err(PrepError::InvalidArgument(
            "image and mask dims differ".into(),
        ));
    }
    let dims = image.dims();
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let c = [
        (nx as f64 - 1.0) / 2.0,
        (ny as f64 - 1.0) / 2.0,
        (nz as f64 - 1.0) / 2.0,
    ];
    let t = [params.tx, params.ty, params.tz];
    let s = [params.sx, params.sy, params.sz];

    let mut out_img = vec![0.0f32; dims.len()];
    let mut out_msk = vec![0u8; dims.len()];
    let mut idx = 0usize;
    for z in 0..nz {
        let srcz = (z as f64 - c[2] - t[2]) / s[2] + c[2];
        for y in 0..ny {
            let srcy = (y as f64 - c[1] - t[1]) / s[1] + c[1];
            for x in 0..nx {
                let srcx = (x as f64 - c[0] - t[0]) / s[0] + c[0];

                // trilinear for the image
                let (fx, fy, fz) = (srcx.floor(), srcy.floor(), srcz.floor());
                let (wx, wy, wz) = (srcx - fx, srcy - fy, srcz - fz);
                let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
                let mut acc = 0.0f64;
                for (dz, wz_) in [(0i64, 1.0 - wz), (1, wz)] {
                    for (dy, wy_) in [(0i64, 1.0 - wy), (1, wy)] {
                        for (dx, wx_) in [(0i64, 1.0 - wx), (1, wx)] {
                            let w = wz_ * wy_ * wx_;
                            if w == 0.0 {
                                continue;
                            }
                            let (px, py, pz) = (ix + dx, iy + dy, iz + dz);
                            if dims.contains(px, py, pz) {
                                let v = image.voxels()
                                    [dims.index(px as usize, py as usize, pz as usize)];
                                acc += w * v as f64;
                            }
                        }
                    }
                }
                out_img[idx] = acc as f32;

                // nearest neighbor for the mask
                let (rx, ry, rz) = (srcx.round() as i64, srcy.round() as i64, srcz.round() as i64);
                if dims.contains(rx, ry, rz) {
                    out_msk[idx] =
                        mask.labels()[dims.index(rx as usize, ry as usize, rz as usize)];
                }
                idx += 1;
            }
        }
    }
    Ok((
        Volume3D::new(dims, image.spacing(), out_img)?,
        Mask3D::new(dims, mask.spacing(), out_msk)?,
    ))
}
