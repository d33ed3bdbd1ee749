//! Direct 3D convolution kernels (forward and backward) plus the stride-2
//! transpose convolution, written as shift-and-accumulate row passes so the
//! innermost x loop runs over contiguous slices.
//!
//! Weight tensors are read as `(dst_channels, src_channels, kx, ky, kz)`
//! with kx fastest; bias tensors as `(1, dst_channels, 1, 1, 1)`.
//!
//! Parallelism splits work across output slabs only, so every element is
//! written by exactly one task in a fixed inner order: results are
//! bitwise identical to a serial run.

use super::tensor::{Element, Shape, Tensor};
use super::AutogradError;
use rayon::prelude::*;

/// Valid output positions `o` with `0 <= stride*o + k - pad < n_in`.
#[inline]
fn out_range(n_in: usize, n_out: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let max_src = n_in as i64 - 1 + pad as i64 - k as i64;
    if max_src < 0 {
        return (0, 0);
    }
    let hi = ((max_src as usize) / stride + 1).min(n_out);
    (lo, hi.max(lo))
}

pub(crate) fn conv_output_shape(
    x: &Shape,
    w: &Shape,
    bias: &Shape,
    stride: usize,
    pad: usize,
) -> Result<Shape, AutogradError> {
    if stride != 1 && stride != 2 {
        return Err(AutogradError::InvalidArgument(format!(
            "stride must be 1 or 2, got {stride}"
        )));
    }
    if w.channels != x.channels {
        return Err(AutogradError::ShapeMismatch(format!(
            "kernel expects {} input channels, tensor has {}",
            w.channels, x.channels
        )));
    }
    if bias.batch != 1 || bias.channels != w.batch || bias.spatial_len() != 1 {
        return Err(AutogradError::ShapeMismatch(format!(
            "bias shape {bias:?} does not match {} output channels",
            w.batch
        )));
    }
    let mut out = [0usize; 3];
    for (o, (n, k)) in out.iter_mut().zip([
        (x.nx, w.nx),
        (x.ny, w.ny),
        (x.nz, w.nz),
    ]) {
        if n % stride != 0 {
            return Err(AutogradError::ShapeMismatch(format!(
                "spatial dim {n} not divisible by stride {stride}"
            )));
        }
        let padded = n + 2 * pad;
        if padded < k || (padded - k) % stride != 0 {
            return Err(AutogradError::ShapeMismatch(format!(
                "kernel size {k} incompatible with dim {n} (pad {pad}, stride {stride})"
            )));
        }
        *o = (padded - k) / stride + 1;
    }
    Ok(Shape::new(x.batch, w.batch, out[0], out[1], out[2]))
}

/// Direct convolution. `pad` is symmetric zero padding on every spatial axis.
pub fn conv3d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, AutogradError> {
    let xs = x.shape();
    let ws = w.shape();
    let out_shape = conv_output_shape(&xs, &ws, &bias.shape(), stride, pad)?;
    let (src_ch, dst_ch) = (ws.channels, ws.batch);
    let (nx, ny) = (xs.nx, xs.ny);
    let (ox, oy) = (out_shape.nx, out_shape.ny);
    let in_spatial = xs.spatial_len();
    let out_spatial = out_shape.spatial_len();
    let kvol = ws.spatial_len();

    let mut out = Tensor::zeros(out_shape);
    let xd = x.data();
    let wd = w.data();
    let bd = bias.data();

    out.data_mut()
        .par_chunks_mut(out_spatial)
        .enumerate()
        .for_each(|(slab, out_slab)| {
            let b = slab / dst_ch;
            let dc = slab % dst_ch;
            out_slab.fill(bd[dc]);
            for sc in 0..src_ch {
                let x_slab = &xd[(b * src_ch + sc) * in_spatial..][..in_spatial];
                let w_base = (dc * src_ch + sc) * kvol;
                for kz in 0..ws.nz {
                    let (zlo, zhi) = out_range(xs.nz, out_shape.nz, kz, pad, stride);
                    for ky in 0..ws.ny {
                        let (ylo, yhi) = out_range(xs.ny, out_shape.ny, ky, pad, stride);
                        for kx in 0..ws.nx {
                            let (xlo, xhi) = out_range(xs.nx, out_shape.nx, kx, pad, stride);
                            if xlo >= xhi {
                                continue;
                            }
                            let wv = wd[w_base + kx + ws.nx * (ky + ws.ny * kz)];
                            for oz in zlo..zhi {
                                let sz = stride * oz + kz - pad;
                                for oyy in ylo..yhi {
                                    let sy = stride * oyy + ky - pad;
                                    let dst = &mut out_slab[(oz * oy + oyy) * ox + xlo
                                        ..(oz * oy + oyy) * ox + xhi];
                                    let src_base = (sz * ny + sy) * nx;
                                    if stride == 1 {
                                        let sx0 = xlo + kx - pad;
                                        let src = &x_slab[src_base + sx0..][..xhi - xlo];
                                        for (d, s) in dst.iter_mut().zip(src) {
                                            *d = *d + wv * *s;
                                        }
                                    } else {
                                        for (i, d) in dst.iter_mut().enumerate() {
                                            let sx = stride * (xlo + i) + kx - pad;
                                            *d = *d + wv * x_slab[src_base + sx];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Accumulate `d(out)/d(x)^T * g_out` into `g_x`.
pub fn conv3d_backward_input<T: Element>(
    g_x: &mut Tensor<T>,
    w: &Tensor<T>,
    g_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) {
    let xs = g_x.shape();
    let ws = w.shape();
    let os = g_out.shape();
    let (src_ch, dst_ch) = (ws.channels, ws.batch);
    let (nx, ny) = (xs.nx, xs.ny);
    let (ox, oy) = (os.nx, os.ny);
    let in_spatial = xs.spatial_len();
    let out_spatial = os.spatial_len();
    let kvol = ws.spatial_len();
    let wd = w.data();
    let gd = g_out.data();

    g_x.data_mut()
        .par_chunks_mut(in_spatial)
        .enumerate()
        .for_each(|(slab, gx_slab)| {
            let b = slab / src_ch;
            let sc = slab % src_ch;
            for dc in 0..dst_ch {
                let go_slab = &gd[(b * dst_ch + dc) * out_spatial..][..out_spatial];
                let w_base = (dc * src_ch + sc) * kvol;
                for kz in 0..ws.nz {
                    let (zlo, zhi) = out_range(xs.nz, os.nz, kz, pad, stride);
                    for ky in 0..ws.ny {
                        let (ylo, yhi) = out_range(xs.ny, os.ny, ky, pad, stride);
                        for kx in 0..ws.nx {
                            let (xlo, xhi) = out_range(xs.nx, os.nx, kx, pad, stride);
                            if xlo >= xhi {
                                continue;
                            }
                            let wv = wd[w_base + kx + ws.nx * (ky + ws.ny * kz)];
                            for oz in zlo..zhi {
                                let sz = stride * oz + kz - pad;
                                for oyy in ylo..yhi {
                                    let sy = stride * oyy + ky - pad;
                                    let go_row = &go_slab[(oz * oy + oyy) * ox + xlo
                                        ..(oz * oy + oyy) * ox + xhi];
                                    let dst_base = (sz * ny + sy) * nx;
                                    if stride == 1 {
                                        let sx0 = xlo + kx - pad;
                                        let dst = &mut gx_slab[dst_base + sx0..][..xhi - xlo];
                                        for (d, g) in dst.iter_mut().zip(go_row) {
                                            *d = *d + wv * *g;
                                        }
                                    } else {
                                        for (i, g) in go_row.iter().enumerate() {
                                            let sx = stride * (xlo + i) + kx - pad;
                                            gx_slab[dst_base + sx] =
                                                gx_slab[dst_base + sx] + wv * *g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

/// Accumulate weight and bias gradients for a convolution.
pub fn conv3d_backward_params<T: Element>(
    g_w: &mut Tensor<T>,
    g_b: &mut Tensor<T>,
    x: &Tensor<T>,
    g_out: &Tensor<T>,
    w_shape: Shape,
    stride: usize,
    pad: usize,
) {
    let xs = x.shape();
    let os = g_out.shape();
    let (src_ch, dst_ch) = (w_shape.channels, w_shape.batch);
    let (nx, ny) = (xs.nx, xs.ny);
    let (ox, oy) = (os.nx, os.ny);
    let in_spatial = xs.spatial_len();
    let out_spatial = os.spatial_len();
    let kvol = w_shape.spatial_len();
    let xd = x.data();
    let gd = g_out.data();

    g_w.data_mut()
        .par_chunks_mut(src_ch * kvol)
        .enumerate()
        .for_each(|(dc, gw_slab)| {
            for sc in 0..src_ch {
                for kz in 0..w_shape.nz {
                    let (zlo, zhi) = out_range(xs.nz, os.nz, kz, pad, stride);
                    for ky in 0..w_shape.ny {
                        let (ylo, yhi) = out_range(xs.ny, os.ny, ky, pad, stride);
                        for kx in 0..w_shape.nx {
                            let (xlo, xhi) = out_range(xs.nx, os.nx, kx, pad, stride);
                            if xlo >= xhi {
                                continue;
                            }
                            let mut acc = T::zero();
                            for b in 0..xs.batch {
                                let x_slab = &xd[(b * src_ch + sc) * in_spatial..][..in_spatial];
                                let go_slab =
                                    &gd[(b * dst_ch + dc) * out_spatial..][..out_spatial];
                                for oz in zlo..zhi {
                                    let sz = stride * oz + kz - pad;
                                    for oyy in ylo..yhi {
                                        let sy = stride * oyy + ky - pad;
                                        let go_row = &go_slab[(oz * oy + oyy) * ox + xlo
                                            ..(oz * oy + oyy) * ox + xhi];
                                        let src_base = (sz * ny + sy) * nx;
                                        if stride == 1 {
                                            let sx0 = xlo + kx - pad;
                                            let x_row = &x_slab[src_base + sx0..][..xhi - xlo];
                                            let mut dot = T::zero();
                                            for (g, s) in go_row.iter().zip(x_row) {
                                                dot = dot + *g * *s;
                                            }
                                            acc = acc + dot;
                                        } else {
                                            for (i, g) in go_row.iter().enumerate() {
                                                let sx = stride * (xlo + i) + kx - pad;
                                                acc = acc + *g * x_slab[src_base + sx];
                                            }
                                        }
                                    }
                                }
                            }
                            let wi = sc * kvol + kx + w_shape.nx * (ky + w_shape.ny * kz);
                            gw_slab[wi] = gw_slab[wi] + acc;
                        }
                    }
                }
            }
        });

    // bias gradient: plain per-channel sum over g_out
    let gb = g_b.data_mut();
    for b in 0..os.batch {
        for dc in 0..dst_ch {
            let slab = &gd[(b * dst_ch + dc) * out_spatial..][..out_spatial];
            let mut acc = T::zero();
            for &g in slab {
                acc = acc + g;
            }
            gb[dc] = gb[dc] + acc;
        }
    }
}

pub(crate) fn conv_transpose_output_shape(
    x: &Shape,
    w: &Shape,
    bias: &Shape,
) -> Result<Shape, AutogradError> {
    if w.nx != 2 || w.ny != 2 || w.nz != 2 {
        return Err(AutogradError::InvalidArgument(format!(
            "transpose convolution requires a 2x2x2 kernel, got {}x{}x{}",
            w.nx, w.ny, w.nz
        )));
    }
    if w.channels != x.channels {
        return Err(AutogradError::ShapeMismatch(format!(
            "transpose kernel expects {} input channels, tensor has {}",
            w.channels, x.channels
        )));
    }
    if bias.batch != 1 || bias.channels != w.batch || bias.spatial_len() != 1 {
        return Err(AutogradError::ShapeMismatch(format!(
            "bias shape {bias:?} does not match {} output channels",
            w.batch
        )));
    }
    Ok(Shape::new(x.batch, w.batch, 2 * x.nx, 2 * x.ny, 2 * x.nz))
}

/// Stride-2 transpose convolution: doubles every spatial dimension. The
/// linear map is the adjoint of the matching stride-2 convolution.
pub fn conv3d_transpose_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, AutogradError> {
    let xs = x.shape();
    let ws = w.shape();
    let out_shape = conv_transpose_output_shape(&xs, &ws, &bias.shape())?;
    let (src_ch, dst_ch) = (ws.channels, ws.batch);
    let in_spatial = xs.spatial_len();
    let out_spatial = out_shape.spatial_len();
    let (nx, ny, nz) = xs.spatial();
    let (ox, oy) = (out_shape.nx, out_shape.ny);

    let mut out = Tensor::zeros(out_shape);
    let xd = x.data();
    let wd = w.data();
    let bd = bias.data();

    out.data_mut()
        .par_chunks_mut(out_spatial)
        .enumerate()
        .for_each(|(slab, out_slab)| {
            let b = slab / dst_ch;
            let dc = slab % dst_ch;
            out_slab.fill(bd[dc]);
            for sc in 0..src_ch {
                let x_slab = &xd[(b * src_ch + sc) * in_spatial..][..in_spatial];
                let w_base = (dc * src_ch + sc) * 8;
                for kz in 0..2 {
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let wv = wd[w_base + kx + 2 * (ky + 2 * kz)];
                            for z in 0..nz {
                                for y in 0..ny {
                                    let src = &x_slab[(z * ny + y) * nx..][..nx];
                                    let drow =
                                        ((2 * z + kz) * oy + (2 * y + ky)) * ox + kx;
                                    let dst = &mut out_slab[drow..drow + 2 * nx - 1];
                                    for (d, s) in dst.iter_mut().step_by(2).zip(src) {
                                        *d = *d + wv * *s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

pub fn conv3d_transpose_backward_input<T: Element>(
    g_x: &mut Tensor<T>,
    w: &Tensor<T>,
    g_out: &Tensor<T>,
) {
    let xs = g_x.shape();
    let ws = w.shape();
    let os = g_out.shape();
    let (src_ch, dst_ch) = (ws.channels, ws.batch);
    let in_spatial = xs.spatial_len();
    let out_spatial = os.spatial_len();
    let (nx, ny, nz) = xs.spatial();
    let (ox, oy) = (os.nx, os.ny);
    let wd = w.data();
    let gd = g_out.data();

    g_x.data_mut()
        .par_chunks_mut(in_spatial)
        .enumerate()
        .for_each(|(slab, gx_slab)| {
            let b = slab / src_ch;
            let sc = slab % src_ch;
            for dc in 0..dst_ch {
                let go_slab = &gd[(b * dst_ch + dc) * out_spatial..][..out_spatial];
                let w_base = (dc * src_ch + sc) * 8;
                for kz in 0..2 {
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let wv = wd[w_base + kx + 2 * (ky + 2 * kz)];
                            for z in 0..nz {
                                for y in 0..ny {
                                    let dst = &mut gx_slab[(z * ny + y) * nx..][..nx];
                                    let srow =
                                        ((2 * z + kz) * oy + (2 * y + ky)) * ox + kx;
                                    let src = &go_slab[srow..srow + 2 * nx - 1];
                                    for (d, g) in dst.iter_mut().zip(src.iter().step_by(2)) {
                                        *d = *d + wv * *g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
}

pub fn conv3d_transpose_backward_params<T: Element>(
    g_w: &mut Tensor<T>,
    g_b: &mut Tensor<T>,
    x: &Tensor<T>,
    g_out: &Tensor<T>,
    w_shape: Shape,
) {
    let xs = x.shape();
    let os = g_out.shape();
    let (src_ch, dst_ch) = (w_shape.channels, w_shape.batch);
    let in_spatial = xs.spatial_len();
    let out_spatial = os.spatial_len();
    let (nx, ny, nz) = xs.spatial();
    let (ox, oy) = (os.nx, os.ny);
    let xd = x.data();
    let gd = g_out.data();

    g_w.data_mut()
        .par_chunks_mut(src_ch * 8)
        .enumerate()
        .for_each(|(dc, gw_slab)| {
            for sc in 0..src_ch {
                for kz in 0..2 {
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let mut acc = T::zero();
                            for b in 0..xs.batch {
                                let x_slab = &xd[(b * src_ch + sc) * in_spatial..][..in_spatial];
                                let go_slab =
                                    &gd[(b * dst_ch + dc) * out_spatial..][..out_spatial];
                                for z in 0..nz {
                                    for y in 0..ny {
                                        let x_row = &x_slab[(z * ny + y) * nx..][..nx];
                                        let grow =
                                            ((2 * z + kz) * oy + (2 * y + ky)) * ox + kx;
                                        let g_row = &go_slab[grow..grow + 2 * nx - 1];
                                        let mut dot = T::zero();
                                        for (s, g) in x_row.iter().zip(g_row.iter().step_by(2)) {
                                            dot = dot + *s * *g;
                                        }
                                        acc = acc + dot;
                                    }
                                }
                            }
                            let wi = sc * 8 + kx + 2 * (ky + 2 * kz);
                            gw_slab[wi] = gw_slab[wi] + acc;
                        }
                    }
                }
            }
        });

    let gb = g_b.data_mut();
    for b in 0..os.batch {
        for dc in 0..dst_ch {
            let slab = &gd[(b * dst_ch + dc) * out_spatial..][..out_spatial];
            let mut acc = T::zero();
            for &g in slab {
                acc = acc + g;
            }
            gb[dc] = gb[dc] + acc;
        }
    }
}
