//! Dense N-d value storage for the differentiation engine.
//!
//! Every tensor carries the fixed five-axis shape `(batch, channels, x, y,
//! z)` with x fastest in memory, matching the voxel grid layout. Convolution
//! weights reuse the same storage with the axes read as `(dst_channels,
//! src_channels, kx, ky, kz)`.

use super::AutogradError;
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Scalar element type of the engine: f32 for training storage, f64 for
/// finite-difference verification.
pub trait Element:
    Float + FromPrimitive + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static
{
    const DTYPE: &'static str;
}

impl Element for f32 {
    const DTYPE: &'static str = "f32";
}

impl Element for f64 {
    const DTYPE: &'static str = "f64";
}

/// Convert an f64 constant into the element type.
#[inline]
pub fn elem<T: Element>(v: f64) -> T {
    T::from_f64(v).expect("f64 constant representable in element type")
}

/// Five-axis shape `(batch, channels, nx, ny, nz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            batch,
            channels,
            nx,
            ny,
            nz,
        }
    }

    pub fn scalar() -> Self {
        Self::new(1, 1, 1, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Voxels in one (batch, channel) slab.
    pub fn spatial_len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn spatial(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn same_spatial(&self, other: &Shape) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.nz == other.nz
    }

    /// Linear index; x fastest, then y, z, channel, batch.
    #[inline]
    pub fn at(&self, b: usize, c: usize, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(
            b < self.batch && c < self.channels && x < self.nx && y < self.ny && z < self.nz
        );
        x + self.nx * (y + self.ny * (z + self.nz * (c + self.channels * b)))
    }
}

/// Value tensor; gradients and graph linkage live on the tape, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self, AutogradError> {
        if data.len() != shape.len() {
            return Err(AutogradError::ShapeMismatch(format!(
                "shape {shape:?} wants {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Self {
            shape,
            data: (0..shape.len()).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, x: usize, y: usize, z: usize) -> T {
        self.data[self.shape.at(b, c, x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, x: usize, y: usize, z: usize, v: T) {
        let i = self.shape.at(b, c, x, y, z);
        self.data[i] = v;
    }

    /// Extract the single value of a scalar-shaped tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() requires a scalar tensor");
        self.data[0]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Convert elements through f64 (lossy for f64 -> f32).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| elem(v.to_f64().unwrap()))
                .collect(),
        }
    }
}
