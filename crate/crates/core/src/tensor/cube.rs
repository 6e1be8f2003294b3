use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Element count above which element-wise kernels split across threads.
/// Results are bit-identical either way since every element is independent.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, bands: usize) -> Self {
        Shape { height, width, bands }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.bands
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.bands == 0 {
            return Err(Error::InvalidShape(format!("every extent must be positive, got {self}")));
        }
        Ok(())
    }

    /// Same spatial grid, different band count.
    pub const fn with_bands(&self, bands: usize) -> Self {
        Shape { height: self.height, width: self.width, bands }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.bands)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    Frobenius,
    /// Sum over pixels of the Euclidean norm of each spectral tube.
    L21,
}

/// Dense real-valued `H × W × B` tensor in band-fastest layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Cube {
    shape: Shape,
    data: Vec<f64>,
}

impl Cube {
    pub fn zeros(shape: Shape) -> Self {
        Cube { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Cube { shape, data: vec![value; shape.len()] }
    }

    /// Builds a cube from external values, rejecting empty shapes, length
    /// mismatches and non-finite entries.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::InvalidShape(format!("{shape} needs {} values, got {}", shape.len(), data.len())));
        }
        if let Some(offset) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { offset });
        }
        Ok(Cube { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for i in 0..shape.height {
            for j in 0..shape.width {
                for k in 0..shape.bands {
                    data.push(f(i, j, k));
                }
            }
        }
        Cube { shape, data }
    }

    /// Wraps internally produced data without the finiteness scan.
    pub(crate) fn from_raw(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Cube { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape.width + j) * self.shape.bands + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn tube(&self, i: usize, j: usize) -> &[f64] {
        let start = self.offset(i, j, 0);
        &self.data[start..start + self.shape.bands]
    }

    pub fn tubes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.shape.bands)
    }

    pub fn tubes_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.shape.bands)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &Cube) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch { expected: self.shape, found: other.shape });
        }
        Ok(())
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L1 => self.data.iter().map(|v| v.abs()).sum(),
            NormKind::Frobenius => self.data.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormKind::L21 => self.tubes().map(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt()).sum(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.norm(NormKind::Frobenius)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean inner product. Panics on shape mismatch.
    pub fn dot(&self, other: &Cube) -> f64 {
        assert_eq!(self.shape, other.shape, "dot of mismatched cubes");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Cube {
        let data = if self.data.len() >= PAR_THRESHOLD {
            self.data.par_iter().map(|&v| f(v)).collect()
        } else {
            self.data.iter().map(|&v| f(v)).collect()
        };
        Cube::from_raw(self.shape, data)
    }

    /// Element-wise combination of two same-shaped cubes. Panics on mismatch.
    pub fn zip_map(&self, other: &Cube, f: impl Fn(f64, f64) -> f64 + Sync) -> Cube {
        assert_eq!(self.shape, other.shape, "zip_map of mismatched cubes");
        let data = if self.data.len() >= PAR_THRESHOLD {
            self.data.par_iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect()
        } else {
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect()
        };
        Cube::from_raw(self.shape, data)
    }

    pub fn zip_apply(&mut self, other: &Cube, f: impl Fn(&mut f64, f64) + Sync) {
        assert_eq!(self.shape, other.shape, "zip_apply of mismatched cubes");
        if self.data.len() >= PAR_THRESHOLD {
            self.data.par_iter_mut().zip(&other.data).for_each(|(a, &b)| f(a, b));
        } else {
            self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| f(a, b));
        }
    }

    pub fn add(&self, other: &Cube) -> Cube {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Cube) -> Cube {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Cube {
        self.map(|v| c * v)
    }

    pub fn add_assign(&mut self, other: &Cube) {
        self.zip_apply(other, |a, b| *a += b);
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Cube) -> Cube {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Global min-max scaling to `[0, 1]`; a constant cube becomes zeros.
    pub fn unit_range(&self) -> Cube {
        let lo = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            let span = hi - lo;
            self.map(|v| (v - lo) / span)
        } else {
            Cube::zeros(self.shape)
        }
    }
}
