//! Dense row-major tensors.
//!
//! Feature maps use the NHWC convention so each pixel's channel vector is
//! contiguous. Construction through [`Tensor::new`] validates finiteness;
//! [`Tensor::new_unchecked`] skips the scan and exists for the benchmark
//! path, which generates its own inputs.

mod linalg;
mod ops;

pub use linalg::*;
pub use ops::*;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Element = f64> {
    dims: Vec<usize>,
    data: Vec<T>,
}

/// Minimum element count before kernels fan out onto the rayon pool.
/// Below this the spawn/sync overhead exceeds the work.
#[cfg(feature = "parallel")]
pub(crate) const PAR_MIN_LEN: usize = 4096;

/// Applies `f` to equally sized output chunks, in parallel when the
/// `parallel` feature is on and the buffer is large enough.
///
/// Every chunk is produced independently and each chunk's arithmetic is
/// sequential, so results are bit-identical to the sequential fallback.
pub(crate) fn par_chunk_apply<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        if data.len() >= PAR_MIN_LEN && chunk < data.len() {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
    }
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

pub(crate) fn element_count(dims: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &d in dims {
        if d == 0 {
            return Err(Error::shape(format!("zero extent in dims {dims:?}")));
        }
        n = n
            .checked_mul(d)
            .ok_or_else(|| Error::shape(format!("extent overflow in dims {dims:?}")))?;
    }
    Ok(n)
}

impl<T: Element> Tensor<T> {
    /// Checked constructor: validates the element count and rejects
    /// non-finite values.
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expect = element_count(&dims)?;
        if expect != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} imply {expect} elements, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite_val()) {
            return Err(Error::domain(format!(
                "non-finite value {:?} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { dims, data })
    }

    /// Unchecked constructor for the benchmark path and internal kernels
    /// whose inputs are already validated.
    pub fn new_unchecked(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(element_count(&dims).unwrap(), data.len());
        Self { dims, data }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = element_count(&dims).expect("valid dims");
        Self {
            dims,
            data: vec![T::ZERO; n],
        }
    }

    pub fn ones(dims: Vec<usize>) -> Self {
        Self::full(dims, T::ONE)
    }

    pub fn full(dims: Vec<usize>, value: T) -> Self {
        let n = element_count(&dims).expect("valid dims");
        Self {
            dims,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dims: vec![1],
            data: vec![value],
        }
    }

    /// Uniform samples in `[lo, hi)` drawn from a deterministic stream.
    pub fn rand_uniform(dims: Vec<usize>, rng: &mut RngStream, lo: f64, hi: f64) -> Self {
        let n = element_count(&dims).expect("valid dims");
        let data = (0..n)
            .map(|_| T::from_f64(lo + rng.next_f64() * (hi - lo)))
            .collect();
        Self { dims, data }
    }

    /// Gaussian samples (Box-Muller over the deterministic stream).
    pub fn rand_normal(dims: Vec<usize>, rng: &mut RngStream, mean: f64, std: f64) -> Self {
        let n = element_count(&dims).expect("valid dims");
        let data = (0..n)
            .map(|_| T::from_f64(mean + std * rng.next_normal()))
            .collect();
        Self { dims, data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Reinterprets the buffer under new dims with the same element count.
    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        let expect = element_count(&dims)?;
        if expect != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) to {dims:?} ({expect})",
                self.dims,
                self.data.len()
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite_val())
    }

    /// Flat index of a multi-index (row-major).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (i, &d) in idx.iter().enumerate() {
            debug_assert!(d < self.dims[i]);
            flat = flat * self.dims[i] + d;
        }
        flat
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let flat = self.flat_index(idx);
        self.data[flat] = value;
    }

    /// Lossy element-type conversion (used to move fixtures between the
    /// correctness and benchmark precisions).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub(crate) fn map(&self, f: impl Fn(T) -> T + Sync) -> Tensor<T> {
        let mut out = self.clone();
        par_chunk_apply(&mut out.data, 1024, |i, chunk| {
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = f(self.data[i * 1024 + j]);
            }
        });
        out
    }
}
