//! Dense row-major tensors generic over the floating-point scalar.
//!
//! The substrate trains in `f32` for speed and re-runs gradient checks in
//! `f64`, so every kernel is written against the [`Scalar`] trait instead of
//! a concrete float type. Tensors are plain `Vec`-backed buffers with a
//! shape; all layout conventions (batch-major, channel-major within a
//! sample) live in the layer kernels, not here.

use std::fmt::{Debug, Display};

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point scalar a model can be instantiated with.
///
/// The two implementations are `f32` (production training) and `f64`
/// (finite-difference gradient verification). Conversions through `f64`
/// guarantee both instantiations see bit-identical initial parameters.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from `f64` (exact for the `f64` impl).
    fn from_f64(value: f64) -> Self;
    /// Widening conversion to `f64` (exact for both impls).
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(value: f64) -> Self {
        value as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(value: f64) -> Self {
        value
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// A dense row-major tensor.
///
/// The element at multi-index `(i0, i1, ..)` lives at the flat offset
/// `i0 * stride0 + i1 * stride1 + ..` with strides derived right-to-left
/// from the shape. Activations carry a leading batch axis; parameters do
/// not.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// An all-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); len],
        }
    }

    /// Wraps an existing buffer, checking that its length matches the shape.
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "buffer of {} elements cannot have shape {:?} ({} elements)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// A tensor filled with a single value.
    pub fn full(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// The shape slice.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Whether the tensor holds no elements.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Read-only view of the flat buffer.
    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Mutable view of the flat buffer.
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Consumes the tensor, returning its flat buffer.
    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Size of the leading (batch) axis. Errors on rank-0 tensors.
    pub fn batch_size(&self) -> Result<usize> {
        self.shape
            .first()
            .copied()
            .ok_or_else(|| Error::Shape("rank-0 tensor has no batch axis".into()))
    }

    /// Returns a copy with a new shape holding the same number of elements.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Element-wise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts every element through `f64` into another scalar type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::from_f64(v.to_f64())).collect(),
        }
    }

    /// Squared Euclidean norm of the buffer, accumulated in `f64`.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|&v| v.to_f64() * v.to_f64()).sum()
    }
}

/// Stacks per-sample tensors of identical shape into one batch tensor.
///
/// Inputs of shape `[c, h, w]` become `[n, c, h, w]`; the sample order is
/// preserved. Errors on an empty slice or mismatched shapes.
pub fn stack_samples<S: Scalar>(samples: &[&Tensor<S>]) -> Result<Tensor<S>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty sample list".into()))?;
    let mut data = Vec::with_capacity(first.len() * samples.len());
    for sample in samples {
        if sample.shape() != first.shape() {
            return Err(Error::Shape(format!(
                "stacked samples disagree on shape: {:?} vs {:?}",
                first.shape(),
                sample.shape()
            )));
        }
        data.extend_from_slice(sample.data());
    }
    let mut shape = Vec::with_capacity(first.shape().len() + 1);
    shape.push(samples.len());
    shape.extend_from_slice(first.shape());
    Tensor::from_vec(&shape, data)
}

/// Splits a batch tensor back into per-sample tensors (inverse of
/// [`stack_samples`]).
pub fn unstack_samples<S: Scalar>(batch: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
    let n = batch.batch_size()?;
    let sample_shape: Vec<usize> = batch.shape()[1..].to_vec();
    let sample_len: usize = sample_shape.iter().product();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let slice = &batch.data()[i * sample_len..(i + 1) * sample_len];
        out.push(Tensor::from_vec(&sample_shape, slice.to_vec())?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_from_vec_and_accessors_agree() {
        let z = Tensor::<f32>::zeros(&[2, 3]);
        assert_eq!(z.shape(), &[2, 3]);
        assert_eq!(z.len(), 6);
        assert!(z.data().iter().all(|&v| v == 0.0));

        let t = Tensor::from_vec(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.batch_size().unwrap(), 2);
        assert!(Tensor::from_vec(&[2, 2], vec![1.0f64; 3]).is_err());
    }

    #[test]
    fn reshape_preserves_data_and_rejects_bad_counts() {
        let t = Tensor::from_vec(&[2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let r = t.reshaped(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(&[4, 2]).is_err());
    }

    #[test]
    fn cast_round_trips_through_f64() {
        let t = Tensor::from_vec(&[3], vec![1.5f32, -2.25, 0.125]).unwrap();
        let wide: Tensor<f64> = t.cast();
        let back: Tensor<f32> = wide.cast();
        assert_eq!(back, t);
    }

    #[test]
    fn stack_and_unstack_are_inverses() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(&[2, 2], vec![5.0f32, 6.0, 7.0, 8.0]).unwrap();
        let batch = stack_samples(&[&a, &b]).unwrap();
        assert_eq!(batch.shape(), &[2, 2, 2]);
        assert_eq!(batch.data()[4], 5.0);

        let split = unstack_samples(&batch).unwrap();
        assert_eq!(split, vec![a.clone(), b]);

        let odd = Tensor::<f32>::zeros(&[3]);
        assert!(stack_samples(&[&a, &odd]).is_err());
        assert!(stack_samples::<f32>(&[]).is_err());
    }
}
