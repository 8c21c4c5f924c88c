//! A small reverse-mode network core: six layer kinds, exact backward passes, Adam, and a
//! finite-difference gradient checker.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32` and verifies
//! gradients in `f64`.

mod adam;
mod gradcheck;
mod layers;
mod network;
mod params;
mod spec;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_params, relative_error, GradCheckReport};
pub use network::{backward, forward, infer, Trace};
pub use params::{Param, ParameterSet};
pub use spec::{LayerSpec, NetworkSpec};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    Shape {
        layer: usize,
        kind: &'static str,
        detail: String,
    },
    #[error("input shape {got:?} does not match network input {expected:?}")]
    Input { got: Vec<usize>, expected: Vec<usize> },
    #[error("parameter sets are not congruent: {0}")]
    Incongruent(String),
    #[error("trace does not match this network or gradient: {0}")]
    StaleTrace(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
}

/// Floating-point element type of tensors and parameters.
pub trait Scalar:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// Checkpoint dtype code.
    const DTYPE: u8;
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: u8 = 0;
    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: u8 = 1;
    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor. The leading axis of network inputs and outputs is the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length must match shape {shape:?}"
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![T::zero(); n])
    }

    pub fn filled(shape: Vec<usize>, v: T) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![v; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Batch size (leading axis).
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn item(&self, n: usize) -> &[T] {
        let k = self.item_len();
        &self.data[n * k..(n + 1) * k]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Stacks equally shaped items along a new leading axis.
    pub fn stack(items: &[&[T]], item_shape: &[usize]) -> Self {
        let mut shape = vec![items.len()];
        shape.extend_from_slice(item_shape);
        let data = items.iter().flat_map(|s| s.iter().copied()).collect();
        Self::new(shape, data)
    }
}
