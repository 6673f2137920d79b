//! Dense rank-4 `f32` tensors and the handful of differentiable operations the
//! super-resolution network is built from.
//!
//! Layout is always `(batch, channels, height, width)`, row-major with the
//! batch index varying slowest. Every forward operation has an explicit
//! backward counterpart; there is no tape. The model module wires them
//! together by hand.

pub mod adam;
mod conv;
mod ops;

pub use adam::AdamState;
pub use conv::{
    conv2d, conv2d_backward, conv2d_direct, conv2d_im2col, conv2d_with, ConvAlgorithm, ConvGrads,
    ConvKernel,
};
pub(crate) use ops::relu_in_place;
pub use ops::{
    concat_channels, mse_loss, mse_loss_backward, pixel_shuffle, pixel_unshuffle, relu,
    relu_backward, split_channels,
};

use crate::error::{ensure, Result};

/// `(batch, channels, height, width)`.
pub type Shape = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        ensure(data.len() == n, || {
            format!("shape {shape:?} needs {n} elements, got {}", data.len())
        })?;
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Flat index of `(b, c, y, x)`.
    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, ch, h, w] = self.shape;
        ((b * ch + c) * h + y) * w + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(b, c, y, x)]
    }

    /// Contiguous `channels * height * width` slice for one batch item.
    pub fn item(&self, b: usize) -> &[f32] {
        let n = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Replace the gradient buffer. Gradients are overwritten, never summed.
    pub fn set_grad(&mut self, grad: Vec<f32>) -> Result<()> {
        ensure(grad.len() == self.data.len(), || {
            format!(
                "gradient length {} does not match tensor length {}",
                grad.len(),
                self.data.len()
            )
        })?;
        self.grad = Some(grad);
        Ok(())
    }

    /// Reset the gradient buffer to zeros, allocating it if absent.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Data and gradient as a disjoint pair, for optimizers.
    pub(crate) fn data_and_grad_mut(&mut self) -> (&mut [f32], Option<&[f32]>) {
        (&mut self.data, self.grad.as_deref())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenate along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        ensure(!items.is_empty(), || "cannot stack zero tensors".into())?;
        let [_, c, h, w] = items[0].shape;
        let mut data = Vec::with_capacity(items.iter().map(Tensor::len).sum());
        let mut batch = 0;
        for t in items {
            ensure(t.shape[1..] == [c, h, w], || {
                format!(
                    "stack: shape {:?} does not match {:?}",
                    t.shape, items[0].shape
                )
            })?;
            batch += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec([batch, c, h, w], data)
    }

    /// One batch item as its own tensor.
    pub fn slice_batch(&self, b: usize) -> Tensor {
        let [_, c, h, w] = self.shape;
        Tensor {
            shape: [1, c, h, w],
            data: self.item(b).to_vec(),
            grad: None,
        }
    }

    /// Elementwise sum; shapes must agree.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        ensure(self.shape == other.shape, || {
            format!("add: shape {:?} vs {:?}", self.shape, other.shape)
        })?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape,
            data,
            grad: None,
        })
    }
}
