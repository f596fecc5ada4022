//! Dense row-major `f64` tensors.
//!
//! Feature maps, images, saliency maps and gradients all use the
//! channels-height-width layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    /// Builds a `c×h×w` tensor.
    pub fn chw(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![c, h, w], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Channel, height and width of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::invalid(format!(
                "expected a rank-3 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.plane_len();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.plane_len();
        &mut self.data[c * plane..(c + 1) * plane]
    }

    fn plane_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn same_shape(&self, other: &Tensor, context: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context: context.into(),
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, mut f: impl FnMut(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(other, "elementwise")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        self.map(|x| x * k)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|x| x.clamp(lo, hi))
    }

    /// Stacks the listed channels of a `c×h×w` tensor into `n×h×w`.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        let mut data = Vec::with_capacity(indices.len() * h * w);
        for &i in indices {
            if i >= c {
                return Err(Error::invalid(format!(
                    "channel {i} out of range for {c} channels"
                )));
            }
            data.extend_from_slice(self.channel(i));
        }
        Tensor::chw(indices.len(), h, w, data)
    }

    /// Inverse of [`Tensor::select_channels`]: places an `n×h×w` stack into a
    /// zero `c×h×w` tensor at the given channel positions.
    pub fn scatter_channels(&self, indices: &[usize], channels: usize) -> Result<Tensor> {
        let (n, h, w) = self.dims3()?;
        if n != indices.len() {
            return Err(Error::invalid("scatter index count differs from stack depth"));
        }
        let mut out = Tensor::zeros(&[channels, h, w]);
        for (k, &i) in indices.iter().enumerate() {
            if i >= channels {
                return Err(Error::invalid(format!(
                    "channel {i} out of range for {channels} channels"
                )));
            }
            for (dst, src) in out.channel_mut(i).iter_mut().zip(self.channel(k)) {
                *dst += *src;
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other, "accumulate")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }
}
