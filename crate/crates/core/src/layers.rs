//! Layer primitives of the toy saliency networks, each with an exact
//! backward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::exp;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerPrimitive {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Sigmoid,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    /// Used only to produce the half-resolution input of a coarse stream.
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    /// Nearest-neighbour upsampling by a factor of two.
    UpsampleNearest,
    /// Channel concatenation of the listed layer outputs, in order.
    Concat {
        sources: Vec<usize>,
    },
}

impl fmt::Display for LayerPrimitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerPrimitive::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv2d({in_channels}->{out_channels}, k={kernel}, s={stride}, p={padding})"
            ),
            LayerPrimitive::Relu => f.write_str("relu"),
            LayerPrimitive::Sigmoid => f.write_str("sigmoid"),
            LayerPrimitive::MaxPool { kernel, stride } => write!(f, "maxpool(k={kernel}, s={stride})"),
            LayerPrimitive::AvgPool { kernel, stride } => write!(f, "avgpool(k={kernel}, s={stride})"),
            LayerPrimitive::UpsampleNearest => f.write_str("upsample-nearest(x2)"),
            LayerPrimitive::Concat { sources } => write!(f, "concat{sources:?}"),
        }
    }
}

/// Weight `out×in×k×k` and bias `out` of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvParams {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvParams {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }
}

/// Gradients produced by [`LayerPrimitive::backward`].
#[derive(Debug, Clone)]
pub struct LayerGrads {
    /// One gradient per forward input, in input order.
    pub inputs: Vec<Tensor>,
    pub params: Option<ConvParams>,
}

fn conv_out(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (input + 2 * padding)
        .checked_sub(kernel)
        .map(|span| span / stride + 1)
}

fn mismatch(layer: &LayerPrimitive, expected: Vec<usize>, actual: &[usize]) -> Error {
    Error::ShapeMismatch {
        context: format!("{layer}"),
        expected,
        actual: actual.to_vec(),
    }
}

impl LayerPrimitive {
    pub fn is_conv(&self) -> bool {
        matches!(self, LayerPrimitive::Conv2d { .. })
    }

    /// Kernel size and stride seen by the receptive-field recursion.
    /// Element-wise layers and concat contribute `(1, 1)`.
    pub fn window(&self) -> (usize, usize) {
        match *self {
            LayerPrimitive::Conv2d { kernel, stride, .. }
            | LayerPrimitive::MaxPool { kernel, stride }
            | LayerPrimitive::AvgPool { kernel, stride } => (kernel, stride),
            _ => (1, 1),
        }
    }

    pub fn validate(&self) -> core::result::Result<(), String> {
        match *self {
            LayerPrimitive::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if kernel == 0 || stride == 0 {
                    return Err("kernel and stride must be at least 1".into());
                }
                if in_channels == 0 || out_channels == 0 {
                    return Err("channel counts must be positive".into());
                }
            }
            LayerPrimitive::MaxPool { kernel, stride } | LayerPrimitive::AvgPool { kernel, stride } => {
                if kernel == 0 || stride == 0 {
                    return Err("kernel and stride must be at least 1".into());
                }
            }
            LayerPrimitive::Concat { ref sources } => {
                if sources.is_empty() {
                    return Err("concat needs at least one source".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for the given input shapes, or a diagnostic naming the
    /// layer and the offending shapes.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        self.validate().map_err(|reason| Error::InvalidLayer { index: 0, reason })?;
        if let LayerPrimitive::Concat { sources } = self {
            if inputs.len() != sources.len() {
                return Err(Error::invalid(format!(
                    "{self}: expected {} inputs, got {}",
                    sources.len(),
                    inputs.len()
                )));
            }
            let first = inputs[0];
            if first.len() != 3 {
                return Err(mismatch(self, vec![0, 0, 0], first));
            }
            let mut channels = 0;
            for s in inputs {
                if s.len() != 3 || s[1..] != first[1..] {
                    return Err(mismatch(self, vec![s.first().copied().unwrap_or(0), first[1], first[2]], s));
                }
                channels += s[0];
            }
            return Ok(vec![channels, first[1], first[2]]);
        }
        if inputs.len() != 1 {
            return Err(Error::invalid(format!("{self}: expected one input, got {}", inputs.len())));
        }
        let shape = inputs[0];
        let [c, h, w] = match *shape {
            [c, h, w] => [c, h, w],
            _ => return Err(mismatch(self, vec![0, 0, 0], shape)),
        };
        match *self {
            LayerPrimitive::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if c != in_channels {
                    return Err(mismatch(self, vec![in_channels, h, w], shape));
                }
                match (conv_out(h, kernel, stride, padding), conv_out(w, kernel, stride, padding)) {
                    (Some(oh), Some(ow)) => Ok(vec![out_channels, oh, ow]),
                    _ => Err(mismatch(self, vec![in_channels, kernel, kernel], shape)),
                }
            }
            LayerPrimitive::MaxPool { kernel, stride } | LayerPrimitive::AvgPool { kernel, stride } => {
                match (conv_out(h, kernel, stride, 0), conv_out(w, kernel, stride, 0)) {
                    (Some(oh), Some(ow)) => Ok(vec![c, oh, ow]),
                    _ => Err(mismatch(self, vec![c, kernel, kernel], shape)),
                }
            }
            LayerPrimitive::UpsampleNearest => Ok(vec![c, 2 * h, 2 * w]),
            _ => Ok(shape.to_vec()),
        }
    }

    fn check_params<'a>(&self, params: Option<&'a ConvParams>) -> Result<&'a ConvParams> {
        let LayerPrimitive::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } = *self
        else {
            unreachable!("check_params on non-conv layer")
        };
        let p = params.ok_or_else(|| Error::invalid(format!("{self}: missing weights")))?;
        let expected = [out_channels, in_channels, kernel, kernel];
        if p.weight.shape() != expected {
            return Err(mismatch(self, expected.to_vec(), p.weight.shape()));
        }
        if p.bias.shape() != [out_channels] {
            return Err(mismatch(self, vec![out_channels], p.bias.shape()));
        }
        Ok(p)
    }

    pub fn forward(&self, params: Option<&ConvParams>, inputs: &[&Tensor]) -> Result<Tensor> {
        let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
        let out_shape = self.output_shape(&shapes)?;
        let out = match *self {
            LayerPrimitive::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let p = self.check_params(params)?;
                conv_forward(inputs[0], p, kernel, stride, padding, &out_shape)
            }
            LayerPrimitive::Relu => inputs[0].map(|x| x.max(0.0)),
            LayerPrimitive::Sigmoid => inputs[0].map(sigmoid),
            LayerPrimitive::MaxPool { kernel, stride } => {
                let mut out = Tensor::zeros(&out_shape);
                pool_each(inputs[0], kernel, stride, &out_shape, |o, window| {
                    out.data_mut()[o] = inputs[0].data()[argmax(inputs[0].data(), window)];
                });
                out
            }
            LayerPrimitive::AvgPool { kernel, stride } => {
                let mut out = Tensor::zeros(&out_shape);
                let area = (kernel * kernel) as f64;
                pool_each(inputs[0], kernel, stride, &out_shape, |o, window| {
                    out.data_mut()[o] = window.map(|i| inputs[0].data()[i]).sum::<f64>() / area;
                });
                out
            }
            LayerPrimitive::UpsampleNearest => {
                let (c, h, w) = inputs[0].dims3()?;
                let src = inputs[0].data();
                Tensor::from_fn(&out_shape, |i| {
                    let x = i % (2 * w);
                    let y = (i / (2 * w)) % (2 * h);
                    let ch = i / (4 * h * w);
                    debug_assert!(ch < c);
                    src[(ch * h + y / 2) * w + x / 2]
                })
            }
            LayerPrimitive::Concat { .. } => {
                let mut data = Vec::with_capacity(out_shape.iter().product());
                for t in inputs {
                    data.extend_from_slice(t.data());
                }
                Tensor::new(out_shape, data)?
            }
        };
        Ok(out)
    }

    /// Backward pass given the exact inputs of the matching forward call.
    /// Weight gradients are only computed when `want_params` is set.
    pub fn backward(
        &self,
        params: Option<&ConvParams>,
        inputs: &[&Tensor],
        grad_out: &Tensor,
        want_params: bool,
    ) -> Result<LayerGrads> {
        let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
        let out_shape = self.output_shape(&shapes)?;
        if grad_out.shape() != out_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                context: format!("{self} backward"),
                expected: out_shape,
                actual: grad_out.shape().to_vec(),
            });
        }
        let x = inputs[0];
        let single = |g: Tensor| LayerGrads {
            inputs: vec![g],
            params: None,
        };
        Ok(match *self {
            LayerPrimitive::Conv2d {
                kernel,
                stride,
                padding,
                ..
            } => {
                let p = self.check_params(params)?;
                let gin = conv_backward_input(x, p, grad_out, kernel, stride, padding);
                let gp = want_params.then(|| conv_backward_params(x, p, grad_out, kernel, stride, padding));
                LayerGrads {
                    inputs: vec![gin],
                    params: gp,
                }
            }
            LayerPrimitive::Relu => single(x.zip_map(grad_out, |v, g| if v > 0.0 { g } else { 0.0 })?),
            LayerPrimitive::Sigmoid => single(x.zip_map(grad_out, |v, g| {
                let s = sigmoid(v);
                g * s * (1.0 - s)
            })?),
            LayerPrimitive::MaxPool { kernel, stride } => {
                let mut gin = Tensor::zeros(x.shape());
                pool_each(x, kernel, stride, &out_shape, |o, window| {
                    gin.data_mut()[argmax(x.data(), window)] += grad_out.data()[o];
                });
                single(gin)
            }
            LayerPrimitive::AvgPool { kernel, stride } => {
                let mut gin = Tensor::zeros(x.shape());
                let area = (kernel * kernel) as f64;
                pool_each(x, kernel, stride, &out_shape, |o, window| {
                    let g = grad_out.data()[o] / area;
                    for i in window {
                        gin.data_mut()[i] += g;
                    }
                });
                single(gin)
            }
            LayerPrimitive::UpsampleNearest => {
                let (c, h, w) = x.dims3()?;
                let g = grad_out.data();
                let mut gin = Tensor::zeros(x.shape());
                let gd = gin.data_mut();
                for ch in 0..c {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            gd[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
                single(gin)
            }
            LayerPrimitive::Concat { .. } => {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(inputs.len());
                for t in inputs {
                    let n = t.len();
                    grads.push(Tensor::new(
                        t.shape().to_vec(),
                        grad_out.data()[offset..offset + n].to_vec(),
                    )?);
                    offset += n;
                }
                LayerGrads {
                    inputs: grads,
                    params: None,
                }
            }
        })
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// First (row-major) index holding the window maximum.
fn argmax(data: &[f64], window: impl Iterator<Item = usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for i in window {
        if best == usize::MAX || data[i] > best_v {
            best = i;
            best_v = data[i];
        }
    }
    best
}

/// Calls `f(output_index, input_indices_of_window)` for every pooling window.
fn pool_each<F>(x: &Tensor, kernel: usize, stride: usize, out_shape: &[usize], mut f: F)
where
    F: FnMut(usize, &mut dyn Iterator<Item = usize>),
{
    let (_, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w;
                let mut it = (0..kernel).flat_map(move |ky| {
                    (0..kernel).map(move |kx| base + (oy * stride + ky) * w + ox * stride + kx)
                });
                f((ch * oh + oy) * ow + ox, &mut it);
            }
        }
    }
}

/// Output columns `ox` whose input column `ox*stride + kx - padding` lies in `[0, w)`.
fn valid_range(out_len: usize, in_len: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    // ox*stride + k >= padding  and  ox*stride + k - padding < in_len
    let lo = if k >= padding { 0 } else { (padding - k).div_ceil(stride) };
    let hi_excl = if in_len + padding > k {
        (in_len + padding - k - 1) / stride + 1
    } else {
        0
    };
    (lo.min(out_len), hi_excl.min(out_len).max(lo.min(out_len)))
}

fn conv_forward(
    x: &Tensor,
    p: &ConvParams,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_shape: &[usize],
) -> Tensor {
    let (ic_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oc_n, oh, ow) = (out_shape[0], out_shape[1], out_shape[2]);
    let wt = p.weight.data();
    let xd = x.data();
    let mut out = vec![0.0; oc_n * oh * ow];
    let (ylo, yhi) = (0..kernel)
        .map(|k| valid_range(oh, h, k, stride, padding))
        .fold((Vec::new(), Vec::new()), |(mut a, mut b), (lo, hi)| {
            a.push(lo);
            b.push(hi);
            (a, b)
        });
    let xr: Vec<(usize, usize)> = (0..kernel).map(|k| valid_range(ow, w, k, stride, padding)).collect();
    for oc in 0..oc_n {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(p.bias.data()[oc]);
        for ic in 0..ic_n {
            let src = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let wv = wt[((oc * ic_n + ic) * kernel + ky) * kernel + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = xr[kx];
                    for oy in ylo[ky]..yhi[ky] {
                        let iy = oy * stride + ky - padding;
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        let irow = &src[iy * w..(iy + 1) * w];
                        if stride == 1 {
                            let ix0 = xlo + kx - padding;
                            for (o, i) in orow[xlo..xhi].iter_mut().zip(&irow[ix0..ix0 + (xhi - xlo)]) {
                                *o += wv * *i;
                            }
                        } else {
                            for ox in xlo..xhi {
                                orow[ox] += wv * irow[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(out_shape.to_vec(), out).expect("conv output shape")
}

fn conv_backward_input(
    x: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let (ic_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oc_n, oh, ow) = (grad_out.shape()[0], grad_out.shape()[1], grad_out.shape()[2]);
    let wt = p.weight.data();
    let gd = grad_out.data();
    let mut gin = vec![0.0; ic_n * h * w];
    for ic in 0..ic_n {
        let dst = &mut gin[ic * h * w..(ic + 1) * h * w];
        for oc in 0..oc_n {
            let g = &gd[oc * oh * ow..(oc + 1) * oh * ow];
            for ky in 0..kernel {
                let (ylo, yhi) = valid_range(oh, h, ky, stride, padding);
                for kx in 0..kernel {
                    let wv = wt[((oc * ic_n + ic) * kernel + ky) * kernel + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = valid_range(ow, w, kx, stride, padding);
                    for oy in ylo..yhi {
                        let iy = oy * stride + ky - padding;
                        let grow = &g[oy * ow..(oy + 1) * ow];
                        let drow = &mut dst[iy * w..(iy + 1) * w];
                        if stride == 1 {
                            let ix0 = xlo + kx - padding;
                            for (d, s) in drow[ix0..ix0 + (xhi - xlo)].iter_mut().zip(&grow[xlo..xhi]) {
                                *d += wv * *s;
                            }
                        } else {
                            for ox in xlo..xhi {
                                drow[ox * stride + kx - padding] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), gin).expect("conv grad shape")
}

fn conv_backward_params(
    x: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> ConvParams {
    let (ic_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oc_n, oh, ow) = (grad_out.shape()[0], grad_out.shape()[1], grad_out.shape()[2]);
    let xd = x.data();
    let gd = grad_out.data();
    let mut gw = vec![0.0; p.weight.len()];
    let mut gb = vec![0.0; oc_n];
    for oc in 0..oc_n {
        let g = &gd[oc * oh * ow..(oc + 1) * oh * ow];
        gb[oc] = g.iter().sum();
        for ic in 0..ic_n {
            let src = &xd[ic * h * w..(ic + 1) * h * w];
            for ky in 0..kernel {
                let (ylo, yhi) = valid_range(oh, h, ky, stride, padding);
                for kx in 0..kernel {
                    let (xlo, xhi) = valid_range(ow, w, kx, stride, padding);
                    let mut acc = 0.0;
                    for oy in ylo..yhi {
                        let iy = oy * stride + ky - padding;
                        let grow = &g[oy * ow..(oy + 1) * ow];
                        let irow = &src[iy * w..(iy + 1) * w];
                        if stride == 1 {
                            let ix0 = xlo + kx - padding;
                            acc += grow[xlo..xhi]
                                .iter()
                                .zip(&irow[ix0..ix0 + (xhi - xlo)])
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        } else {
                            for ox in xlo..xhi {
                                acc += grow[ox] * irow[ox * stride + kx - padding];
                            }
                        }
                    }
                    gw[((oc * ic_n + ic) * kernel + ky) * kernel + kx] = acc;
                }
            }
        }
    }
    ConvParams {
        weight: Tensor::new(p.weight.shape().to_vec(), gw).expect("weight grad shape"),
        bias: Tensor::new(vec![oc_n], gb).expect("bias grad shape"),
    }
}

/// Min-max gradient normalization: `γ·(x − min)/(max − min + ε)`, in `[0, γ]`.
pub fn minmax_normalize(raw: &Tensor, gamma: f64, epsilon: f64) -> Result<Tensor> {
    check_scales(gamma, epsilon)?;
    let (lo, hi) = (raw.min(), raw.max());
    let denom = hi - lo + epsilon;
    Ok(raw.map(|x| (gamma * (x - lo) / denom).clamp(0.0, gamma)))
}

/// Sign-preserving alternative: `γ·x/(max|x| + ε)`, in `[−γ, γ]`.
pub fn signed_normalize(raw: &Tensor, gamma: f64, epsilon: f64) -> Result<Tensor> {
    check_scales(gamma, epsilon)?;
    let denom = raw.max_abs() + epsilon;
    Ok(raw.map(|x| (gamma * x / denom).clamp(-gamma, gamma)))
}

fn check_scales(gamma: f64, epsilon: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}
