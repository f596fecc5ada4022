//! Threat models: layer graphs, weights, activation tracing and the
//! partial backward pass that stops at an attacked layer.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layers::{ConvParams, LayerPrimitive};
use crate::math::sqrt;
use crate::{Error, Result, Tensor};

/// Where a layer reads its (single) input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    /// Output of the layer immediately before (the image for layer 0).
    Previous,
    Image,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub op: LayerPrimitive,
    pub input: Input,
}

impl Layer {
    pub fn seq(op: LayerPrimitive) -> Self {
        Layer {
            op,
            input: Input::Previous,
        }
    }
}

/// Coarse/fine partition of a multi-stream model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Streams {
    pub fine: Vec<usize>,
    pub coarse: Vec<usize>,
    pub concat: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    /// `[channels, height, width]` of the input image.
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer>,
    pub streams: Option<Streams>,
    pub output: usize,
    /// The encoder/decoder bottleneck with the largest receptive field.
    pub context: usize,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        input_shape: [usize; 3],
        layers: Vec<Layer>,
        streams: Option<Streams>,
        context: usize,
    ) -> Result<Self> {
        let output = layers.len().checked_sub(1).ok_or_else(|| Error::invalid("model has no layers"))?;
        let spec = ModelSpec {
            name: name.into(),
            input_shape,
            layers,
            streams,
            output,
            context,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Input sources of layer `i`, as indices into the trace (`None` is the image).
    pub fn sources(&self, i: usize) -> Vec<Option<usize>> {
        match &self.layers[i].op {
            LayerPrimitive::Concat { sources } => sources.iter().map(|&s| Some(s)).collect(),
            _ => vec![match self.layers[i].input {
                Input::Previous => i.checked_sub(1),
                Input::Image => None,
                Input::Layer(j) => Some(j),
            }],
        }
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.layers[i].op.is_conv()).collect()
    }

    /// Layers an attack may target: every conv layer's activation output
    /// (the layer after the conv when it is element-wise), plus the output.
    pub fn attackable_layers(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .conv_layers()
            .into_iter()
            .map(|i| match self.layers.get(i + 1) {
                Some(l) if matches!(l.op, LayerPrimitive::Relu | LayerPrimitive::Sigmoid) => i + 1,
                _ => i,
            })
            .collect();
        if !out.contains(&self.output) {
            out.push(self.output);
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            layer
                .op
                .validate()
                .map_err(|reason| Error::InvalidLayer { index: i, reason })?;
            for s in self.sources(i).into_iter().flatten() {
                if s >= i {
                    return Err(Error::InvalidLayer {
                        index: i,
                        reason: format!("source layer {s} does not precede it"),
                    });
                }
            }
        }
        if self.context > self.output {
            return Err(Error::LayerOutOfRange {
                index: self.context,
                count: self.len(),
            });
        }
        if !matches!(self.layers[self.output].op, LayerPrimitive::Sigmoid) {
            return Err(Error::InvalidLayer {
                index: self.output,
                reason: "output layer must be a sigmoid".into(),
            });
        }
        let shapes = self.layer_shapes()?;
        if shapes[self.output][0] != 1 {
            return Err(Error::InvalidLayer {
                index: self.output,
                reason: format!("output must have one channel, has {}", shapes[self.output][0]),
            });
        }
        Ok(())
    }

    /// Statically predicted output shape of every layer.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let ins: Vec<&[usize]> = self
                .sources(i)
                .into_iter()
                .map(|s| match s {
                    Some(j) => shapes[j].as_slice(),
                    None => &self.input_shape[..],
                })
                .collect();
            let out = self.layers[i]
                .op
                .output_shape(&ins)
                .map_err(|e| in_layer(e, i))?;
            shapes.push(out);
        }
        Ok(shapes)
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.len() {
            return Err(Error::LayerOutOfRange {
                index: layer,
                count: self.len(),
            });
        }
        Ok(())
    }

    /// Receptive-field size and jump (input pixels per activation step) of a
    /// layer. Upsampling halves the jump.
    pub fn receptive_field(&self, layer: usize) -> Result<(usize, usize)> {
        self.check_layer(layer)?;
        let mut memo: Vec<(usize, usize)> = Vec::with_capacity(layer + 1);
        for i in 0..=layer {
            let (r_in, j_in) = self
                .sources(i)
                .into_iter()
                .map(|s| s.map_or((1, 1), |j| memo[j]))
                .fold((0, 0), |(r, j), (r2, j2)| (r.max(r2), j.max(j2)));
            let op = &self.layers[i].op;
            let (k, s) = op.window();
            let rf = r_in + (k - 1) * j_in;
            let jump = match op {
                LayerPrimitive::UpsampleNearest => (j_in / 2).max(1),
                _ => j_in * s,
            };
            memo.push((rf, jump));
        }
        Ok(memo[layer])
    }
}

fn in_layer(err: Error, index: usize) -> Error {
    match err {
        Error::ShapeMismatch {
            context,
            expected,
            actual,
        } => Error::ShapeMismatch {
            context: format!("layer {index} ({context})"),
            expected,
            actual,
        },
        Error::InvalidLayer { reason, .. } => Error::InvalidLayer { index, reason },
        other => other,
    }
}

/// Read access to convolution parameters, by layer index.
pub trait WeightSource {
    fn conv_params(&self, layer: usize) -> Option<&ConvParams>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub params: Vec<Option<ConvParams>>,
}

impl WeightSource for ModelWeights {
    fn conv_params(&self, layer: usize) -> Option<&ConvParams> {
        self.params.get(layer).and_then(Option::as_ref)
    }
}

impl ModelWeights {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self::build(spec, |i, o, k| ConvParams::zeros(i, o, k))
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in]` initialization of weights and biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(spec, |i, o, k| {
            let bound = 1.0 / sqrt((i * k * k) as f64);
            let mut p = ConvParams::zeros(i, o, k);
            for v in p.weight.data_mut().iter_mut().chain(p.bias.data_mut()) {
                *v = rng.gen_range(-bound..=bound);
            }
            p
        })
    }

    fn build(spec: &ModelSpec, mut f: impl FnMut(usize, usize, usize) -> ConvParams) -> Self {
        let params = spec
            .layers
            .iter()
            .map(|l| match l.op {
                LayerPrimitive::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => Some(f(in_channels, out_channels, kernel)),
                _ => None,
            })
            .collect();
        ModelWeights { params }
    }

    /// Checks every conv layer has parameters of the declared shape.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.params.len() != spec.len() {
            return Err(Error::invalid(format!(
                "weights cover {} layers, model has {}",
                self.params.len(),
                spec.len()
            )));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&self.params).enumerate() {
            if let LayerPrimitive::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } = layer.op
            {
                let p = p.as_ref().ok_or_else(|| Error::InvalidLayer {
                    index: i,
                    reason: "missing conv weights".into(),
                })?;
                let expect = [out_channels, in_channels, kernel, kernel];
                if p.weight.shape() != expect || p.bias.shape() != [out_channels] {
                    return Err(Error::ShapeMismatch {
                        context: format!("layer {i} weights"),
                        expected: expect.to_vec(),
                        actual: p.weight.shape().to_vec(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .flatten()
            .all(|p| p.weight.all_finite() && p.bias.all_finite())
    }
}

/// Wraps a [`WeightSource`] and records which layers were read.
pub struct AccessRecorder<'a, W: WeightSource> {
    inner: &'a W,
    touched: RefCell<Vec<usize>>,
}

impl<'a, W: WeightSource> AccessRecorder<'a, W> {
    pub fn new(inner: &'a W) -> Self {
        AccessRecorder {
            inner,
            touched: RefCell::new(Vec::new()),
        }
    }

    /// Sorted, deduplicated indices of layers whose weights were read.
    pub fn touched(&self) -> Vec<usize> {
        let mut t = self.touched.borrow().clone();
        t.sort_unstable();
        t.dedup();
        t
    }
}

impl<W: WeightSource> WeightSource for AccessRecorder<'_, W> {
    fn conv_params(&self, layer: usize) -> Option<&ConvParams> {
        self.touched.borrow_mut().push(layer);
        self.inner.conv_params(layer)
    }
}

/// Per-layer outputs of one forward pass, plus the image that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub image: Tensor,
    pub layers: Vec<Tensor>,
}

impl ActivationTrace {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn output(&self) -> &Tensor {
        self.layers.last().expect("empty trace")
    }

    fn source(&self, s: Option<usize>) -> &Tensor {
        s.map_or(&self.image, |j| &self.layers[j])
    }
}

pub(crate) fn check_image(spec: &ModelSpec, image: &Tensor) -> Result<()> {
    if image.shape() != spec.input_shape {
        return Err(Error::ShapeMismatch {
            context: format!("{} input image", spec.name),
            expected: spec.input_shape.to_vec(),
            actual: image.shape().to_vec(),
        });
    }
    if let Some(&bad) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::ImageRange(bad));
    }
    Ok(())
}

/// Runs the full model and records every layer output.
pub fn forward_trace<W: WeightSource>(spec: &ModelSpec, weights: &W, image: &Tensor) -> Result<ActivationTrace> {
    forward_until(spec, weights, image, spec.output)
}

/// Runs layers `0..=last` only. Weights of later layers are never read.
pub fn forward_until<W: WeightSource>(
    spec: &ModelSpec,
    weights: &W,
    image: &Tensor,
    last: usize,
) -> Result<ActivationTrace> {
    spec.check_layer(last)?;
    check_image(spec, image)?;
    let mut trace = ActivationTrace {
        image: image.clone(),
        layers: Vec::with_capacity(last + 1),
    };
    for i in 0..=last {
        let layer = &spec.layers[i];
        let params = if layer.op.is_conv() { weights.conv_params(i) } else { None };
        let inputs: Vec<&Tensor> = spec.sources(i).into_iter().map(|s| trace.source(s)).collect();
        let out = layer.op.forward(params, &inputs).map_err(|e| in_layer(e, i))?;
        trace.layers.push(out);
    }
    Ok(trace)
}

/// The model's saliency prediction for one image.
pub fn predict<W: WeightSource>(spec: &ModelSpec, weights: &W, image: &Tensor) -> Result<Tensor> {
    Ok(forward_trace(spec, weights, image)?.layers.pop().expect("non-empty model"))
}

/// Gradient of a scalar loss with respect to the image, given the loss
/// gradient at the output of `attacked`. Only layers `0..=attacked` are
/// visited; weights of later layers are never read.
pub fn grad_input_from_layer<W: WeightSource>(
    spec: &ModelSpec,
    weights: &W,
    trace: &ActivationTrace,
    attacked: usize,
    grad_at_layer: &Tensor,
) -> Result<Tensor> {
    Ok(backprop(spec, weights, trace, attacked, grad_at_layer, false)?.0)
}

/// Conventional backward pass from the model output: image gradient and
/// per-layer parameter gradients.
pub fn backward_full<W: WeightSource>(
    spec: &ModelSpec,
    weights: &W,
    trace: &ActivationTrace,
    grad_output: &Tensor,
) -> Result<(Tensor, Vec<Option<ConvParams>>)> {
    backprop(spec, weights, trace, spec.output, grad_output, true)
}

/// Backward pass from an arbitrary layer, with parameter gradients.
pub(crate) fn backward_from<W: WeightSource>(
    spec: &ModelSpec,
    weights: &W,
    trace: &ActivationTrace,
    from: usize,
    grad: &Tensor,
) -> Result<Vec<Option<ConvParams>>> {
    Ok(backprop(spec, weights, trace, from, grad, true)?.1)
}

fn backprop<W: WeightSource>(
    spec: &ModelSpec,
    weights: &W,
    trace: &ActivationTrace,
    from: usize,
    grad: &Tensor,
    want_params: bool,
) -> Result<(Tensor, Vec<Option<ConvParams>>)> {
    spec.check_layer(from)?;
    if trace.len() <= from {
        return Err(Error::invalid(format!(
            "trace holds {} layers, backward starts at {from}",
            trace.len()
        )));
    }
    if grad.shape() != trace.layers[from].shape() {
        return Err(Error::ShapeMismatch {
            context: format!("gradient at layer {from}"),
            expected: trace.layers[from].shape().to_vec(),
            actual: grad.shape().to_vec(),
        });
    }
    let mut grads: Vec<Option<Tensor>> = vec![None; from + 1];
    grads[from] = Some(grad.clone());
    let mut grad_image = Tensor::zeros(trace.image.shape());
    let mut param_grads: Vec<Option<ConvParams>> = vec![None; spec.len()];
    for i in (0..=from).rev() {
        let Some(g) = grads[i].take() else { continue };
        let layer = &spec.layers[i];
        let params = if layer.op.is_conv() { weights.conv_params(i) } else { None };
        let sources = spec.sources(i);
        let inputs: Vec<&Tensor> = sources.iter().map(|&s| trace.source(s)).collect();
        let lg = layer
            .op
            .backward(params, &inputs, &g, want_params)
            .map_err(|e| in_layer(e, i))?;
        param_grads[i] = lg.params;
        for (s, gin) in sources.into_iter().zip(lg.inputs) {
            match s {
                None => grad_image.add_assign(&gin)?,
                Some(j) => match &mut grads[j] {
                    Some(acc) => acc.add_assign(&gin)?,
                    slot @ None => *slot = Some(gin),
                },
            }
        }
    }
    Ok((grad_image, param_grads))
}

fn conv3(i: usize, o: usize) -> LayerPrimitive {
    LayerPrimitive::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 3,
        stride: 1,
        padding: 1,
    }
}

fn pool2() -> LayerPrimitive {
    LayerPrimitive::MaxPool { kernel: 2, stride: 2 }
}

fn encoder(first_input: Input) -> Vec<Layer> {
    vec![
        Layer {
            op: conv3(3, 16),
            input: first_input,
        },
        Layer::seq(LayerPrimitive::Relu),
        Layer::seq(pool2()),
        Layer::seq(conv3(16, 32)),
        Layer::seq(LayerPrimitive::Relu),
        Layer::seq(pool2()),
        Layer::seq(conv3(32, 64)),
        Layer::seq(LayerPrimitive::Relu),
    ]
}

fn decoder(in_channels: usize) -> Vec<Layer> {
    vec![
        Layer::seq(LayerPrimitive::UpsampleNearest),
        Layer::seq(conv3(in_channels, 16)),
        Layer::seq(LayerPrimitive::Relu),
        Layer::seq(LayerPrimitive::UpsampleNearest),
        Layer::seq(conv3(16, 1)),
        Layer::seq(LayerPrimitive::Sigmoid),
    ]
}

/// Single-stream encoder-decoder: three conv/relu blocks with two 2×2 max
/// pools, a 64-channel context layer at quarter resolution, and a two-stage
/// nearest-neighbour decoder ending in a sigmoid.
pub fn minisal_s(height: usize, width: usize) -> ModelSpec {
    let mut layers = encoder(Input::Previous);
    let context = layers.len() - 1;
    layers.extend(decoder(64));
    ModelSpec::new("MiniSal-S", [3, height, width], layers, None, context).expect("MiniSal-S is well formed")
}

/// Two-stream variant: the fine encoder sees the full image, the coarse
/// encoder a 2×2 average-pooled copy; the coarse context is upsampled to the
/// fine context resolution, the two are concatenated along channels and fed
/// to a shared decoder.
pub fn minisal_m(height: usize, width: usize) -> ModelSpec {
    let mut layers = encoder(Input::Previous);
    let fine: Vec<usize> = (0..layers.len()).collect();
    let fine_context = layers.len() - 1;
    layers.push(Layer {
        op: LayerPrimitive::AvgPool { kernel: 2, stride: 2 },
        input: Input::Image,
    });
    layers.extend(encoder(Input::Previous));
    layers.push(Layer::seq(LayerPrimitive::UpsampleNearest));
    let coarse: Vec<usize> = (fine.len()..layers.len()).collect();
    let concat = layers.len();
    layers.push(Layer::seq(LayerPrimitive::Concat {
        sources: vec![fine_context, concat - 1],
    }));
    layers.extend(decoder(128));
    ModelSpec::new(
        "MiniSal-M",
        [3, height, width],
        layers,
        Some(Streams { fine, coarse, concat }),
        concat,
    )
    .expect("MiniSal-M is well formed")
}

/// Looks up a reference architecture by name.
pub fn reference_model(name: &str, height: usize, width: usize) -> Result<ModelSpec> {
    match name.to_ascii_lowercase().as_str() {
        "minisal-s" | "minisal_s" => Ok(minisal_s(height, width)),
        "minisal-m" | "minisal_m" => Ok(minisal_m(height, width)),
        other => Err(Error::invalid(format!("unknown reference model {other}"))),
    }
}

impl core::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "{} {:?}", self.name, self.input_shape)?;
        for (i, l) in self.layers.iter().enumerate() {
            let tag = if i == self.context { " <- context" } else { "" };
            writeln!(f, "  {i:>2}: {} {:?}{tag}", l.op, l.input)?;
        }
        Ok(())
    }
}

impl ModelSpec {
    pub fn describe_layer(&self, i: usize) -> String {
        self.layers.get(i).map_or_else(|| "?".to_string(), |l| format!("{}", l.op))
    }
}
