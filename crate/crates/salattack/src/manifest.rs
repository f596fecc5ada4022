//! Model files: a TOML manifest listing layers and the stream partition,
//! with one `SFT1` file per weight tensor referenced by relative path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use salattack_core::layers::{ConvParams, LayerPrimitive};
use salattack_core::model::{Input, Layer, ModelSpec, ModelWeights, Streams};

use crate::error::{read, write, Error, Result};
use crate::sft;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerEntry {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<String>,
        weight: String,
        bias: String,
    },
    Relu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<String>,
    },
    Sigmoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<String>,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<String>,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<String>,
    },
    Upsample {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        input: Option<String>,
    },
    Concat {
        sources: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamEntry {
    pub fine: Vec<usize>,
    pub coarse: Vec<usize>,
    pub concat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub input_shape: [usize; 3],
    pub context: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streams: Option<StreamEntry>,
    pub layers: Vec<LayerEntry>,
}

fn input_text(input: Input) -> Option<String> {
    match input {
        Input::Previous => None,
        Input::Image => Some("image".into()),
        Input::Layer(i) => Some(i.to_string()),
    }
}

fn parse_input(s: &Option<String>) -> Result<Input> {
    match s.as_deref() {
        None | Some("previous") => Ok(Input::Previous),
        Some("image") => Ok(Input::Image),
        Some(other) => other
            .parse()
            .map(Input::Layer)
            .map_err(|_| Error::Invalid(format!("layer input {other:?} is not previous, image or an index"))),
    }
}

/// Loaded model: architecture plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub weights: ModelWeights,
}

/// Writes `<dir>/<stem>.toml` and its weight files; returns the manifest path.
pub fn save_model(dir: &Path, stem: &str, model: &Model) -> Result<PathBuf> {
    let spec = &model.spec;
    model.weights.check(spec)?;
    let mut layers = Vec::with_capacity(spec.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let input = input_text(layer.input);
        layers.push(match &layer.op {
            LayerPrimitive::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let p = model.weights.params[i].as_ref().expect("checked conv params");
                let weight = format!("{stem}.layer{i:02}.weight.sft");
                let bias = format!("{stem}.layer{i:02}.bias.sft");
                sft::save(&dir.join(&weight), &p.weight)?;
                sft::save(&dir.join(&bias), &p.bias)?;
                LayerEntry::Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                    input,
                    weight,
                    bias,
                }
            }
            LayerPrimitive::Relu => LayerEntry::Relu { input },
            LayerPrimitive::Sigmoid => LayerEntry::Sigmoid { input },
            LayerPrimitive::MaxPool { kernel, stride } => LayerEntry::MaxPool {
                kernel: *kernel,
                stride: *stride,
                input,
            },
            LayerPrimitive::AvgPool { kernel, stride } => LayerEntry::AvgPool {
                kernel: *kernel,
                stride: *stride,
                input,
            },
            LayerPrimitive::UpsampleNearest => LayerEntry::Upsample { input },
            LayerPrimitive::Concat { sources } => LayerEntry::Concat {
                sources: sources.clone(),
            },
        });
    }
    let manifest = Manifest {
        name: spec.name.clone(),
        input_shape: spec.input_shape,
        context: spec.context,
        streams: spec.streams.as_ref().map(|s| StreamEntry {
            fine: s.fine.clone(),
            coarse: s.coarse.clone(),
            concat: s.concat,
        }),
        layers,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Invalid(format!("manifest encoding: {e}")))?;
    let path = dir.join(format!("{stem}.toml"));
    write(&path, text.as_bytes())?;
    Ok(path)
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = String::from_utf8(read(path)?).map_err(|_| Error::format(path, "manifest is not UTF-8"))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Toml {
        path: path.to_path_buf(),
        source: e,
    })?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut layers = Vec::with_capacity(manifest.layers.len());
    let mut params = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let (op, input, p) = match entry {
            LayerEntry::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                input,
                weight,
                bias,
            } => (
                LayerPrimitive::Conv2d {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    stride: *stride,
                    padding: *padding,
                },
                input,
                Some(ConvParams {
                    weight: sft::load(&dir.join(weight))?,
                    bias: sft::load(&dir.join(bias))?,
                }),
            ),
            LayerEntry::Relu { input } => (LayerPrimitive::Relu, input, None),
            LayerEntry::Sigmoid { input } => (LayerPrimitive::Sigmoid, input, None),
            LayerEntry::MaxPool { kernel, stride, input } => (
                LayerPrimitive::MaxPool {
                    kernel: *kernel,
                    stride: *stride,
                },
                input,
                None,
            ),
            LayerEntry::AvgPool { kernel, stride, input } => (
                LayerPrimitive::AvgPool {
                    kernel: *kernel,
                    stride: *stride,
                },
                input,
                None,
            ),
            LayerEntry::Upsample { input } => (LayerPrimitive::UpsampleNearest, input, None),
            LayerEntry::Concat { sources } => (
                LayerPrimitive::Concat {
                    sources: sources.clone(),
                },
                &None,
                None,
            ),
        };
        layers.push(Layer {
            op,
            input: parse_input(input)?,
        });
        params.push(p);
    }
    let streams = manifest.streams.map(|s| Streams {
        fine: s.fine,
        coarse: s.coarse,
        concat: s.concat,
    });
    let spec = ModelSpec::new(manifest.name, manifest.input_shape, layers, streams, manifest.context)?;
    let weights = ModelWeights { params };
    weights.check(&spec)?;
    Ok(Model { spec, weights })
}
