//! Network interchange format: a JSON manifest next to one raw tensor file
//! per weight and bias array.
//!
//! Tensors are little-endian `f32`. Dense weights are row-major
//! `[out][in]`, conv weights `[out_ch][in_ch][kh][kw]`. The manifest lists
//! layers in execution order; `in` and `out` are flat element counts.

use std::fs;
use std::path::{Path, PathBuf};

use neuropath_core::network::{Activation, Conv2d, Dense, Flatten, Layer, MaxPool2d, Network, Shape3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u64,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: String,
    #[serde(rename = "in")]
    pub inputs: usize,
    #[serde(rename = "out")]
    pub outputs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_ch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_ch: Option<usize>,
}

impl LayerEntry {
    fn plain(kind: &str, inputs: usize, outputs: usize) -> Self {
        LayerEntry {
            kind: kind.to_string(),
            inputs,
            outputs,
            activation: None,
            weight_file: None,
            bias_file: None,
            kernel: None,
            in_ch: None,
            out_ch: None,
        }
    }
}

fn parse_activation(path: &Path, name: Option<&str>) -> Result<Activation> {
    match name.unwrap_or("linear") {
        "relu" => Ok(Activation::Relu),
        "linear" | "identity" | "none" => Ok(Activation::Identity),
        other => Err(Error::format(path, format!("unknown activation `{other}`"))),
    }
}

fn write_tensor(dir: &Path, name: &str, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read_tensor(dir: &Path, name: &str, len: usize) -> Result<Vec<f64>> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = 4 * len as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::CorruptModel {
            tensor: path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes `net` into `dir` and returns the manifest path.
pub fn save_model(net: &Network, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let mut entry = LayerEntry::plain(layer.kind(), layer.input_len(), layer.output_len());
        let tensors = match layer {
            Layer::Dense(d) => Some((&d.weights, &d.bias, d.activation)),
            Layer::Conv2d(c) => {
                entry.kernel = Some([c.kernel.0, c.kernel.1]);
                entry.in_ch = Some(c.input.channels);
                entry.out_ch = Some(c.out_channels);
                Some((&c.weights, &c.bias, c.activation))
            }
            Layer::MaxPool2d(_) | Layer::Flatten(_) => None,
        };
        if let Some((w, b, act)) = tensors {
            let weight_file = format!("layer{i}.weight.f32");
            let bias_file = format!("layer{i}.bias.f32");
            write_tensor(dir, &weight_file, w)?;
            write_tensor(dir, &bias_file, b)?;
            entry.activation = Some(act.name().to_string());
            entry.weight_file = Some(weight_file);
            entry.bias_file = Some(bias_file);
        }
        layers.push(entry);
    }
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        input_shape: net.input_shape().to_vec(),
        layers,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Accepts either the manifest file or the directory containing it.
pub fn load_model(path: &Path) -> Result<Network> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: manifest_path.clone(),
        source: e,
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: manifest_path,
            version: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let bad = |msg: String| Error::format(&manifest_path, msg);

    // Image shape while the data is still spatial, None once flat.
    let mut image = match *manifest.input_shape.as_slice() {
        [_] => None,
        [c, h, w] => Some(Shape3::new(c, h, w)),
        _ => {
            return Err(bad(format!(
                "input_shape must have 1 or 3 dimensions, got {:?}",
                manifest.input_shape
            )))
        }
    };
    let mut flat: usize = manifest.input_shape.iter().product();
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for (i, e) in manifest.layers.iter().enumerate() {
        if e.inputs != flat {
            return Err(bad(format!("layer {i} ({}) declares in = {}, but receives {flat}", e.kind, e.inputs)));
        }
        let tensor = |file: &Option<String>, what: &str| {
            file.clone()
                .ok_or_else(|| bad(format!("layer {i} ({}) is missing {what}", e.kind)))
        };
        let layer = match e.kind.as_str() {
            "dense" => {
                if image.is_some() {
                    return Err(bad(format!("layer {i}: dense layer on spatial input needs a flatten first")));
                }
                let w = read_tensor(dir, &tensor(&e.weight_file, "weight_file")?, e.inputs * e.outputs)?;
                let b = read_tensor(dir, &tensor(&e.bias_file, "bias_file")?, e.outputs)?;
                let act = parse_activation(&manifest_path, e.activation.as_deref())?;
                Layer::Dense(Dense::new(e.inputs, e.outputs, w, b, act)?)
            }
            "conv2d" => {
                let input = image.ok_or_else(|| bad(format!("layer {i}: conv2d needs spatial input")))?;
                let (Some([kh, kw]), Some(in_ch), Some(out_ch)) = (e.kernel, e.in_ch, e.out_ch) else {
                    return Err(bad(format!("layer {i}: conv2d needs kernel, in_ch and out_ch")));
                };
                if in_ch != input.channels {
                    return Err(bad(format!("layer {i}: in_ch = {in_ch}, but input has {} channels", input.channels)));
                }
                let w = read_tensor(dir, &tensor(&e.weight_file, "weight_file")?, out_ch * in_ch * kh * kw)?;
                let b = read_tensor(dir, &tensor(&e.bias_file, "bias_file")?, out_ch)?;
                let act = parse_activation(&manifest_path, e.activation.as_deref())?;
                Layer::Conv2d(Conv2d::new(input, out_ch, (kh, kw), w, b, act)?)
            }
            "maxpool" | "maxpool2d" => {
                let input = image.ok_or_else(|| bad(format!("layer {i}: maxpool2d needs spatial input")))?;
                Layer::MaxPool2d(MaxPool2d::new(input)?)
            }
            "flatten" => Layer::Flatten(Flatten { len: flat }),
            other => return Err(bad(format!("layer {i}: unknown layer kind `{other}`"))),
        };
        if layer.output_len() != e.outputs {
            return Err(bad(format!(
                "layer {i} ({}) declares out = {}, but produces {}",
                e.kind,
                e.outputs,
                layer.output_len()
            )));
        }
        image = match &layer {
            Layer::Conv2d(c) => Some(c.output_shape()),
            Layer::MaxPool2d(p) => Some(p.output_shape()),
            _ => None,
        };
        flat = layer.output_len();
        layers.push(layer);
    }
    Ok(Network::new(manifest.input_shape, layers)?)
}
