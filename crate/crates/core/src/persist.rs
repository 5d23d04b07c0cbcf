//! Versioned JSON envelope for trained models, and the JSON writer used for
//! every artifact (floats printed with 17 significant digits).

use std::io;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::imaging::{FeatureSpec, FeatureTensor};
use crate::nn::{Architecture, Conv2d, Dense, Layer, LayerKind, NetModel, Tensor};
use crate::svm::{KernelSpec, SvmModel};

pub const FORMAT_VERSION: &str = "1";

/// Compact JSON with every float written as `{:.16e}`.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::format("json", e))?;
    out.push(b'\n');
    Ok(out)
}

fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| Error::format("weight blob", e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(
            "weight blob",
            "length is not a multiple of 8",
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Little-endian float64 array with its shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub shape: Vec<usize>,
    pub data: String,
}

impl Blob {
    fn new(shape: Vec<usize>, values: &[f64]) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self {
            shape,
            data: encode_f64s(values),
        }
    }

    fn values(&self) -> Result<Vec<f64>> {
        let v = decode_f64s(&self.data)?;
        if v.len() != self.shape.iter().product::<usize>() {
            return Err(Error::format(
                "weight blob",
                format!("{} values for shape {:?}", v.len(), self.shape),
            ));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchitectureDescriptor {
    Mlp,
    Cnn,
    Svm { kernel: KernelSpec, c: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Blob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Blob>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmRecord {
    pub bias: f64,
    /// `[n_support, feature_len]`
    pub support_vectors: Blob,
    /// alpha_i * y_i
    pub duals: Blob,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub format_version: String,
    pub architecture: ArchitectureDescriptor,
    pub feature: FeatureSpec,
    pub input_shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm: Option<SvmRecord>,
    /// Training configuration, carried so evaluation reports can embed it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Svm(SvmModel),
    Net(NetModel),
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Net(n) => n.architecture().as_str(),
        }
    }

    /// Score at or above which a sample is called spam.
    pub fn threshold(&self) -> f64 {
        match self {
            Classifier::Svm(_) => 0.0,
            Classifier::Net(_) => 0.5,
        }
    }

    pub fn input_shape(&self, feature: &FeatureSpec) -> Vec<usize> {
        match self {
            Classifier::Svm(m) => vec![m.feature_len().unwrap_or(feature.vector_len())],
            Classifier::Net(n) => n.input_shape().to_vec(),
        }
    }

    pub fn score(&self, features: &FeatureTensor) -> Result<f64> {
        match self {
            Classifier::Svm(m) => m.decision(&features.to_vector()),
            Classifier::Net(n) => n.predict(&net_input(n, features)?),
        }
    }
}

/// Shapes a feature tensor the way a network expects it: flat for MLPs,
/// H×W×C for CNNs.
pub fn net_input(model: &NetModel, features: &FeatureTensor) -> Result<Tensor> {
    match model.architecture() {
        Architecture::Mlp => Ok(Tensor::vector(features.to_vector())),
        Architecture::Cnn => Tensor::new(features.shape().to_vec(), features.values.clone()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub classifier: Classifier,
    pub feature: FeatureSpec,
    pub training_config: Option<serde_json::Value>,
}

impl SavedModel {
    pub fn to_envelope(&self) -> ModelEnvelope {
        let (architecture, input_shape, layers, svm) = match &self.classifier {
            Classifier::Svm(m) => {
                let dim = m.feature_len().unwrap_or(self.feature.vector_len());
                let flat: Vec<f64> = m.support_vectors.iter().flatten().copied().collect();
                (
                    ArchitectureDescriptor::Svm {
                        kernel: m.kernel,
                        c: m.c,
                    },
                    vec![dim],
                    Vec::new(),
                    Some(SvmRecord {
                        bias: m.bias,
                        support_vectors: Blob::new(vec![m.support_vectors.len(), dim], &flat),
                        duals: Blob::new(vec![m.duals.len()], &m.duals),
                    }),
                )
            }
            Classifier::Net(n) => {
                let arch = match n.architecture() {
                    Architecture::Mlp => ArchitectureDescriptor::Mlp,
                    Architecture::Cnn => ArchitectureDescriptor::Cnn,
                };
                let layers = n.layers().iter().map(layer_record).collect();
                (arch, n.input_shape().to_vec(), layers, None)
            }
        };
        ModelEnvelope {
            format_version: FORMAT_VERSION.to_string(),
            architecture,
            feature: self.feature,
            input_shape,
            layers,
            svm,
            training_config: self.training_config.clone(),
        }
    }

    pub fn from_envelope(env: ModelEnvelope) -> Result<Self> {
        if env.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: env.format_version,
                expected: FORMAT_VERSION.to_string(),
            });
        }
        let classifier = match env.architecture {
            ArchitectureDescriptor::Svm { kernel, c } => {
                let rec = env
                    .svm
                    .ok_or_else(|| Error::format("model", "svm model without support vectors"))?;
                let shape = &rec.support_vectors.shape;
                if shape.len() != 2 || env.input_shape != [shape[1]] {
                    return Err(Error::format(
                        "model",
                        format!("bad support vector shape {shape:?}"),
                    ));
                }
                let flat = rec.support_vectors.values()?;
                let duals = rec.duals.values()?;
                if duals.len() != shape[0] {
                    return Err(Error::format(
                        "model",
                        "dual count differs from support vector count",
                    ));
                }
                let support_vectors = if shape[1] == 0 {
                    vec![Vec::new(); shape[0]]
                } else {
                    flat.chunks_exact(shape[1]).map(<[f64]>::to_vec).collect()
                };
                Classifier::Svm(SvmModel {
                    support_vectors,
                    duals,
                    bias: rec.bias,
                    kernel,
                    c,
                })
            }
            ArchitectureDescriptor::Mlp | ArchitectureDescriptor::Cnn => {
                let arch = if env.architecture == ArchitectureDescriptor::Mlp {
                    Architecture::Mlp
                } else {
                    Architecture::Cnn
                };
                let layers = env
                    .layers
                    .iter()
                    .map(layer_from_record)
                    .collect::<Result<Vec<_>>>()?;
                Classifier::Net(NetModel::new(arch, env.input_shape, layers)?)
            }
        };
        Ok(Self {
            classifier,
            feature: env.feature,
            training_config: env.training_config,
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        to_json(&self.to_envelope())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::format("model", e))?;
        check_version(&value)?;
        let env: ModelEnvelope =
            serde_json::from_value(value).map_err(|e| Error::format("model", e))?;
        Self::from_envelope(env)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes).map_err(|e| match e {
            Error::Format { what, message } => Error::Format {
                what: format!("{what} in {}", path.display()),
                message,
            },
            other => other,
        })
    }
}

/// Rejects documents whose `format_version` is missing or unknown.
pub fn check_version(value: &serde_json::Value) -> Result<()> {
    match value.get("format_version").and_then(|v| v.as_str()) {
        Some(FORMAT_VERSION) => Ok(()),
        Some(other) => Err(Error::Version {
            found: other.to_string(),
            expected: FORMAT_VERSION.to_string(),
        }),
        None => Err(Error::Version {
            found: String::new(),
            expected: FORMAT_VERSION.to_string(),
        }),
    }
}

fn layer_record(layer: &Layer) -> LayerRecord {
    let mut rec = LayerRecord {
        kind: layer.kind(),
        padding: None,
        rate: None,
        weights: None,
        bias: None,
    };
    match layer {
        Layer::Dense(d) => {
            rec.weights = Some(Blob::new(vec![d.outputs, d.inputs], &d.weights));
            rec.bias = Some(Blob::new(vec![d.outputs], &d.bias));
        }
        Layer::Conv2d(c) => {
            rec.padding = Some(c.padding);
            rec.weights = Some(Blob::new(
                vec![c.kernel, c.kernel, c.in_channels, c.out_channels],
                &c.weights,
            ));
            rec.bias = Some(Blob::new(vec![c.out_channels], &c.bias));
        }
        Layer::Dropout { rate } => rec.rate = Some(*rate),
        _ => {}
    }
    rec
}

fn layer_from_record(rec: &LayerRecord) -> Result<Layer> {
    let blobs = || -> Result<(&Blob, &Blob)> {
        match (&rec.weights, &rec.bias) {
            (Some(w), Some(b)) => Ok((w, b)),
            _ => Err(Error::format(
                "model",
                format!("{:?} layer without weights", rec.kind),
            )),
        }
    };
    Ok(match rec.kind {
        LayerKind::Dense => {
            let (w, b) = blobs()?;
            let [outputs, inputs] = w.shape[..] else {
                return Err(Error::format(
                    "model",
                    format!("dense weight shape {:?}", w.shape),
                ));
            };
            Layer::Dense(Dense {
                inputs,
                outputs,
                weights: w.values()?,
                bias: b.values()?,
            })
        }
        LayerKind::Conv2d => {
            let (w, b) = blobs()?;
            let [k, k2, cin, cout] = w.shape[..] else {
                return Err(Error::format(
                    "model",
                    format!("conv weight shape {:?}", w.shape),
                ));
            };
            if k != k2 {
                return Err(Error::format("model", "conv kernels must be square"));
            }
            Layer::Conv2d(Conv2d {
                kernel: k,
                in_channels: cin,
                out_channels: cout,
                padding: rec.padding.unwrap_or(0),
                weights: w.values()?,
                bias: b.values()?,
            })
        }
        LayerKind::Maxpool2d => Layer::MaxPool2d,
        LayerKind::Relu => Layer::Relu,
        LayerKind::Sigmoid => Layer::Sigmoid,
        LayerKind::Dropout => Layer::Dropout {
            rate: rec.rate.unwrap_or(0.0),
        },
        LayerKind::Flatten => Layer::Flatten,
    })
}
