use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::layers::{bce_batch_loss, Aux, Conv2d, Dense, Layer, LayerGrad, Mode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Which builder produced a network; recorded in serialized models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    Mlp,
    Cnn,
}

impl Architecture {
    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Cnn => "cnn",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetModel {
    architecture: Architecture,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl NetModel {
    /// Checks that consecutive layer shapes compose and that the network
    /// ends in a single output.
    pub fn new(
        architecture: Architecture,
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            if let Layer::Dropout { rate } = layer {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::InvalidArgument(format!(
                        "dropout rate must be in [0,1), got {rate}"
                    )));
                }
            }
            if let Layer::Dense(d) = layer {
                if d.weights.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                    return Err(Error::Shape(
                        "dense parameter sizes disagree with its shape".into(),
                    ));
                }
            }
            if let Layer::Conv2d(c) = layer {
                if c.weights.len() != c.kernel * c.kernel * c.in_channels * c.out_channels
                    || c.bias.len() != c.out_channels
                {
                    return Err(Error::Shape(
                        "conv2d parameter sizes disagree with its shape".into(),
                    ));
                }
            }
            shape = layer.output_shape(&shape)?;
        }
        if shape != [1] {
            return Err(Error::Shape(format!(
                "network must end in a single output, got {shape:?}"
            )));
        }
        Ok(Self {
            architecture,
            input_shape,
            layers,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Output shape after each layer.
    pub fn shape_trace(&self) -> Vec<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        self.layers
            .iter()
            .map(|l| {
                shape = l.output_shape(&shape).expect("validated at construction");
                shape.clone()
            })
            .collect()
    }

    /// Mutable parameter slices in a fixed order: per layer, weights then bias.
    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                Layer::Conv2d(c) => {
                    out.push(&mut c.weights);
                    out.push(&mut c.bias);
                }
                _ => {}
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur, Mode::Eval, &mut rng)?.0;
        }
        Ok(cur)
    }

    /// Spam probability for one sample.
    pub fn predict(&self, x: &Tensor) -> Result<f64> {
        Ok(self.forward(x)?.values()[0])
    }

    pub fn predict_batch(&self, xs: &[Tensor]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Mean BCE over a batch, forwarding in `mode` with per-sample dropout
    /// streams derived from `seed` (as in [`Backprop::forward`]).
    pub fn batch_loss(&self, xs: &[Tensor], labels: &[u8], mode: Mode, seed: u64) -> Result<f64> {
        let mut bp = Backprop::new(self);
        let out = bp.forward(xs, mode, seed)?;
        Ok(bce_batch_loss(&out, labels))
    }
}

fn he_uniform(n: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

fn glorot_uniform(n: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

fn dense(inputs: usize, outputs: usize, head: bool, rng: &mut impl Rng) -> Layer {
    let n = inputs * outputs;
    let weights = if head {
        glorot_uniform(n, inputs, outputs, rng)
    } else {
        he_uniform(n, inputs, rng)
    };
    Layer::Dense(Dense {
        inputs,
        outputs,
        weights,
        bias: vec![0.0; outputs],
    })
}

/// MLP with ReLU hidden layers of the given widths and a sigmoid output.
pub fn build_mlp_with(input_len: usize, hidden: &[usize], seed: u64) -> Result<NetModel> {
    if input_len == 0 {
        return Err(Error::InvalidArgument(
            "MLP input length must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut width = input_len;
    for &h in hidden {
        layers.push(dense(width, h, false, &mut rng));
        layers.push(Layer::Relu);
        width = h;
    }
    layers.push(dense(width, 1, true, &mut rng));
    layers.push(Layer::Sigmoid);
    NetModel::new(Architecture::Mlp, vec![input_len], layers)
}

/// Two hidden layers of 128 ReLU units, sigmoid output.
pub fn build_mlp(input_len: usize, seed: u64) -> Result<NetModel> {
    build_mlp_with(input_len, &[128, 128], seed)
}

pub const CNN_FILTERS: [usize; 3] = [32, 32, 64];
pub const CNN_DROPOUT: f64 = 0.5;

/// Three conv(3×3)→ReLU→maxpool(2×2) stages, dropout, flatten, dense→sigmoid.
///
/// Convolutions are unpadded unless their input is already smaller than the
/// kernel, in which case they pad to preserve size, so small sides still
/// produce a non-empty flatten.
pub fn build_cnn_with(
    side: usize,
    channels: usize,
    filters: &[usize],
    dropout: f64,
    seed: u64,
) -> Result<NetModel> {
    const K: usize = 3;
    if side == 0 || channels == 0 {
        return Err(Error::InvalidArgument(format!(
            "CNN input must be non-empty, got side={side} channels={channels}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut shape = vec![side, side, channels];
    for &f in filters {
        let cin = shape[2];
        let padding = if shape[0] < K || shape[1] < K {
            K / 2
        } else {
            0
        };
        let conv = Layer::Conv2d(Conv2d {
            kernel: K,
            in_channels: cin,
            out_channels: f,
            padding,
            weights: he_uniform(K * K * cin * f, K * K * cin, &mut rng),
            bias: vec![0.0; f],
        });
        shape = conv.output_shape(&shape)?;
        layers.push(conv);
        layers.push(Layer::Relu);
        layers.push(Layer::MaxPool2d);
        shape = Layer::MaxPool2d.output_shape(&shape)?;
    }
    if dropout > 0.0 {
        layers.push(Layer::Dropout { rate: dropout });
    }
    layers.push(Layer::Flatten);
    let flat: usize = shape.iter().product();
    layers.push(dense(flat, 1, true, &mut rng));
    layers.push(Layer::Sigmoid);
    NetModel::new(Architecture::Cnn, vec![side, side, channels], layers)
}

pub fn build_cnn(side: usize, channels: usize, seed: u64) -> Result<NetModel> {
    build_cnn_with(side, channels, &CNN_FILTERS, CNN_DROPOUT, seed)
}

/// Parameter gradients, one entry per layer (empty for parameterless layers).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &NetModel) -> Self {
        Self {
            layers: model.layers.iter().map(Layer::zero_grad).collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    /// Slices in the same order as [`NetModel::params_mut`].
    pub fn slices(&self) -> Vec<&Vec<f64>> {
        self.layers
            .iter()
            .filter(|g| !g.weights.is_empty() || !g.bias.is_empty())
            .flat_map(|g| [&g.weights, &g.bias])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers
            .iter_mut()
            .filter(|g| !g.weights.is_empty() || !g.bias.is_empty())
            .flat_map(|g| [&mut g.weights, &mut g.bias])
            .collect()
    }
}

struct SampleTrace {
    /// activations[i] is the input to layer i; the last entry is the output.
    activations: Vec<Tensor>,
    aux: Vec<Aux>,
}

// Samples per gradient partial sum. Fixed so the summation order, and hence
// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Records a forward pass over a batch so gradients can be taken.
pub struct Backprop<'m> {
    model: &'m NetModel,
    traces: Option<Vec<SampleTrace>>,
}

/// Derives the dropout stream of sample `i` from a batch seed.
fn sample_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed
        ^ (i as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<'m> Backprop<'m> {
    pub fn new(model: &'m NetModel) -> Self {
        Self {
            model,
            traces: None,
        }
    }

    /// Runs the batch forward and returns one scalar output per sample.
    pub fn forward(&mut self, batch: &[Tensor], mode: Mode, seed: u64) -> Result<Vec<f64>> {
        let model = self.model;
        let traces: Vec<SampleTrace> = batch
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                model.check_input(x)?;
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
                let mut activations = Vec::with_capacity(model.layers.len() + 1);
                let mut aux = Vec::with_capacity(model.layers.len());
                activations.push(x.clone());
                for layer in &model.layers {
                    let (y, a) = layer.forward(activations.last().unwrap(), mode, &mut rng)?;
                    activations.push(y);
                    aux.push(a);
                }
                Ok(SampleTrace { activations, aux })
            })
            .collect::<Result<_>>()?;
        let out = traces
            .iter()
            .map(|t| t.activations.last().unwrap().values()[0])
            .collect();
        self.traces = Some(traces);
        Ok(out)
    }

    fn traces(&self) -> Result<&[SampleTrace]> {
        self.traces
            .as_deref()
            .ok_or_else(|| Error::State("backward called before forward".into()))
    }

    fn backprop_from(&self, trace: &SampleTrace, top: usize, g: Tensor, grads: &mut Gradients) {
        let mut g = g;
        for li in (0..top).rev() {
            g = self.model.layers[li].backward(
                &trace.activations[li],
                &trace.activations[li + 1],
                &trace.aux[li],
                &g,
                &mut grads.layers[li],
            );
        }
    }

    fn reduce<F>(&self, per_sample: F) -> Result<Gradients>
    where
        F: Fn(usize, &SampleTrace, &mut Gradients) + Sync,
    {
        let traces = self.traces()?;
        let partials: Vec<Gradients> = traces
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut acc = Gradients::zeros_like(self.model);
                for (k, t) in chunk.iter().enumerate() {
                    per_sample(ci * GRAD_CHUNK + k, t, &mut acc);
                }
                acc
            })
            .collect();
        let mut total = Gradients::zeros_like(self.model);
        for p in &partials {
            total.add(p);
        }
        Ok(total)
    }

    /// Backpropagates caller-supplied gradients of the loss with respect to
    /// each sample's output.
    pub fn backward(&self, output_grads: &[Tensor]) -> Result<Gradients> {
        let n = self.traces()?.len();
        if output_grads.len() != n {
            return Err(Error::Shape(format!(
                "{} output gradients for a batch of {n}",
                output_grads.len()
            )));
        }
        let top = self.model.layers.len();
        self.reduce(|i, t, acc| self.backprop_from(t, top, output_grads[i].clone(), acc))
    }

    /// Mean binary cross-entropy of the recorded outputs and its gradient.
    /// A trailing sigmoid is differentiated jointly with the loss.
    pub fn backward_bce(&self, labels: &[u8]) -> Result<(f64, Gradients)> {
        let traces = self.traces()?;
        if labels.len() != traces.len() {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                traces.len()
            )));
        }
        let n = traces.len() as f64;
        let outputs: Vec<f64> = traces
            .iter()
            .map(|t| t.activations.last().unwrap().values()[0])
            .collect();
        let loss = bce_batch_loss(&outputs, labels);
        let layers = &self.model.layers;
        let fused = matches!(layers.last(), Some(Layer::Sigmoid));
        let grads = self.reduce(|i, t, acc| {
            let p = outputs[i];
            let y = labels[i] as f64;
            if fused {
                let g = Tensor::vector(vec![(p - y) / n]);
                self.backprop_from(t, layers.len() - 1, g, acc);
            } else {
                let g = Tensor::vector(vec![(p - y) / (p * (1.0 - p)).max(1e-12) / n]);
                self.backprop_from(t, layers.len(), g, acc);
            }
        })?;
        Ok((loss, grads))
    }
}
