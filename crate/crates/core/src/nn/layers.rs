//! Layer kinds with forward and backward passes for a single sample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Stride-1 cross-correlation with square kernels and symmetric zero
/// padding. `weights` is laid out `[k][k][in_channels][out_channels]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub padding: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    /// 2×2 window, stride 2. Odd trailing rows/columns are dropped, except
    /// that a dimension of 1 pools to 1.
    MaxPool2d,
    Relu,
    Sigmoid,
    Dropout {
        rate: f64,
    },
    Flatten,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv2d,
    Maxpool2d,
    Relu,
    Sigmoid,
    Dropout,
    Flatten,
}

/// Per-layer state recorded by a training-mode forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Aux {
    None,
    Argmax(Vec<usize>),
    Mask(Vec<f64>),
}

/// Gradients for one layer's parameters; empty for parameterless layers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn pooled(n: usize) -> usize {
    (n / 2).max(1)
}

fn spatial(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(Error::Shape(format!(
            "{what} expects an H×W×C input, got {shape:?}"
        ))),
    }
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Dense {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != [self.inputs] {
            return Err(Error::Shape(format!(
                "dense layer expects [{}], got {:?}",
                self.inputs,
                x.shape()
            )));
        }
        let xv = x.values();
        let out = self
            .weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(xv).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        Ok(Tensor::vector(out))
    }

    fn backward(&self, x: &Tensor, g: &[f64], grad: &mut LayerGrad) -> Tensor {
        let xv = x.values();
        let mut gx = vec![0.0; self.inputs];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grad.bias[o] += go;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += go * xv[i];
                gx[i] += go * row[i];
            }
        }
        Tensor::vector(gx)
    }
}

impl Conv2d {
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (h, w, c) = spatial(input, "conv2d")?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv2d expects {} input channels, got {input:?}",
                self.in_channels
            )));
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel || pw < self.kernel {
            return Err(Error::Shape(format!(
                "conv2d input {input:?} (padding {}) is smaller than the {k}x{k} kernel",
                self.padding,
                k = self.kernel
            )));
        }
        Ok(vec![
            ph - self.kernel + 1,
            pw - self.kernel + 1,
            self.out_channels,
        ])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let (h, w, cin) = spatial(x.shape(), "conv2d")?;
        let (oh, ow, cout) = (out_shape[0], out_shape[1], out_shape[2]);
        let (k, pad) = (self.kernel, self.padding as isize);
        let xv = x.values();
        let mut y = vec![0.0; oh * ow * cout];
        for oy in 0..oh {
            for ox in 0..ow {
                let out = &mut y[(oy * ow + ox) * cout..][..cout];
                out.copy_from_slice(&self.bias);
                for ki in 0..k {
                    let iy = oy as isize + ki as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kj in 0..k {
                        let ix = ox as isize + kj as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xin = &xv[(iy as usize * w + ix as usize) * cin..][..cin];
                        let wbase = (ki * k + kj) * cin * cout;
                        for (c, &v) in xin.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            let wrow = &self.weights[wbase + c * cout..][..cout];
                            for (o, wv) in out.iter_mut().zip(wrow) {
                                *o += v * wv;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(out_shape, y)
    }

    fn backward(&self, x: &Tensor, g: &[f64], grad: &mut LayerGrad) -> Tensor {
        let (h, w, cin) = spatial(x.shape(), "conv2d").expect("checked in forward");
        let cout = self.out_channels;
        let (k, pad) = (self.kernel, self.padding as isize);
        let oh = h + 2 * self.padding + 1 - k;
        let ow = w + 2 * self.padding + 1 - k;
        let xv = x.values();
        let mut gx = vec![0.0; xv.len()];
        for oy in 0..oh {
            for ox in 0..ow {
                let go = &g[(oy * ow + ox) * cout..][..cout];
                for (b, &v) in grad.bias.iter_mut().zip(go) {
                    *b += v;
                }
                for ki in 0..k {
                    let iy = oy as isize + ki as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kj in 0..k {
                        let ix = ox as isize + kj as isize - pad;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let at = (iy as usize * w + ix as usize) * cin;
                        let wbase = (ki * k + kj) * cin * cout;
                        for c in 0..cin {
                            let v = xv[at + c];
                            let wrow = &self.weights[wbase + c * cout..][..cout];
                            let gw = &mut grad.weights[wbase + c * cout..][..cout];
                            let mut acc = 0.0;
                            for o in 0..cout {
                                gw[o] += v * go[o];
                                acc += wrow[o] * go[o];
                            }
                            gx[at + c] += acc;
                        }
                    }
                }
            }
        }
        Tensor::new(x.shape().to_vec(), gx).expect("input shape")
    }
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::MaxPool2d => LayerKind::Maxpool2d,
            Layer::Relu => LayerKind::Relu,
            Layer::Sigmoid => LayerKind::Sigmoid,
            Layer::Dropout { .. } => LayerKind::Dropout,
            Layer::Flatten => LayerKind::Flatten,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            _ => 0,
        }
    }

    pub(crate) fn zero_grad(&self) -> LayerGrad {
        match self {
            Layer::Dense(d) => LayerGrad {
                weights: vec![0.0; d.weights.len()],
                bias: vec![0.0; d.bias.len()],
            },
            Layer::Conv2d(c) => LayerGrad {
                weights: vec![0.0; c.weights.len()],
                bias: vec![0.0; c.bias.len()],
            },
            _ => LayerGrad::default(),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                if input != [d.inputs] {
                    return Err(Error::Shape(format!(
                        "dense layer expects [{}], got {input:?}",
                        d.inputs
                    )));
                }
                Ok(vec![d.outputs])
            }
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::MaxPool2d => {
                let (h, w, c) = spatial(input, "maxpool2d")?;
                if h == 0 || w == 0 {
                    return Err(Error::Shape(format!("maxpool2d on empty input {input:?}")));
                }
                Ok(vec![pooled(h), pooled(w), c])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Relu | Layer::Sigmoid | Layer::Dropout { .. } => Ok(input.to_vec()),
        }
    }

    pub(crate) fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Tensor, Aux)> {
        match self {
            Layer::Dense(d) => Ok((d.forward(x)?, Aux::None)),
            Layer::Conv2d(c) => Ok((c.forward(x)?, Aux::None)),
            Layer::MaxPool2d => {
                let (y, argmax) = maxpool_with_argmax(x)?;
                Ok((y, Aux::Argmax(argmax)))
            }
            Layer::Relu => Ok((relu(x), Aux::None)),
            Layer::Sigmoid => Ok((sigmoid(x), Aux::None)),
            Layer::Dropout { rate } => {
                if mode == Mode::Eval || *rate == 0.0 {
                    return Ok((x.clone(), Aux::None));
                }
                let mask = dropout_mask(x.len(), *rate, rng);
                let mut y = x.clone();
                y.values_mut()
                    .iter_mut()
                    .zip(&mask)
                    .for_each(|(v, m)| *v *= m);
                Ok((y, Aux::Mask(mask)))
            }
            Layer::Flatten => {
                let n = x.len();
                Ok((x.clone().reshaped(vec![n]), Aux::None))
            }
        }
    }

    /// Propagates `g` (gradient w.r.t. this layer's output) back to the
    /// input, accumulating parameter gradients into `grad`.
    pub(crate) fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        aux: &Aux,
        g: &Tensor,
        grad: &mut LayerGrad,
    ) -> Tensor {
        match (self, aux) {
            (Layer::Dense(d), _) => d.backward(x, g.values(), grad),
            (Layer::Conv2d(c), _) => c.backward(x, g.values(), grad),
            (Layer::MaxPool2d, Aux::Argmax(idx)) => {
                let mut gx = Tensor::zeros(x.shape().to_vec());
                for (&i, &gv) in idx.iter().zip(g.values()) {
                    gx.values_mut()[i] += gv;
                }
                gx
            }
            (Layer::Relu, _) => {
                let vals = x
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                    .collect();
                Tensor::new(x.shape().to_vec(), vals).expect("same shape")
            }
            (Layer::Sigmoid, _) => {
                let vals = y
                    .values()
                    .iter()
                    .zip(g.values())
                    .map(|(&p, &gv)| gv * p * (1.0 - p))
                    .collect();
                Tensor::new(x.shape().to_vec(), vals).expect("same shape")
            }
            (Layer::Dropout { .. }, Aux::Mask(mask)) => {
                let vals = g.values().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                Tensor::new(x.shape().to_vec(), vals).expect("same shape")
            }
            (Layer::Dropout { .. }, _) => g.clone(),
            (Layer::Flatten, _) => g.clone().reshaped(x.shape().to_vec()),
            (Layer::MaxPool2d, _) => unreachable!("maxpool backward without argmax"),
        }
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let vals = x.values().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), vals).expect("same shape")
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let vals = x.values().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::new(x.shape().to_vec(), vals).expect("same shape")
}

/// Inverted-dropout multipliers: 0 with probability `rate`, else 1/(1-rate).
fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub fn dropout_forward(x: &Tensor, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0,1), got {rate}"
        )));
    }
    Layer::Dropout { rate }
        .forward(x, mode, rng)
        .map(|(y, _)| y)
}

pub fn maxpool_forward(x: &Tensor) -> Result<Tensor> {
    maxpool_with_argmax(x).map(|(y, _)| y)
}

fn maxpool_with_argmax(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let out_shape = Layer::MaxPool2d.output_shape(x.shape())?;
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (out_shape[0], out_shape[1]);
    let xv = x.values();
    let mut y = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best = usize::MAX;
                for iy in 2 * oy..(2 * oy + 2).min(h) {
                    for ix in 2 * ox..(2 * ox + 2).min(w) {
                        let i = (iy * w + ix) * c + ch;
                        if best == usize::MAX || xv[i] > xv[best] {
                            best = i;
                        }
                    }
                }
                y.push(xv[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(out_shape, y)?, argmax))
}

pub fn dense_forward(x: &Tensor, layer: &Dense) -> Result<Tensor> {
    layer.forward(x)
}

pub fn conv2d_forward(x: &Tensor, layer: &Conv2d) -> Result<Tensor> {
    layer.forward(x)
}

pub const BCE_EPSILON: f64 = 1e-7;

/// Binary cross-entropy of one prediction, with `p` clamped away from 0 and 1.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn bce_batch_loss(predictions: &[f64], labels: &[u8]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_loss(p, y))
        .sum::<f64>()
        / predictions.len() as f64
}
