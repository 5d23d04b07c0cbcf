use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{bce_batch_loss, Mode};
use super::model::{Backprop, Gradients, NetModel};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            validation_fraction: 0.15,
            learning_rate: 1e-3,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument(format!(
                "validation_fraction must be in [0,1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-epoch curves. Training figures are running means over the epoch's
/// mini-batches; validation figures are computed in inference mode at the
/// end of the epoch and are absent when no validation samples were held out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &mut NetModel, lr: f64) -> Self {
        let shapes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut NetModel, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * bc2.sqrt() / bc1;
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + self.eps * bc2.sqrt());
            }
        }
    }
}

fn hits(outputs: &[f64], labels: &[u8]) -> usize {
    outputs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| u8::from(p >= 0.5) == y)
        .count()
}

/// Mini-batch training with Adam on binary cross-entropy.
///
/// The trailing `validation_fraction` of the samples (in the order given) is
/// held out before the first epoch. Every random draw comes from one stream
/// seeded by `rng_seed`, so runs are reproducible.
pub fn train(
    model: NetModel,
    inputs: &[Tensor],
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<(NetModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(x) = inputs.iter().find(|x| x.shape() != model.input_shape()) {
        return Err(Error::Shape(format!(
            "model expects input {:?}, got {:?}",
            model.input_shape(),
            x.shape()
        )));
    }
    let mut model = model;
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }

    let n_val = (cfg.validation_fraction * inputs.len() as f64).floor() as usize;
    let n_train = inputs.len() - n_val;
    if n_train == 0 {
        return Err(Error::InvalidArgument(
            "validation split leaves no training samples".into(),
        ));
    }
    let (val_x, val_y) = (&inputs[n_train..], &labels[n_train..]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut adam = Adam::new(&mut model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<Tensor> = batch.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let dropout_seed = rng.gen::<u64>();
            let (loss, grads) = {
                let mut bp = Backprop::new(&model);
                let out = bp.forward(&xs, Mode::Train, dropout_seed)?;
                correct += hits(&out, &ys);
                bp.backward_bce(&ys)?
            };
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut model, &grads);
        }

        let (val_loss, val_acc) = if n_val > 0 {
            let out = model.predict_batch(val_x)?;
            (
                Some(bce_batch_loss(&out, val_y)),
                Some(hits(&out, val_y) as f64 / n_val as f64),
            )
        } else {
            (None, None)
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n_train as f64,
            train_acc: correct as f64 / n_train as f64,
            val_loss,
            val_acc,
        };
        if !record.train_loss.is_finite() {
            return Err(Error::State(format!(
                "training diverged at epoch {}",
                epoch + 1
            )));
        }
        history.push(record);
    }
    Ok((model, history))
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.train_loss,
            r.train_acc,
            opt(r.val_loss),
            opt(r.val_acc)
        ));
    }
    out
}
