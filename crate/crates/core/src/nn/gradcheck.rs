//! Central finite-difference verification of backpropagated gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Mode};
use super::model::{build_cnn_with, build_mlp_with, Architecture, Backprop, Gradients, NetModel};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const MAX_RELATIVE_ERROR: f64 = 1e-4;

// Keeps the relative error meaningful when both gradients are ~0.
const DENOM_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    /// e.g. "layer0.weights"
    pub name: String,
    pub params: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < MAX_RELATIVE_ERROR
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

/// Compares [`Backprop::backward_bce`] against central differences of the
/// batch loss for every parameter. Dropout masks are held fixed by reusing
/// `seed` for every forward pass. `tamper` may alter the analytic gradients
/// before comparison (used as a negative control).
pub fn check_gradients(
    model: &NetModel,
    inputs: &[Tensor],
    labels: &[u8],
    seed: u64,
    tamper: impl FnOnce(&mut Gradients),
) -> Result<GradCheckReport> {
    let mut analytic = {
        let mut bp = Backprop::new(model);
        bp.forward(inputs, Mode::Train, seed)?;
        bp.backward_bce(labels)?.1
    };
    tamper(&mut analytic);

    let names: Vec<String> = model
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.param_count() > 0)
        .flat_map(|(i, _)| [format!("layer{i}.weights"), format!("layer{i}.bias")])
        .collect();

    let mut probe = model.clone();
    let mut groups = Vec::new();
    for (gi, (name, grad)) in names.iter().zip(analytic.slices()).enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..grad.len() {
            let orig = probe.params_mut()[gi][k];
            probe.params_mut()[gi][k] = orig + FD_STEP;
            let up = probe.batch_loss(inputs, labels, Mode::Train, seed)?;
            probe.params_mut()[gi][k] = orig - FD_STEP;
            let down = probe.batch_loss(inputs, labels, Mode::Train, seed)?;
            probe.params_mut()[gi][k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grad[k], numeric));
        }
        groups.push(GroupError {
            name: name.clone(),
            params: grad.len(),
            max_relative_error: worst,
        });
    }
    Ok(GradCheckReport { groups })
}

/// Small instance of either network with a random batch, sized so a full
/// per-parameter check runs in well under a second.
pub fn tiny_instance(arch: Architecture, seed: u64) -> Result<(NetModel, Vec<Tensor>, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (model, shape) = match arch {
        Architecture::Mlp => (build_mlp_with(8, &[6, 5], seed)?, vec![8]),
        Architecture::Cnn => (build_cnn_with(8, 4, &[3, 3, 4], 0.5, seed)?, vec![8, 8, 4]),
    };
    let n: usize = shape.iter().product();
    let batch = 3;
    let inputs = (0..batch)
        .map(|_| {
            Tensor::new(
                shape.clone(),
                (0..n).map(|_| rng.gen_range(0.0..1.0)).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..batch).map(|i| (i % 2) as u8).collect();
    Ok((randomize_biases(model, &mut rng), inputs, labels))
}

// Zero biases put many ReLU inputs exactly on the kink; nudge them off it.
fn randomize_biases(mut model: NetModel, rng: &mut impl Rng) -> NetModel {
    let has_params: Vec<bool> = model.layers().iter().map(|l| l.param_count() > 0).collect();
    let mut params = model.params_mut();
    let mut gi = 0;
    for p in has_params {
        if p {
            for b in params[gi + 1].iter_mut() {
                *b = rng.gen_range(-0.1..0.1);
            }
            gi += 2;
        }
    }
    drop(params);
    debug_assert!(model.layers().iter().any(|l| matches!(l, Layer::Sigmoid)));
    model
}
