//! Binary support vector machine trained with simplified SMO.
//!
//! Labels arrive as {0, 1} and are mapped to {-1, +1} only inside this
//! module. Training caches the full kernel matrix, which is fine at the
//! corpus sizes this crate targets (a few thousand samples).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rbf gamma must be positive, got {gamma}"
            )));
        }
        Ok(KernelSpec::Rbf { gamma })
    }

    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

pub fn kernel_eval(a: &[f64], b: &[f64], k: &KernelSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "kernel operands have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(k.eval_unchecked(a, b))
}

/// The "scale" heuristic: 1 / (feature_length * variance of all values).
pub fn default_gamma(features: &[Vec<f64>]) -> f64 {
    let d = features.first().map_or(1, |f| f.len()).max(1);
    let n = (features.len() * d) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = features.iter().flatten().sum::<f64>() / n;
    let var = features
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0 / d as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoParams {
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    pub duals: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
}

impl SvmModel {
    pub fn feature_len(&self) -> Option<usize> {
        self.support_vectors.first().map(Vec::len)
    }

    /// Signed distance-like score; positive means spam.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let mut f = self.bias;
        for (sv, d) in self.support_vectors.iter().zip(&self.duals) {
            f += d * kernel_eval(sv, x, &self.kernel)?;
        }
        Ok(f)
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.decision(x)? >= 0.0))
    }
}

pub fn decision(model: &SvmModel, x: &[f64]) -> Result<f64> {
    model.decision(x)
}

/// Full dual solution, kept alongside the compact model for verification.
#[derive(Clone, Debug)]
pub struct SmoSolution {
    pub model: SvmModel,
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub passes: usize,
}

// Guard against non-terminating runs on degenerate data.
const MAX_TOTAL_PASSES: usize = 20_000;

struct SmoState<'a> {
    gram: &'a [Vec<f64>],
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    b: f64,
    err: Vec<f64>,
}

impl SmoState<'_> {
    /// Re-derives b from the current alphas: the mean over free vectors, or
    /// the middle of the interval the bounded vectors allow when none are free.
    fn refit_bias(&mut self) {
        let eps = 1e-8 * self.c;
        let (mut sum, mut free) = (0.0, 0usize);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..self.alpha.len() {
            // y_k - g_k, where g_k is the decision value without bias
            let target = -(self.err[k] - self.b);
            let a = self.alpha[k];
            if a > eps && a < self.c - eps {
                sum += target;
                free += 1;
            } else if (a <= eps) == (self.y[k] > 0.0) {
                lo = lo.max(target);
            } else {
                hi = hi.min(target);
            }
        }
        let b = if free > 0 {
            sum / free as f64
        } else if lo.is_finite() && hi.is_finite() {
            (lo + hi) / 2.0
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            self.b
        };
        let db = b - self.b;
        for e in &mut self.err {
            *e += db;
        }
        self.b = b;
    }

    /// Jointly optimizes alpha_i and alpha_j. Returns |delta alpha_j| when the
    /// pair moved.
    fn take_step(&mut self, i: usize, j: usize) -> Option<f64> {
        let (gram, y, c) = (self.gram, self.y, self.c);
        let (ei, ej) = (self.err[i], self.err[j]);
        let (ai_old, aj_old) = (self.alpha[i], self.alpha[j]);
        let (lo, hi) = if y[i] != y[j] {
            ((aj_old - ai_old).max(0.0), (c + aj_old - ai_old).min(c))
        } else {
            ((ai_old + aj_old - c).max(0.0), (ai_old + aj_old).min(c))
        };
        if lo >= hi {
            return None;
        }
        let eta = 2.0 * gram[i][j] - gram[i][i] - gram[j][j];
        if eta >= 0.0 {
            return None;
        }
        let aj = (aj_old - y[j] * (ei - ej) / eta).clamp(lo, hi);
        // Tiny moves are noise, except when they finish pinning a
        // multiplier to the box.
        let at_bound = (aj == lo || aj == hi) && aj != aj_old;
        if (aj - aj_old).abs() < 1e-5 && !at_bound {
            return None;
        }
        let snap = |a: f64| {
            let eps = 1e-8 * c;
            if a < eps {
                0.0
            } else if a > c - eps {
                c
            } else {
                a
            }
        };
        let aj = snap(aj);
        // round-off can push ai a hair outside the box
        let ai = snap(ai_old + y[i] * y[j] * (aj_old - aj));
        let (dai, daj) = (ai - ai_old, aj - aj_old);

        let b1 = self.b - ei - y[i] * dai * gram[i][i] - y[j] * daj * gram[i][j];
        let b2 = self.b - ej - y[i] * dai * gram[i][j] - y[j] * daj * gram[j][j];
        let b_new = if ai > 0.0 && ai < c {
            b1
        } else if aj > 0.0 && aj < c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let db = b_new - self.b;
        for (k, e) in self.err.iter_mut().enumerate() {
            *e += y[i] * dai * gram[i][k] + y[j] * daj * gram[j][k] + db;
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        self.b = b_new;
        Some(daj.abs())
    }
}

pub fn smo_train(
    features: &[Vec<f64>],
    labels: &[u8],
    kernel: KernelSpec,
    params: &SmoParams,
) -> Result<SvmModel> {
    smo_solve(features, labels, kernel, params).map(|s| s.model)
}

pub fn smo_solve(
    features: &[Vec<f64>],
    labels: &[u8],
    kernel: KernelSpec,
    params: &SmoParams,
) -> Result<SmoSolution> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n = features.len();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::InvalidArgument(format!(
            "SVM training needs both classes, got {pos} spam of {n} samples"
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::Shape(format!(
            "feature lengths {} and {} differ",
            dim,
            f.len()
        )));
    }
    if !(params.c > 0.0) || !(params.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need C > 0 and tol > 0, got C={} tol={}",
            params.c, params.tol
        )));
    }
    if let KernelSpec::Rbf { gamma } = kernel {
        KernelSpec::rbf(gamma)?;
    }

    let y: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect();
    let gram: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| kernel.eval_unchecked(&features[i], &features[j]))
                .collect()
        })
        .collect();

    let c = params.c;
    let tol = params.tol;
    let mut st = SmoState {
        gram: &gram,
        y: &y,
        c,
        alpha: vec![0.0; n],
        b: 0.0,
        // f(x_k) - y_k
        err: y.iter().map(|yk| -yk).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut quiet = 0;
    let mut passes = 0;
    while quiet < params.max_passes && passes < MAX_TOTAL_PASSES {
        passes += 1;
        let mut changed = 0;
        for i in 0..n {
            let ri = st.err[i] * y[i];
            if !((ri < -tol && st.alpha[i] < c) || (ri > tol && st.alpha[i] > 0.0)) {
                continue;
            }
            // Platt's second choice: the partner with the largest error gap,
            // then every other sample from a random starting point.
            let ei = st.err[i];
            let best = (0..n)
                .filter(|&k| k != i)
                .max_by(|&a, &b| (ei - st.err[a]).abs().total_cmp(&(ei - st.err[b]).abs()))
                .expect("n >= 2");
            let start = rng.gen_range(0..n);
            let step = st.take_step(i, best).or_else(|| {
                (0..n)
                    .map(|k| (start + k) % n)
                    .filter(|&j| j != i && j != best)
                    .find_map(|j| st.take_step(i, j))
            });
            if step.is_some() {
                changed += 1;
            }
        }
        st.refit_bias();
        if changed == 0 {
            quiet += 1;
        } else {
            quiet = 0;
        }
    }
    let (alpha, b) = (st.alpha, st.b);

    let (mut support_vectors, mut duals) = (Vec::new(), Vec::new());
    for k in 0..n {
        if alpha[k] > tol {
            support_vectors.push(features[k].clone());
            duals.push(alpha[k] * y[k]);
        }
    }
    Ok(SmoSolution {
        model: SvmModel {
            support_vectors,
            duals,
            bias: b,
            kernel,
            c,
        },
        alphas: alpha,
        bias: b,
        passes,
    })
}

/// Largest KKT violation of a dual solution, measured on y·f(x) with the
/// full (untruncated) alpha vector.
pub fn kkt_violation(features: &[Vec<f64>], labels: &[u8], sol: &SmoSolution) -> f64 {
    let kernel = sol.model.kernel;
    let c = sol.model.c;
    let y: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect();
    // alphas this close to a bound count as on it
    let eps = 1e-8 * c;
    let mut worst: f64 = 0.0;
    for k in 0..features.len() {
        let f: f64 = sol.bias
            + (0..features.len())
                .filter(|&i| sol.alphas[i] != 0.0)
                .map(|i| sol.alphas[i] * y[i] * kernel.eval_unchecked(&features[i], &features[k]))
                .sum::<f64>();
        let m = y[k] * f;
        let a = sol.alphas[k];
        let v = if a <= eps {
            (1.0 - m).max(0.0)
        } else if a >= c - eps {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
