use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{CannyParams, FeatureKind, FeatureSpec};
use crate::nn::TrainConfig;
use crate::svm::{KernelSpec, SmoParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Svm,
    Mlp,
    Cnn,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Cnn => "cnn",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ClassifierKind::Svm),
            "mlp" => Ok(ClassifierKind::Mlp),
            "cnn" => Ok(ClassifierKind::Cnn),
            other => Err(Error::Config(format!(
                "unknown classifier {other:?} (expected svm, mlp or cnn)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmSettings {
    pub kernel: KernelKind,
    /// RBF width; `None` picks 1 / (feature_length · feature_variance).
    pub gamma: Option<f64>,
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvmSettings {
    fn default() -> Self {
        let smo = SmoParams::default();
        Self {
            kernel: KernelKind::Rbf,
            gamma: None,
            c: smo.c,
            tol: smo.tol,
            max_passes: smo.max_passes,
        }
    }
}

impl SvmSettings {
    pub fn kernel_spec(&self, scale_gamma: impl FnOnce() -> f64) -> Result<KernelSpec> {
        match self.kernel {
            KernelKind::Linear => Ok(KernelSpec::Linear),
            KernelKind::Rbf => KernelSpec::rbf(self.gamma.unwrap_or_else(scale_gamma)),
        }
    }
}

/// Everything that determines a training run. `output_dir` says where the
/// artifacts go and is not part of the embedded (hashed) configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub classifier: ClassifierKind,
    pub feature_kind: FeatureKind,
    pub side: usize,
    pub allow_any_side: bool,
    pub svm: SvmSettings,
    pub train: TrainConfig,
    pub canny: CannyParams,
    pub seed: u64,
    #[serde(skip, default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::new(),
            classifier: ClassifierKind::Svm,
            feature_kind: FeatureKind::Raw,
            side: 32,
            allow_any_side: false,
            svm: SvmSettings::default(),
            train: TrainConfig::default(),
            canny: CannyParams::default(),
            seed: 0,
            output_dir: default_output_dir(),
        }
    }
}

/// Keys accepted in config files and as `--set key=value` overrides.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset_root",
    "output_dir",
    "classifier",
    "feature",
    "side",
    "allow_any_side",
    "kernel",
    "gamma",
    "c",
    "tol",
    "max_passes",
    "epochs",
    "batch_size",
    "validation_fraction",
    "learning_rate",
    "canny_sigma",
    "canny_kernel",
    "canny_low",
    "canny_high",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value {value:?} for {key}: {e}")))
}

fn config_message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dataset_root" => self.dataset_root = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "classifier" => self.classifier = value.parse()?,
            "feature" | "feature_kind" => self.feature_kind = value.parse()?,
            "side" => self.side = parse(key, value)?,
            "allow_any_side" => self.allow_any_side = parse(key, value)?,
            "kernel" => {
                self.svm.kernel = match value {
                    "linear" => KernelKind::Linear,
                    "rbf" => KernelKind::Rbf,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown kernel {other:?} (expected linear or rbf)"
                        )))
                    }
                }
            }
            "gamma" => {
                self.svm.gamma = match value {
                    "scale" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "c" | "C" => self.svm.c = parse(key, value)?,
            "tol" => self.svm.tol = parse(key, value)?,
            "max_passes" => self.svm.max_passes = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "validation_fraction" => self.train.validation_fraction = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "canny_sigma" => self.canny.gaussian_sigma = parse(key, value)?,
            "canny_kernel" => self.canny.gaussian_kernel_size = parse(key, value)?,
            "canny_low" => self.canny.low_threshold = parse(key, value)?,
            "canny_high" => self.canny.high_threshold = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.train.rng_seed = self.seed;
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown config key {other:?}; known keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), config_message(e))))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, config_message(e))))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_root.as_os_str().is_empty() {
            return Err(Error::Config("dataset_root is not set".into()));
        }
        if !self.allow_any_side && !matches!(self.side, 16 | 32) {
            return Err(Error::Config(format!(
                "side must be 16 or 32 (got {}); pass allow_any_side to override",
                self.side
            )));
        }
        if self.side == 0 {
            return Err(Error::Config("side must be positive".into()));
        }
        self.canny
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.svm.c > 0.0 && self.svm.tol > 0.0) {
            return Err(Error::Config("svm c and tol must be positive".into()));
        }
        if let Some(g) = self.svm.gamma {
            KernelSpec::rbf(g).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec {
            kind: self.feature_kind,
            side: self.side,
            canny: self.canny,
        }
    }

    pub fn smo_params(&self) -> SmoParams {
        SmoParams {
            c: self.svm.c,
            tol: self.svm.tol,
            max_passes: self.svm.max_passes,
            seed: self.seed,
        }
    }
}
