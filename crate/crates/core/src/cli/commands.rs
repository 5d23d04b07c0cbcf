use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ClassifierKind, ExperimentConfig};
use super::report::{compare, config_hash, ComparisonTable, EvalReport};
use crate::dataset::{self, Label, LabeledSet, OverlayConfig, TRAIN_FRACTION};
use crate::error::{Error, Result};
use crate::eval::{self, accuracy, confusion_at};
use crate::fsutil::write_atomic;
use crate::imaging::{FeatureKind, FeatureSpec};
use crate::nn::{self, gradcheck, Architecture, EpochRecord, Tensor};
use crate::persist::{net_input, Classifier, SavedModel, FORMAT_VERSION};
use crate::svm;

pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const ROC_FILE: &str = "roc.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const EVAL_ROC_FILE: &str = "eval_roc.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifact {
    pub model: PathBuf,
    pub report: PathBuf,
    /// Only for neural networks.
    pub history: Option<PathBuf>,
    /// Absent when the test split holds a single class.
    pub roc: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub artifact: RunArtifact,
    pub report: EvalReport,
    pub history: Vec<EpochRecord>,
}

fn require_both_classes(set: &LabeledSet, what: &str) -> Result<()> {
    let spam = set.labels.iter().filter(|&&l| l == 1).count();
    if spam == 0 || spam == set.len() {
        return Err(Error::InvalidArgument(format!(
            "{what} needs both ham and spam images, found {spam} spam of {}",
            set.len()
        )));
    }
    Ok(())
}

fn net_inputs(model: &nn::NetModel, set: &LabeledSet) -> Result<Vec<Tensor>> {
    set.features.iter().map(|f| net_input(model, f)).collect()
}

fn fit(cfg: &ExperimentConfig, train: &LabeledSet) -> Result<(Classifier, Vec<EpochRecord>)> {
    match cfg.classifier {
        ClassifierKind::Svm => {
            let vectors: Vec<Vec<f64>> = train.features.iter().map(|f| f.to_vector()).collect();
            let kernel = cfg.svm.kernel_spec(|| svm::default_gamma(&vectors))?;
            let model = svm::smo_train(&vectors, &train.labels, kernel, &cfg.smo_params())?;
            Ok((Classifier::Svm(model), Vec::new()))
        }
        ClassifierKind::Mlp | ClassifierKind::Cnn => {
            let spec = cfg.feature_spec();
            let model = if cfg.classifier == ClassifierKind::Mlp {
                nn::build_mlp(spec.vector_len(), cfg.seed)?
            } else {
                nn::build_cnn(spec.side, spec.kind.channels(), cfg.seed)?
            };
            let inputs = net_inputs(&model, train)?;
            let tc = nn::TrainConfig {
                rng_seed: cfg.seed,
                ..cfg.train
            };
            let (model, history) = nn::train(model, &inputs, &train.labels, &tc)?;
            Ok((Classifier::Net(model), history))
        }
    }
}

fn score_all(classifier: &Classifier, set: &LabeledSet) -> Result<Vec<eval::Scored>> {
    set.features
        .par_iter()
        .zip(set.labels.par_iter())
        .map(|(f, &y)| Ok((classifier.score(f)?, y)))
        .collect()
}

/// Scores, confusion matrix, accuracy and (when both classes are present) ROC.
fn evaluate(
    classifier: &Classifier,
    set: &LabeledSet,
    dataset: &str,
    evaluated_on: &str,
    config: ExperimentConfig,
) -> Result<(EvalReport, Option<eval::RocCurve>)> {
    let scores = score_all(classifier, set)?;
    let threshold = classifier.threshold();
    let cm = confusion_at(&scores, threshold);
    let roc = eval::roc(&scores).ok();
    let report = EvalReport {
        format_version: FORMAT_VERSION.to_string(),
        dataset: dataset.to_string(),
        classifier: classifier.name().to_string(),
        feature_kind: config.feature_kind.to_string(),
        evaluated_on: evaluated_on.to_string(),
        samples: set.len(),
        threshold,
        accuracy: accuracy(&cm)?,
        auc: roc.as_ref().map(|r| r.auc),
        confusion: cm,
        config_hash: config_hash(&config)?,
        config,
    };
    Ok((report, roc))
}

/// Scan → featurize → 70/30 split → train → evaluate on the test split →
/// write model, report, ROC and (for networks) epoch history.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let corpus = dataset::scan_corpus(&cfg.dataset_root)?;
    let spec = cfg.feature_spec();
    let data = dataset::featurize(&corpus, spec.kind, spec.side, &spec.canny)?;
    require_both_classes(&data, "training")?;

    let plan = dataset::split(data.len(), TRAIN_FRACTION, cfg.seed)?;
    let train = data.subset(&plan.train_indices);
    let test = data.subset(&plan.test_indices);
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} images is too small for a 70/30 split",
            data.len()
        )));
    }
    require_both_classes(&train, "the training split")?;

    let (classifier, history) = fit(cfg, &train)?;
    let embedded = cfg.clone();
    let (report, roc) = evaluate(
        &classifier,
        &test,
        &corpus.name,
        "test_split",
        embedded.clone(),
    )?;

    let saved = SavedModel {
        classifier,
        feature: spec,
        training_config: Some(
            serde_json::to_value(&embedded).map_err(|e| Error::format("config", e))?,
        ),
    };
    let out = &cfg.output_dir;
    let artifact = RunArtifact {
        model: out.join(MODEL_FILE),
        report: out.join(REPORT_FILE),
        history: (!history.is_empty()).then(|| out.join(HISTORY_FILE)),
        roc: roc.as_ref().map(|_| out.join(ROC_FILE)),
    };
    saved.save(&artifact.model)?;
    if let (Some(path), Some(curve)) = (&artifact.roc, &roc) {
        write_atomic(path, eval::roc_csv(curve).as_bytes())?;
    }
    if let Some(path) = &artifact.history {
        write_atomic(path, nn::history_csv(&history).as_bytes())?;
    }
    write_atomic(&artifact.report, &report.to_json()?)?;
    Ok(TrainOutcome {
        artifact,
        report,
        history,
    })
}

/// Reads the configuration embedded in a report so a run can be repeated.
pub fn config_from_report(path: &Path) -> Result<ExperimentConfig> {
    Ok(EvalReport::load(path)?.config)
}

#[derive(Clone, Debug, Default)]
pub struct FeatureOverrides {
    pub kind: Option<FeatureKind>,
    pub side: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub roc_path: Option<PathBuf>,
}

/// Scores every image under `dataset_root` with a saved model.
pub fn cmd_eval(
    model_path: &Path,
    dataset_root: &Path,
    overrides: &FeatureOverrides,
    output_dir: &Path,
) -> Result<EvalOutcome> {
    let saved = SavedModel::load(model_path)?;
    let spec = FeatureSpec {
        kind: overrides.kind.unwrap_or(saved.feature.kind),
        side: overrides.side.unwrap_or(saved.feature.side),
        canny: saved.feature.canny,
    };
    let expected = saved.classifier.input_shape(&saved.feature);
    let produced = match &saved.classifier {
        Classifier::Net(n) if n.architecture() == Architecture::Cnn => {
            vec![spec.side, spec.side, spec.kind.channels()]
        }
        _ => vec![spec.vector_len()],
    };
    if expected != produced {
        return Err(Error::Shape(format!(
            "model {} expects input {expected:?} but {} features at side {} give {produced:?}",
            model_path.display(),
            spec.kind,
            spec.side
        )));
    }

    let corpus = dataset::scan_corpus(dataset_root)?;
    let data = dataset::featurize(&corpus, spec.kind, spec.side, &spec.canny)?;

    let mut config: ExperimentConfig = match &saved.training_config {
        Some(v) => {
            serde_json::from_value(v.clone()).map_err(|e| Error::format("embedded config", e))?
        }
        None => ExperimentConfig {
            classifier: match saved.classifier.name() {
                "svm" => ClassifierKind::Svm,
                "mlp" => ClassifierKind::Mlp,
                _ => ClassifierKind::Cnn,
            },
            ..ExperimentConfig::default()
        },
    };
    config.dataset_root = dataset_root.to_path_buf();
    config.feature_kind = spec.kind;
    config.side = spec.side;

    let (report, roc) = evaluate(
        &saved.classifier,
        &data,
        &corpus.name,
        "full_corpus",
        config,
    )?;
    let report_path = output_dir.join(EVAL_REPORT_FILE);
    let roc_path = roc.as_ref().map(|_| output_dir.join(EVAL_ROC_FILE));
    write_atomic(&report_path, &report.to_json()?)?;
    if let (Some(p), Some(curve)) = (&roc_path, &roc) {
        write_atomic(p, eval::roc_csv(curve).as_bytes())?;
    }
    Ok(EvalOutcome {
        report,
        report_path,
        roc_path,
    })
}

/// Builds a challenge corpus from the spam images under `spam_root` and the
/// ham images under `ham_root`. Returns the manifest path.
pub fn cmd_synth(
    spam_root: &Path,
    ham_root: &Path,
    cfg: &OverlayConfig,
    out_dir: &Path,
) -> Result<PathBuf> {
    let spam = dataset::scan_corpus(spam_root)?;
    let ham = dataset::scan_corpus(ham_root)?;
    if spam.count(Label::Spam) == 0 {
        return Err(Error::InvalidArgument(format!(
            "no spam images under {}/spam",
            spam_root.display()
        )));
    }
    if ham.count(Label::Ham) == 0 {
        return Err(Error::InvalidArgument(format!(
            "no ham images under {}/ham",
            ham_root.display()
        )));
    }
    dataset::synthesize_challenge(&spam, &ham, cfg, out_dir)?;
    Ok(out_dir.join(dataset::MANIFEST_FILE))
}

/// Finite-difference check of a small instance of `arch`. When `corrupt` is
/// set, one analytic gradient entry is perturbed first; the check must fail.
pub fn cmd_gradcheck(
    arch: Architecture,
    seed: u64,
    corrupt: bool,
) -> Result<gradcheck::GradCheckReport> {
    let (model, inputs, labels) = gradcheck::tiny_instance(arch, seed)?;
    gradcheck::check_gradients(&model, &inputs, &labels, seed, |g| {
        if corrupt {
            if let Some(layer) = g.layers.iter_mut().find(|l| !l.weights.is_empty()) {
                layer.weights[0] += 1e-2 + 0.5 * layer.weights[0].abs();
            }
        }
    })
}

pub fn cmd_compare(report_paths: &[PathBuf]) -> Result<ComparisonTable> {
    let reports = report_paths
        .iter()
        .map(|p| EvalReport::load(p))
        .collect::<Result<Vec<_>>>()?;
    compare(&reports)
}
