use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imgspam::cli::{self, ExperimentConfig, FeatureOverrides};
use imgspam::dataset::{self, OverlayConfig, OverlayMode};
use imgspam::imaging::{write_feature_csv, CannyParams, FeatureKind};
use imgspam::nn::Architecture;
use imgspam::{Error, Result};

#[derive(Parser)]
#[command(
    name = "imgspam",
    version,
    about = "Image spam detection with SVM, MLP and CNN classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier on a 70/30 split and report test accuracy and AUC.
    Train(TrainArgs),
    /// Score every image of a corpus with a saved model.
    Eval(EvalArgs),
    /// Build a challenge corpus by overlaying ham images onto spam images.
    Synth(SynthArgs),
    /// Check backpropagated gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Tabulate several reports, best accuracy first.
    Compare(CompareArgs),
    /// Write feature vectors of a corpus as CSV rows (label first).
    Featurize(FeaturizeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Repeat the run recorded in an earlier report.
    #[arg(long)]
    from_report: Option<PathBuf>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    feature: Option<String>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    feature: Option<FeatureKind>,
    #[arg(long)]
    side: Option<usize>,
    #[arg(long, short, default_value = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Corpus whose spam/ images are used.
    #[arg(long)]
    spam_root: PathBuf,
    /// Corpus whose ham/ images are used; defaults to the spam corpus.
    #[arg(long)]
    ham_root: Option<PathBuf>,
    #[arg(long, default_value = "weighted")]
    mode: OverlayMode,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    #[arg(long, default_value_t = 24)]
    tolerance: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Mlp,
    Cnn,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "mlp")]
    arch: ArchArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Perturb one analytic gradient entry; the check should then fail.
    #[arg(long)]
    corrupt: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "raw")]
    feature: FeatureKind,
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, short)]
    output: PathBuf,
}

fn train_config(args: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.from_report {
        Some(p) => cli::config_from_report(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.config {
        cfg.apply_file(p)?;
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {o:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    let flags = [
        (
            "dataset_root",
            args.dataset.as_ref().map(|p| p.display().to_string()),
        ),
        ("classifier", args.classifier.clone()),
        ("feature", args.feature.clone()),
        ("side", args.side.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
        (
            "output_dir",
            args.output.as_ref().map(|p| p.display().to_string()),
        ),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn fmt_auc(auc: Option<f64>) -> String {
    auc.map(|a| format!("{a:.4}"))
        .unwrap_or_else(|| "n/a".into())
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let out = cli::cmd_train(&cfg)?;
            let r = &out.report;
            println!(
                "{} {} on {}: accuracy {:.4} auc {} ({} test samples)",
                r.classifier,
                r.feature_kind,
                r.dataset,
                r.accuracy,
                fmt_auc(r.auc),
                r.samples
            );
            println!("model  {}", out.artifact.model.display());
            println!("report {}", out.artifact.report.display());
        }
        Command::Eval(args) => {
            let overrides = FeatureOverrides {
                kind: args.feature,
                side: args.side,
            };
            let out = cli::cmd_eval(&args.model, &args.dataset, &overrides, &args.output)?;
            let r = &out.report;
            println!(
                "{} on {}: accuracy {:.4} auc {} ({} samples)",
                r.classifier,
                r.dataset,
                r.accuracy,
                fmt_auc(r.auc),
                r.samples
            );
            println!("report {}", out.report_path.display());
        }
        Command::Synth(args) => {
            let cfg = OverlayConfig {
                mode: args.mode,
                alpha: args.alpha,
                background_tolerance: args.tolerance,
                seed: args.seed,
            };
            cfg.validate()?;
            let ham_root = args.ham_root.as_ref().unwrap_or(&args.spam_root);
            let manifest = cli::cmd_synth(&args.spam_root, ham_root, &cfg, &args.output)?;
            println!("manifest {}", manifest.display());
        }
        Command::Gradcheck(args) => {
            let arch = match args.arch {
                ArchArg::Mlp => Architecture::Mlp,
                ArchArg::Cnn => Architecture::Cnn,
            };
            let report = cli::cmd_gradcheck(arch, args.seed, args.corrupt)?;
            for g in &report.groups {
                println!(
                    "{:<24} {:>6} params  max rel err {:.3e}",
                    g.name, g.params, g.max_relative_error
                );
            }
            println!("max relative error {:.3e}", report.max_relative_error());
            if !report.passed() {
                eprintln!("gradient check failed");
                return Ok(ExitCode::from(4));
            }
        }
        Command::Compare(args) => {
            let table = cli::cmd_compare(&args.reports)?;
            print!(
                "{}",
                if args.csv {
                    table.to_csv()
                } else {
                    table.to_text()
                }
            );
        }
        Command::Featurize(args) => {
            let corpus = dataset::scan_corpus(&args.dataset)?;
            let set =
                dataset::featurize(&corpus, args.feature, args.side, &CannyParams::default())?;
            let file = File::create(&args.output).map_err(|e| Error::Io {
                path: args.output.clone(),
                source: e,
            })?;
            let rows = set
                .labels
                .iter()
                .zip(&set.features)
                .map(|(&y, f)| (y, f.to_vector()));
            write_feature_csv(BufWriter::new(file), rows).map_err(|e| Error::Io {
                path: args.output.clone(),
                source: e,
            })?;
            println!("{} rows written to {}", set.len(), args.output.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
