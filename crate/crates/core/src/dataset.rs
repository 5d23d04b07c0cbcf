//! Corpus ingestion, seeded train/test splits, and synthesis of
//! challenge-style spam by overlaying spam images onto ham images.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::imaging::{self, CannyParams, FeatureKind, FeatureTensor, ImageBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Ham,
    Spam,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Ham => 0,
            Label::Spam => 1,
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Ham => "ham",
            Label::Spam => "spam",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub entries: Vec<CorpusEntry>,
    /// Files under ham/ or spam/ that were not JPEG or PNG.
    pub skipped: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &CorpusEntry> {
        self.entries.iter().filter(move |e| e.label == label)
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        .unwrap_or(false)
}

/// Lists `<root>/ham/*` and `<root>/spam/*` images in path order.
pub fn scan_corpus(root: &Path) -> Result<Corpus> {
    let meta = fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(
                std::io::ErrorKind::NotADirectory,
                "corpus root is not a directory",
            ),
        ));
    }
    let mut entries = Vec::new();
    let mut skipped = 0;
    for label in [Label::Ham, Label::Spam] {
        let dir = root.join(label.dir_name());
        if !dir.is_dir() {
            continue;
        }
        for item in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let item = item.map_err(|e| Error::io(&dir, e))?;
            let path = item.path();
            if !path.is_file() {
                continue;
            }
            if is_image(&path) {
                entries.push(CorpusEntry { path, label });
            } else {
                skipped += 1;
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| root.display().to_string());
    Ok(Corpus {
        name,
        entries,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

pub const TRAIN_FRACTION: f64 = 0.70;

/// Fisher–Yates shuffle of `0..n`; the first ⌊fraction·n⌋ go to training.
pub fn split(n: usize, train_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in [0,1], got {train_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the epsilon keeps e.g. 0.7 * 10 from flooring to 6
    let cut = ((train_fraction * n as f64) + 1e-9).floor() as usize;
    let test_indices = idx.split_off(cut.min(n));
    Ok(SplitPlan {
        train_indices: idx,
        test_indices,
        seed,
    })
}

/// Features plus 0/1 labels, parallel to the corpus entries they came from.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub features: Vec<FeatureTensor>,
    pub labels: Vec<u8>,
    pub sources: Vec<PathBuf>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sources: indices.iter().map(|&i| self.sources[i].clone()).collect(),
        }
    }
}

/// Decodes and featurizes every corpus image, in corpus order.
pub fn featurize(
    corpus: &Corpus,
    kind: FeatureKind,
    side: usize,
    canny: &CannyParams,
) -> Result<LabeledSet> {
    let features = corpus
        .entries
        .par_iter()
        .map(|e| {
            let img = imaging::decode_file(&e.path)?;
            imaging::make_feature(&img, kind, side, canny)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledSet {
        features,
        labels: corpus.entries.iter().map(|e| e.label.as_u8()).collect(),
        sources: corpus.entries.iter().map(|e| e.path.clone()).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayMode {
    Weighted,
    Masked,
}

impl fmt::Display for OverlayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlayMode::Weighted => "weighted",
            OverlayMode::Masked => "masked",
        })
    }
}

impl FromStr for OverlayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(OverlayMode::Weighted),
            "masked" => Ok(OverlayMode::Masked),
            other => Err(Error::Config(format!(
                "unknown overlay mode {other:?} (expected weighted or masked)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayConfig {
    pub mode: OverlayMode,
    /// Spam weight in weighted mode.
    pub alpha: f64,
    /// Max per-channel distance from the background color, masked mode.
    pub background_tolerance: u8,
    pub seed: u64,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            mode: OverlayMode::Weighted,
            alpha: 0.4,
            background_tolerance: 24,
            seed: 0,
        }
    }
}

impl OverlayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn as_rgb(img: &ImageBuffer) -> Result<ImageBuffer> {
    match img.channels() {
        3 => Ok(img.clone()),
        1 => ImageBuffer::new(
            img.width(),
            img.height(),
            3,
            img.data().iter().flat_map(|&v| [v, v, v]).collect(),
        ),
        c => Err(Error::InvalidArgument(format!(
            "overlay needs RGB or gray input, got {c} channels"
        ))),
    }
}

fn fit_to(spam: &ImageBuffer, ham: &ImageBuffer) -> Result<(ImageBuffer, ImageBuffer)> {
    let ham = as_rgb(ham)?;
    let spam = imaging::resize(&as_rgb(spam)?, ham.width(), ham.height())?;
    Ok((spam, ham))
}

/// `round(alpha·spam + (1−alpha)·ham)` per sample, spam resized to the ham size.
pub fn overlay_weighted(spam: &ImageBuffer, ham: &ImageBuffer, alpha: f64) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in [0,1], got {alpha}"
        )));
    }
    let (spam, ham) = fit_to(spam, ham)?;
    let data = spam
        .data()
        .iter()
        .zip(ham.data())
        .map(|(&s, &h)| (alpha * s as f64 + (1.0 - alpha) * h as f64).round() as u8)
        .collect();
    ImageBuffer::new(ham.width(), ham.height(), 3, data)
}

/// Most frequent RGB triple; ties go to the smallest triple.
pub fn modal_color(img: &ImageBuffer) -> [u8; 3] {
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    for p in img.data().chunks_exact(3) {
        *counts.entry([p[0], p[1], p[2]]).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap_or([0, 0, 0])
}

/// Replaces the spam image's background (pixels within `tolerance` of its
/// modal color) with the ham image, keeping the remaining spam pixels.
pub fn overlay_masked(spam: &ImageBuffer, ham: &ImageBuffer, tolerance: u8) -> Result<ImageBuffer> {
    let (spam, ham) = fit_to(spam, ham)?;
    let bg = modal_color(&spam);
    let data = spam
        .data()
        .chunks_exact(3)
        .zip(ham.data().chunks_exact(3))
        .flat_map(|(s, h)| {
            let dist = (0..3).map(|c| s[c].abs_diff(bg[c])).max().unwrap_or(0);
            let src = if dist <= tolerance { h } else { s };
            [src[0], src[1], src[2]]
        })
        .collect();
    ImageBuffer::new(ham.width(), ham.height(), 3, data)
}

pub fn overlay(spam: &ImageBuffer, ham: &ImageBuffer, cfg: &OverlayConfig) -> Result<ImageBuffer> {
    match cfg.mode {
        OverlayMode::Weighted => overlay_weighted(spam, ham, cfg.alpha),
        OverlayMode::Masked => overlay_masked(spam, ham, cfg.background_tolerance),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative to the output directory.
    pub output: String,
    pub spam_source: String,
    pub ham_source: String,
    pub mode: OverlayMode,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tolerance: Option<u8>,
    pub seed: u64,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Overlays every spam image of `spam_corpus` onto a seeded-random ham image
/// of `ham_corpus`, writing `<out>/spam/*.png`, copying the hams to
/// `<out>/ham/`, and recording one manifest line per synthesized file.
pub fn synthesize_challenge(
    spam_corpus: &Corpus,
    ham_corpus: &Corpus,
    cfg: &OverlayConfig,
    out_dir: &Path,
) -> Result<Corpus> {
    cfg.validate()?;
    let spams: Vec<&CorpusEntry> = spam_corpus.with_label(Label::Spam).collect();
    let hams: Vec<&CorpusEntry> = ham_corpus.with_label(Label::Ham).collect();
    if spams.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "corpus {:?} has no spam images",
            spam_corpus.name
        )));
    }
    if hams.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "corpus {:?} has no ham images",
            ham_corpus.name
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(usize, &CorpusEntry, &CorpusEntry)> = spams
        .iter()
        .enumerate()
        .map(|(k, s)| (k, *s, hams[rng.gen_range(0..hams.len())]))
        .collect();

    let spam_dir = out_dir.join("spam");
    let ham_dir = out_dir.join("ham");
    for d in [&spam_dir, &ham_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let records = pairs
        .par_iter()
        .map(|&(k, spam, ham)| {
            let s = imaging::decode_file(&spam.path)?;
            let h = imaging::decode_file(&ham.path)?;
            let out = overlay(&s, &h, cfg)?;
            let stem = spam
                .path
                .file_stem()
                .map(|s| s.to_string_lossy())
                .unwrap_or_default();
            let name = format!("{k:05}_{stem}.png");
            write_atomic(&spam_dir.join(&name), &out.to_png()?)?;
            Ok(ManifestRecord {
                output: format!("spam/{name}"),
                spam_source: spam.path.display().to_string(),
                ham_source: ham.path.display().to_string(),
                mode: cfg.mode,
                alpha: (cfg.mode == OverlayMode::Weighted).then_some(cfg.alpha),
                tolerance: (cfg.mode == OverlayMode::Masked).then_some(cfg.background_tolerance),
                seed: cfg.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for ham in &hams {
        let name = ham.path.file_name().expect("scanned entries are files");
        let dst = ham_dir.join(name);
        fs::copy(&ham.path, &dst).map_err(|e| Error::io(&dst, e))?;
    }

    let mut manifest = String::new();
    for r in &records {
        manifest.push_str(&serde_json::to_string(r).map_err(|e| Error::format("manifest", e))?);
        manifest.push('\n');
    }
    write_atomic(&out_dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    scan_corpus(out_dir)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format("manifest", e)))
        .collect()
}
