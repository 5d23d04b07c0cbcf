use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::persist::{check_version, to_json, FORMAT_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: String,
    pub dataset: String,
    pub classifier: String,
    pub feature_kind: String,
    /// "test_split" after training, "full_corpus" for standalone evaluation.
    pub evaluated_on: String,
    pub samples: usize,
    pub threshold: f64,
    pub accuracy: f64,
    /// Absent when the evaluated samples hold a single class.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub config_hash: String,
    pub config: ExperimentConfig,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let bytes = to_json(cfg)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

impl EvalReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        to_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::format("report", e))?;
        check_version(&value)?;
        serde_json::from_value(value).map_err(|e| Error::format("report", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => {
                Error::format(format!("report {}", path.display()), message)
            }
            other => other,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub dataset: String,
    pub classifier: String,
    pub feature_kind: String,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// One row per distinct configuration, best accuracy first.
pub fn compare(reports: &[EvalReport]) -> Result<ComparisonTable> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument(
            "compare needs at least one report".into(),
        ));
    }
    if let Some(r) = reports.iter().find(|r| r.format_version != FORMAT_VERSION) {
        return Err(Error::Version {
            found: r.format_version.clone(),
            expected: FORMAT_VERSION.into(),
        });
    }
    let mut seen = HashSet::new();
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .filter(|r| seen.insert(r.config_hash.clone()))
        .map(|r| ComparisonRow {
            dataset: r.dataset.clone(),
            classifier: r.classifier.clone(),
            feature_kind: r.feature_kind.clone(),
            accuracy: r.accuracy,
            auc: r.auc,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.accuracy
            .partial_cmp(&a.accuracy)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.dataset.cmp(&b.dataset))
            .then_with(|| a.classifier.cmp(&b.classifier))
            .then_with(|| a.feature_kind.cmp(&b.feature_kind))
    });
    Ok(ComparisonTable { rows })
}

fn fmt_auc(auc: Option<f64>, digits: usize) -> String {
    auc.map(|a| format!("{a:.digits$}"))
        .unwrap_or_else(|| "-".into())
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let header = ["dataset", "classifier", "feature", "accuracy", "auc"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.dataset.clone(),
                    r.classifier.clone(),
                    r.feature_kind.clone(),
                    format!("{:.4}", r.accuracy),
                    fmt_auc(r.auc, 4),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |row: &[String]| -> String {
            row.iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&header.map(String::from));
        out.push('\n');
        for row in &cells {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,classifier,feature_kind,accuracy,auc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.dataset,
                r.classifier,
                r.feature_kind,
                r.accuracy,
                r.auc.map(|a| a.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}
