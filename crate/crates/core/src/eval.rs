//! Accuracy, confusion matrices, ROC curves and AUC.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A classifier score paired with its true label (0 = ham, 1 = spam).
pub type Scored = (f64, u8);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::InvalidArgument(
            "accuracy of an empty confusion matrix".into(),
        )),
        n => Ok((cm.tp + cm.tn) as f64 / n as f64),
    }
}

/// Scores at or above `threshold` are predicted spam.
pub fn confusion_at(scores: &[Scored], threshold: f64) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for &(s, y) in scores {
        match (s >= threshold, y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    cm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (fpr, tpr) pairs from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn class_counts(scores: &[Scored]) -> Result<(usize, usize)> {
    let pos = scores.iter().filter(|s| s.1 == 1).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument(format!(
            "ROC needs both classes, got {pos} spam and {neg} ham scores"
        )));
    }
    Ok((pos, neg))
}

/// ROC curve with one step per distinct score (descending). Tied scores
/// move both rates in a single step, so ties contribute a diagonal segment.
pub fn roc(scores: &[Scored]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores)?;
    if scores.iter().any(|s| s.0.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (px, py) = *points.last().unwrap();
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x - px) * (y + py) / 2.0;
        points.push((x, y));
    }
    Ok(RocCurve { points, auc })
}

/// Probability that a random spam score beats a random ham score, ties
/// counting one half. Quadratic; meant as a cross-check for [`roc`].
pub fn auc_pairwise(scores: &[Scored]) -> Result<f64> {
    let (pos, neg) = class_counts(scores)?;
    let spam: Vec<f64> = scores.iter().filter(|s| s.1 == 1).map(|s| s.0).collect();
    let ham: Vec<f64> = scores.iter().filter(|s| s.1 != 1).map(|s| s.0).collect();
    let mut wins = 0.0;
    for &s in &spam {
        for &h in &ham {
            if s > h {
                wins += 1.0;
            } else if s == h {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos * neg) as f64)
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &curve.points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}
